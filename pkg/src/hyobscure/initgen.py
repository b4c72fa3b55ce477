"""Generalization functions and the constraint-aware K-means initializer."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np


class InfeasibleConstraintsError(ValueError):
    """The (k, alpha) / (l, beta) / group-count constraints cannot be met."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GenConstraints:
    """Bounds on users (``k..alpha``) and distinct values (``l..beta``) per group."""

    k: int
    alpha: int
    l: int
    beta: int
    n_groups: int

    def __post_init__(self):
        for name in ("k", "alpha", "l", "beta", "n_groups"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.k > self.alpha:
            raise ValueError(f"k={self.k} exceeds alpha={self.alpha}")
        if self.l > self.beta:
            raise ValueError(f"l={self.l} exceeds beta={self.beta}")


@dataclass(frozen=True)
class GeneralizationFn:
    """Ordered partition of the private domain into contiguous groups.

    ``bounds`` has ``G + 1`` entries over domain indices; group ``g`` holds
    the values ``domain[bounds[g]:bounds[g+1]]``.
    """

    bounds: tuple
    domain: tuple
    centers: tuple = field(default=(), compare=False)
    objective_trace: tuple = field(default=(), compare=False, repr=False)
    converged: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        b = tuple(int(x) for x in self.bounds)
        if len(b) < 2 or b[0] != 0 or b[-1] != len(self.domain):
            raise ValueError("bounds must run from 0 to len(domain)")
        if any(b2 <= b1 for b1, b2 in zip(b, b[1:])):
            raise ValueError("every group must contain at least one domain value")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "domain", tuple(self.domain))

    @property
    def n_groups(self):
        return len(self.bounds) - 1

    @property
    def groups(self):
        """``(lo, hi)`` private values of each group, inclusive."""
        return [(self.domain[a], self.domain[b - 1]) for a, b in zip(self.bounds, self.bounds[1:])]

    @property
    def labels(self):
        return [f"[{lo},{hi}]" for lo, hi in self.groups]

    def group_of_index(self, value_index):
        """Group index for domain indices (scalar or array)."""
        return np.searchsorted(self.bounds, value_index, side="right") - 1

    def assignment(self, value):
        return int(self.group_of_index(self.domain.index(value)))

    def users_per_group(self, value_counts):
        c = np.concatenate([[0], np.cumsum(value_counts)])
        return c[list(self.bounds[1:])] - c[list(self.bounds[:-1])]

    def values_per_group(self, value_counts):
        seen = np.concatenate([[0], np.cumsum(np.asarray(value_counts) > 0)])
        return seen[list(self.bounds[1:])] - seen[list(self.bounds[:-1])]

    def violations(self, value_counts, cons):
        """Human-readable list of broken (k, alpha) / (l, beta) bounds."""
        out = []
        users = self.users_per_group(value_counts)
        vals = self.values_per_group(value_counts)
        for g, label in enumerate(self.labels):
            if not cons.k <= users[g] <= cons.alpha:
                out.append(f"group {label}: {users[g]} users outside [{cons.k},{cons.alpha}]")
            if not cons.l <= vals[g] <= cons.beta:
                out.append(f"group {label}: {vals[g]} values outside [{cons.l},{cons.beta}]")
        return out

    def satisfies(self, value_counts, cons):
        users = self.users_per_group(value_counts)
        vals = self.values_per_group(value_counts)
        return bool(
            np.all((users >= cons.k) & (users <= cons.alpha))
            and np.all((vals >= cons.l) & (vals <= cons.beta))
        )

    def with_bounds(self, bounds):
        return GeneralizationFn(tuple(bounds), self.domain)


def single_group(domain):
    return GeneralizationFn((0, len(domain)), domain)


def singleton_groups(domain):
    return GeneralizationFn(tuple(range(len(domain) + 1)), domain)


@dataclass
class Feasibility:
    ok: bool
    reasons: list
    min_groups: int
    max_groups: int

    def __bool__(self):
        return self.ok


def _count_check(n_users, n_values, cons, n_groups):
    K = n_groups
    reasons = []
    if K * cons.k > n_users:
        reasons.append(
            f"{K} groups x k={cons.k} needs {K * cons.k} users but only {n_users} exist; "
            f"K must be <= {n_users // cons.k}"
        )
    if n_users > K * cons.alpha:
        reasons.append(
            f"{K} groups x alpha={cons.alpha} caps {K * cons.alpha} users < {n_users}; "
            f"K must be >= {math.ceil(n_users / cons.alpha)}"
        )
    if K * cons.l > n_values:
        reasons.append(
            f"{K} groups x l={cons.l} needs {K * cons.l} distinct values but only {n_values} exist"
        )
    if n_values > K * cons.beta:
        reasons.append(
            f"{K} groups x beta={cons.beta} caps {K * cons.beta} distinct values < {n_values}; "
            f"K must be >= {math.ceil(n_values / cons.beta)}"
        )
    return reasons


def feasibility_check(ds, cons):
    """Counting test of the (k, alpha), (l, beta) and group-count bounds."""
    n_users = ds.n_users
    n_values = int(np.count_nonzero(ds.value_counts))
    reasons = _count_check(n_users, n_values, cons, cons.n_groups)
    lo = max(math.ceil(n_users / cons.alpha), math.ceil(n_values / cons.beta))
    hi = min(n_users // cons.k, n_values // cons.l)
    return Feasibility(not reasons, reasons, lo, hi)


# -- the constraint-aware K-means ----------------------------------------------

def _objective(x, n, bounds):
    """Mean squared distance of users to their group centroid."""
    total = 0.0
    for a, b in zip(bounds, bounds[1:]):
        w = n[a:b]
        mu = np.dot(w, x[a:b]) / w.sum()
        total += np.dot(w, (x[a:b] - mu) ** 2)
    return total / n.sum()


def _centers_of(x, n, bounds):
    """Domain value nearest to each group's user-weighted mean (ties to lower)."""
    out = []
    for a, b in zip(bounds, bounds[1:]):
        mu = np.dot(n[a:b], x[a:b]) / n[a:b].sum()
        out.append(a + int(np.argmin(np.abs(x[a:b] - mu))))
    return out


def _assign_pass(x, n, centers, cons):
    """One round of floor-first, cap-respecting assignment.

    Groups start as their center value and grow at their two frontiers, so
    every group stays a contiguous interval.  Returns bounds, or ``None`` if
    the growth gets stuck or a group ends below its floors.
    """
    m = x.size
    K = len(centers)
    owner = np.full(m, -1)
    lo = list(centers)
    hi = list(centers)
    users = [int(n[c]) for c in centers]
    width = [1] * K
    for g, c in enumerate(centers):
        owner[c] = g
    cx = x[centers]
    remaining = m - K

    def candidates(pool):
        best = None
        for g in pool:
            for v in (lo[g] - 1, hi[g] + 1):
                if v < 0 or v >= m or owner[v] != -1:
                    continue
                if users[g] + n[v] > cons.alpha or width[g] + 1 > cons.beta:
                    continue
                key = (abs(x[v] - cx[g]), x[v], g, v)
                if best is None or key < best:
                    best = key
        return best

    while remaining:
        floor = [g for g in range(K) if users[g] < cons.k or width[g] < cons.l]
        pick = candidates(floor) if floor else None
        if pick is None:
            pick = candidates([g for g in range(K) if users[g] < cons.alpha and width[g] < cons.beta])
        if pick is None:
            return None
        _, _, g, v = pick
        owner[v] = g
        lo[g] = min(lo[g], v)
        hi[g] = max(hi[g], v)
        users[g] += int(n[v])
        width[g] += 1
        remaining -= 1
    if any(u < cons.k for u in users) or any(w < cons.l for w in width):
        return None
    return tuple([0] + [lo[g] for g in range(1, K)] + [m])


def _repair(n, K, cons, targets):
    """Feasible contiguous K-partition whose inner cuts are closest to ``targets``.

    Dynamic program over cut positions; returns ``None`` when no contiguous
    partition meets the bounds.
    """
    m = n.size
    csum = np.concatenate([[0], np.cumsum(n)])
    INF = math.inf
    cost = np.full((K + 1, m + 1), INF)
    prev = np.zeros((K + 1, m + 1), dtype=np.int64)
    cost[0, 0] = 0.0
    for j in range(1, K + 1):
        for b in range(1, m + 1):
            pen = 0.0 if j == K else abs(b - targets[j - 1])
            if j == K and b != m:
                continue
            for a in range(max(0, b - cons.beta), b - cons.l + 1):
                if cost[j - 1, a] == INF:
                    continue
                u = csum[b] - csum[a]
                if u < cons.k or u > cons.alpha:
                    continue
                c = cost[j - 1, a] + pen
                if c < cost[j, b]:
                    cost[j, b] = c
                    prev[j, b] = a
    if cost[K, m] == INF:
        return None
    cuts = [m]
    for j in range(K, 0, -1):
        cuts.append(int(prev[j, cuts[-1]]))
    return tuple(reversed(cuts))


def _solve_for_groups(x, n, K, cons, rng, max_outer_iters, max_restarts):
    m = x.size
    part = None
    for _ in range(max_restarts):
        centers = sorted(int(c) for c in rng.choice(m, size=K, replace=False))
        part = _assign_pass(x, n, centers, cons)
        if part is not None:
            break
    if part is None:
        quant = np.searchsorted(np.cumsum(n), np.arange(1, K) * n.sum() / K) + 1
        part = _repair(n, K, cons, quant)
        if part is None:
            return None
    obj = _objective(x, n, part)
    trace = [obj]
    converged = False
    for _ in range(max_outer_iters):
        new = _assign_pass(x, n, _centers_of(x, n, part), cons)
        if new is None or new == part:
            converged = True
            break
        new_obj = _objective(x, n, new)
        if new_obj > obj:
            converged = True
            break
        part, obj = new, new_obj
        trace.append(obj)
    return part, trace, converged


def init_generalization(ds, cons, seed, max_outer_iters=100, max_restarts=20):
    """Initial generalization ``G0`` by constraint-aware K-means over private values.

    Each round seeds every group with a center value and grows groups one
    value at a time, nearest pair first: groups still short of ``k`` users or
    ``l`` values are served before the rest, and no group may pass ``alpha``
    users or ``beta`` values.  Centers are then re-identified and the round
    repeats until the partition stops changing.  If no contiguous partition
    with ``K`` groups exists, ``K`` grows by one up to ``|U| // k``.

    Raises :class:`InfeasibleConstraintsError` before iterating when the
    counting bounds fail.
    """
    report = feasibility_check(ds, cons)
    if not report.ok:
        raise InfeasibleConstraintsError("; ".join(report.reasons), report)
    rng = np.random.default_rng(seed)
    counts = ds.value_counts
    observed = np.flatnonzero(counts > 0)
    x = ds.domain_positions[observed]
    n = counts[observed].astype(np.int64)
    K = cons.n_groups
    k_cap = ds.n_users // cons.k
    while True:
        result = _solve_for_groups(x, n, K, cons, rng, max_outer_iters, max_restarts)
        if result is not None:
            break
        K += 1
        if K > k_cap or _count_check(ds.n_users, observed.size, cons, K):
            raise InfeasibleConstraintsError(
                f"no contiguous partition satisfies the constraints for "
                f"K={cons.n_groups}..{K - 1} groups", report)
    part, trace, converged = result
    if not converged:
        warnings.warn(
            f"initial generalization did not converge in {max_outer_iters} rounds; "
            "returning best partition found", ConvergenceWarning, stacklevel=2)
    full = [0] + [int(observed[b]) for b in part[1:-1]] + [len(ds.private_domain)]
    centers = []
    for a, b in zip(part, part[1:]):
        centers.append(float(np.dot(n[a:b], x[a:b]) / n[a:b].sum()))
    return GeneralizationFn(tuple(full), ds.private_domain, tuple(centers),
                            tuple(trace), converged)


def init_objective(ds, gen):
    """Mean squared distance of users' private values to their group centroid."""
    counts = ds.value_counts
    x = ds.domain_positions
    total = 0.0
    for a, b in zip(gen.bounds, gen.bounds[1:]):
        w = counts[a:b]
        if w.sum() == 0:
            continue
        mu = np.dot(w, x[a:b]) / w.sum()
        total += np.dot(w, (x[a:b] - mu) ** 2)
    return total / counts.sum()
