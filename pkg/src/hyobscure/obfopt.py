"""User clustering and the leakage-minimising obfuscation solver."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dataset import EmpiricalJoint
from .infotheory import (
    check_distance_table,
    leakage_from_tensor,
    leakage_gradient_from_tensor,
    published_joint,
    xlogx,
)


class SolverWarning(UserWarning):
    """The solver stopped at ``max_iters`` before certifying the gap."""


# -- clustering ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClusterModel:
    centroids: np.ndarray
    assignment: np.ndarray
    inertia: float = 0.0

    @property
    def n_clusters(self):
        return self.centroids.shape[0]

    @property
    def sizes(self):
        return np.bincount(self.assignment, minlength=self.n_clusters)

    def members(self, group_of_user=None):
        """User indices per cluster, or per ``(group, cluster)`` pair when a
        group label per user is supplied."""
        if group_of_user is None:
            return [np.flatnonzero(self.assignment == c) for c in range(self.n_clusters)]
        group_of_user = np.asarray(group_of_user)
        out = {}
        for g in np.unique(group_of_user):
            sel = group_of_user == g
            for c in range(self.n_clusters):
                out[int(g), c] = np.flatnonzero(sel & (self.assignment == c))
        return out


def _kmeans_pp(X, k, rng):
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(free[rng.integers(free.size)])
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    return X[chosen].copy()


def _lloyd(X, centroids, max_iter):
    labels = None
    k = centroids.shape[0]
    for _ in range(max_iter):
        new, d2 = _kernels.nearest_centroid(X, centroids)
        # repair empty clusters by splitting the largest one
        sizes = np.bincount(new, minlength=k)
        while np.any(sizes == 0):
            empty = int(np.flatnonzero(sizes == 0)[0])
            big = int(np.argmax(sizes))
            members = np.flatnonzero(new == big)
            far = members[np.argmax(d2[members])]
            new[far] = empty
            d2[far] = 0.0
            sizes = np.bincount(new, minlength=k)
        for c in range(k):
            centroids[c] = X[new == c].mean(axis=0)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    inertia = float(np.sum((X - centroids[labels]) ** 2))
    return labels, centroids, inertia


def cluster_users(ds, n_clusters, seed, n_init=4, max_iter=300):
    """Seeded k-means (k-means++ start, best of ``n_init``) over user features."""
    X = np.ascontiguousarray(getattr(ds, "features", ds), dtype=float)
    n = X.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters must lie in [1, {n}], got {n_clusters}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        labels, cen, inertia = _lloyd(X, _kmeans_pp(X, n_clusters, rng), max_iter)
        if best is None or inertia < best[2]:
            best = (labels, cen, inertia)
    labels, cen, inertia = best
    labels = labels.astype(np.int64)
    labels.setflags(write=False)
    cen.setflags(write=False)
    return ClusterModel(cen, labels, inertia)


# -- obfuscation matrices ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ObfuscationMatrix:
    """Row-stochastic cluster transition table, one ``C x C`` block per group."""

    blocks: np.ndarray
    budget: float = float("nan")
    converged: bool = True
    gap: float = 0.0
    iterations: int = 0
    objective_trace: tuple = field(default=(), repr=False)

    def __post_init__(self):
        b = np.array(self.blocks, dtype=float)
        if b.ndim == 2:
            b = b[None]
        if b.ndim != 3 or b.shape[1] != b.shape[2]:
            raise ValueError("blocks must have shape (groups, clusters, clusters)")
        if np.any(b < -1e-12) or np.any(b > 1 + 1e-12):
            raise ValueError("obfuscation probabilities must lie in [0, 1]")
        rows = b.sum(axis=2)
        if np.any(np.abs(rows - 1.0) > 1e-9):
            raise ValueError("every obfuscation row must sum to 1")
        b = np.clip(b, 0.0, 1.0)
        b.setflags(write=False)
        object.__setattr__(self, "blocks", b)

    @property
    def n_groups(self):
        return self.blocks.shape[0]

    @property
    def n_clusters(self):
        return self.blocks.shape[1]

    @classmethod
    def identity(cls, n_groups, n_clusters, budget=0.0):
        return cls(np.tile(np.eye(n_clusters), (n_groups, 1, 1)), budget)

    def restricted(self, present):
        """Renormalise each row onto clusters present in the row's group.

        ``present[g, c]`` marks clusters with members in group ``g``.  Rows
        with no allowed mass fall back to the diagonal.
        """
        present = np.asarray(present, dtype=bool)
        G, C = self.blocks.shape[:2]
        allowed = present[:, None, :] | np.eye(C, dtype=bool)[None]
        b = np.where(allowed, self.blocks, 0.0)
        s = b.sum(axis=2, keepdims=True)
        eye = np.broadcast_to(np.eye(C), b.shape)
        b = np.where(s > 0, b / np.where(s > 0, s, 1.0), eye)
        return ObfuscationMatrix(b, self.budget, self.converged, self.gap, self.iterations)

    def tiled(self, n_groups):
        """Repeat a single global block for ``n_groups`` groups."""
        if self.n_groups != 1:
            raise ValueError("only a single-block matrix can be tiled")
        return ObfuscationMatrix(np.repeat(self.blocks, n_groups, axis=0), self.budget,
                                 self.converged, self.gap, self.iterations)


def joints_to_tensor(joint_per_group, group_mass=None):
    """Stack conditional joints ``p(c, y | y~)`` into an unnormalised tensor."""
    if isinstance(joint_per_group, np.ndarray):
        P = np.asarray(joint_per_group, dtype=float)
        return P if P.ndim == 3 else P[None]
    tables = [j.probabilities if isinstance(j, EmpiricalJoint) else np.asarray(j, float)
              for j in joint_per_group]
    G = len(tables)
    if group_mass is None:
        group_mass = np.full(G, 1.0 / G)
    group_mass = np.asarray(group_mass, dtype=float)
    C = tables[0].shape[0]
    W = max(t.shape[1] for t in tables)
    P = np.zeros((G, C, W))
    for g, t in enumerate(tables):
        if t.shape[0] != C:
            raise ValueError("all group joints need the same number of clusters")
        P[g, :, :t.shape[1]] = group_mass[g] * t
    return P


def leakage_gradient(obf, joint_per_group, dist=None, group_mass=None):
    """Gradient of the leakage with respect to every block entry ``O[g, c, c_hat]``."""
    P = joints_to_tensor(joint_per_group, group_mass)
    return leakage_gradient_from_tensor(P, getattr(obf, "blocks", obf))


# -- solver ------------------------------------------------------------------

class _LinearOracle:
    """Exact minimiser of ``<A, S>`` over row-stochastic blocks with
    ``sum mass[g,c] * d[c,c_hat] * S[g,c,c_hat] <= budget``.

    Lagrangian relaxation of the budget row: for a multiplier ``lam`` each row
    picks its cheapest column.  Row choices only change at pairwise line
    intersections, so the binding multiplier is found by binary search over
    those breakpoints and one row (or a tied set) is split at it.
    """

    def __init__(self, mass, dist, budget, allowed):
        G, C = mass.shape
        self.shape = (G, C, C)
        self.rows = G * C
        self.d = np.broadcast_to(dist, (G, C, C)).reshape(self.rows, C)
        self.cost = (mass[:, :, None] * dist[None]).reshape(self.rows, C)
        self.blocked = ~allowed.reshape(self.rows, C)
        self.budget = budget
        self._r = np.arange(self.rows)
        self._dc = self.cost[:, :, None] - self.cost[:, None, :]

    def spend(self, S):
        return float(np.sum(self.cost * S.reshape(self.rows, -1)))

    def _choice(self, A, lam):
        val = A + lam * self.cost
        tie = val <= val.min(axis=1, keepdims=True)
        return np.argmin(np.where(tie, self.d, np.inf), axis=1)

    def _total(self, choice):
        return self.cost[self._r, choice].sum()

    def __call__(self, grad):
        A = np.where(self.blocked, np.inf, grad.reshape(self.rows, -1))
        choice = self._choice(A, 0.0)
        S = np.zeros((self.rows, A.shape[1]))
        if self._total(choice) <= self.budget:
            S[self._r, choice] = 1.0
            return S.reshape(self.shape)
        with np.errstate(invalid="ignore"):
            dA = A[:, None, :] - A[:, :, None]
            ok = (self._dc > 0) & (dA > 0) & np.isfinite(dA)
        lams = np.unique(dA[ok] / self._dc[ok])
        if lams.size == 0:
            lams = np.ones(1)
        pts = np.concatenate([[0.0], lams, [2.0 * lams[-1] + 1.0]])
        mids = 0.5 * (pts[:-1] + pts[1:])
        lo, hi = 0, mids.size - 1
        while lo < hi:
            m = (lo + hi) // 2
            if self._total(self._choice(A, mids[m])) <= self.budget:
                hi = m
            else:
                lo = m + 1
        left = self._choice(A, mids[lo - 1]) if lo > 0 else choice
        right = self._choice(A, mids[lo])
        # walk rows from the over-budget choice towards the feasible one
        S[self._r, left] = 1.0
        spent = self._total(left)
        for r in np.flatnonzero(left != right):
            a, b = left[r], right[r]
            saving = self.cost[r, a] - self.cost[r, b]
            excess = spent - self.budget
            if excess <= 0:
                break
            if saving <= 0:
                continue
            t = min(1.0, excess / saving)
            S[r, a] -= t
            S[r, b] += t
            spent -= t * saving
        return S.reshape(self.shape)


def _scores(P, X):
    """``sum_y P[g,c,y] log2 r[g,c_hat,y]`` with ``r`` the published posterior.

    This is the leakage gradient, and for *any* posterior table ``r`` the
    value ``H(Y) + min_S <S, scores>`` bounds the optimum from below, which
    is what makes the Frank-Wolfe gap a duality gap.  Published clusters with
    no mass get the group's value marginal so the bound stays valid.
    """
    Q = published_joint(P, X)
    q = Q.sum(axis=2, keepdims=True)
    marg = P.sum(axis=1, keepdims=True)
    marg = marg / np.maximum(marg.sum(axis=2, keepdims=True), 1e-300)
    r = np.where(q > 0, Q / np.where(q > 0, q, 1.0), marg)
    with np.errstate(divide="ignore"):
        lr = np.where(r > 0, np.log2(np.where(r > 0, r, 1.0)), -1074.0)
    return np.einsum("gcy,gdy->gcd", P, lr)


class _Barrier:
    """Newton steps on ``t * f(X) - sum log X - log(budget - cost . X)``.

    Variables are the allowed entries of rows with mass; each row sums to 1.
    The leakage Hessian is block diagonal over (group, published cluster),
    so the KKT system splits by group except for the single budget row,
    which is folded back in with a rank-one update.  Each group system is
    solved densely in affine-scaled variables ``dx = x * dy``.
    """

    def __init__(self, P, cost, budget, free, active):
        self.P = P
        self.mass = P.sum(axis=2)
        self.cost = cost
        self.budget = budget
        self.free = free
        self.active = active
        self.use_budget = budget > 0 and bool(np.any(cost[free] > 0))
        self.m = int(free.sum()) + int(self.use_budget)
        self.groups = []
        for g in range(P.shape[0]):
            ci, di = np.nonzero(free[g])
            rows = np.flatnonzero(active[g])
            pos = np.full(P.shape[1], -1)
            pos[rows] = np.arange(rows.size)
            self.groups.append((ci, di, rows, pos[ci], di[:, None] == di[None, :]))

    def slack(self, X):
        return self.budget - float(np.sum(self.cost * X)) if self.use_budget else 1.0

    def value(self, X, t):
        x = X[self.free]
        s = self.slack(X)
        if np.any(x <= 0) or s <= 0:
            return np.inf
        return t * leakage_from_tensor(self.P, X) - np.log(x).sum() - np.log(s)

    def direction(self, X, t):
        """Newton direction and squared Newton decrement."""
        P, mass = self.P, self.mass
        Q = published_joint(P, X)
        q = Q.sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.where(Q > 0, np.log2(Q / q[:, :, None]), 0.0)
            iQ = np.where(Q > 0, 1.0 / Q, 0.0)
            iq = np.where(q > 0, 1.0 / q, 0.0)
        grad = np.einsum("gcy,gdy->gcd", P, lr)
        hess = (np.einsum("gcy,gey,gdy->gdce", P, P, iQ)
                - np.einsum("gc,ge,gd->gdce", mass, mass, iq)) / np.log(2.0)
        s = self.slack(X)
        parts = []
        for g, (ci, di, rows, ri, same) in enumerate(self.groups):
            x = X[g, ci, di]
            n, k = x.size, rows.size
            H = t * hess[g, di[:, None], ci[:, None], ci[None, :]] * same
            H = x[:, None] * H * x[None, :]
            H[np.arange(n), np.arange(n)] += 1.0
            gs = x * t * grad[g, ci, di] - 1.0
            us = x * self.cost[g, ci, di] / s
            if self.use_budget:
                gs = gs + us
            K = np.zeros((n + k, n + k))
            K[:n, :n] = H
            K[n + ri, np.arange(n)] = x
            K[np.arange(n), n + ri] = x
            R = np.zeros((n + k, 2))
            R[:n, 0] = -gs
            R[n:, 0] = 1.0 - X[g, rows].sum(axis=1)
            R[:n, 1] = us
            Z = np.linalg.solve(K, R)
            Z += np.linalg.solve(K, R - K @ Z)
            parts.append((Z[:n], x, us, gs))
        alpha = 0.0
        if self.use_budget:
            uz = sum(float(us @ Z[:, 0]) for Z, _, us, _ in parts)
            uv = sum(float(us @ Z[:, 1]) for Z, _, us, _ in parts)
            alpha = uz / (1.0 + uv)
        dX = np.zeros_like(X)
        lam2 = 0.0
        for g, (Z, x, _, gs) in enumerate(parts):
            ci, di = self.groups[g][:2]
            dy = Z[:, 0] - alpha * Z[:, 1]
            dX[g, ci, di] = x * dy
            lam2 -= float(gs @ dy)
        return dX, lam2


def support_mask(P):
    """Allowed targets: clusters with mass in the group, plus the diagonal.

    Rows of empty clusters stay on the diagonal."""
    mass = P.sum(axis=2)
    present = mass > 0
    C = P.shape[1]
    eye = np.eye(C, dtype=bool)[None]
    return np.where(present[:, :, None], present[:, None, :] | eye, eye)


def solve_obfuscation(joint_per_group, dist, budget, tol=1e-6, max_iters=10_000,
                      group_mass=None, restrict_to_support=True, init=None):
    """Leakage-minimising obfuscation blocks under an expected-distance budget.

    ``joint_per_group`` is either a list of per-group conditional joints
    ``p(c, y | y~)`` (weighted by ``group_mass``) or a ``(G, C, W)`` tensor of
    joint masses ``p(c, y, y~)``.  ``init`` optionally warm-starts from
    feasible blocks.  ``max_iters`` caps the Newton steps.

    Stops once the Frank-Wolfe duality gap, from the exact linear oracle over
    the feasible polytope, is at most ``tol`` bits.  The iterates follow the
    log-barrier central path, so every allowed entry stays positive and the
    unbounded slope the leakage has at an empty published cell never bites.
    """
    if budget < 0:
        raise ValueError(f"budget must be non-negative, got {budget}")
    budget = float(budget)
    P = joints_to_tensor(joint_per_group, group_mass)
    G, C, _ = P.shape
    d = check_distance_table(dist)
    if d.shape[0] != C:
        raise ValueError(f"distance table is {d.shape[0]}x{d.shape[0]}, expected {C}x{C}")
    mass = P.sum(axis=2)
    cost = mass[:, :, None] * d[None]
    eye = np.tile(np.eye(C), (G, 1, 1))
    allowed = support_mask(P) if restrict_to_support else np.ones((G, C, C), dtype=bool)
    if budget == 0:
        # nothing may be spent: only free moves remain
        allowed &= d[None] <= 0
    active = mass > 0
    free = allowed & active[:, :, None]
    lmo = _LinearOracle(mass, d, budget, allowed)
    hy = float(-xlogx(P.sum(axis=1)).sum())

    def certificate(X):
        g = _scores(P, X)
        return hy + float(np.sum(g * lmo(g)))

    ref = eye
    if init is not None:
        W0 = np.where(allowed, np.asarray(getattr(init, "blocks", init), dtype=float), 0.0)
        W0 = W0 / np.maximum(W0.sum(axis=2, keepdims=True), 1e-300)
        W0 = np.where(active[:, :, None], W0, eye)
        if W0.shape == eye.shape and np.allclose(W0.sum(axis=2), 1.0) \
                and float(np.sum(cost * W0)) <= budget:
            ref = W0
    f_ref = leakage_from_tensor(P, ref)

    # strictly interior start spending at most half the budget, pulled
    # towards the warm start when there is one
    U = free / np.maximum(free.sum(axis=2, keepdims=True), 1)
    U = np.where(active[:, :, None], U, eye)
    u_cost = float(np.sum(cost * U))
    eps = 0.5 if u_cost <= budget else 0.5 * budget / u_cost
    X = (1.0 - eps) * eye + eps * U
    if ref is not eye:
        X = (1.0 - 1e-3) * ref + 1e-3 * X
    X = np.where(free | ~active[:, :, None], X, 0.0)

    bar = _Barrier(P, cost, budget, free, active)
    f = leakage_from_tensor(P, X)
    best_X, best_f = (X, f) if f <= f_ref else (ref, f_ref)
    trace = [f_ref, best_f] if f <= f_ref else [f_ref]
    best_lb = certificate(X)
    gap = best_f - best_lb
    t = max(1.0, bar.m / max(gap, 1e-300)) if gap > tol else 1.0
    converged = gap <= tol
    it = 0
    while not converged and it < max_iters:
        # centre for this t; the decrement bottoms out near t * machine eps
        for _ in range(50):
            if it >= max_iters:
                break
            dX, lam2 = bar.direction(X, t)
            it += 1
            if lam2 / 2 <= max(1e-10, 1e-14 * t):
                break
            neg = dX[free] < 0
            step = 1.0
            if np.any(neg):
                step = min(1.0, 0.99 * float(np.min(-X[free][neg] / dX[free][neg])))
            v0 = bar.value(X, t)
            while step > 1e-14:
                Xn = X + step * dX
                if bar.value(Xn, t) <= v0 - 0.25 * step * lam2:
                    break
                step *= 0.5
            else:
                break
            X = Xn
            f = leakage_from_tensor(P, X)
            if f < best_f:
                best_X, best_f = X, f
                trace.append(f)
        best_lb = max(best_lb, certificate(X))
        gap = best_f - best_lb
        if gap <= tol:
            converged = True
        elif bar.m / t < 1e-3 * tol:
            break
        t *= 10.0
    if not converged:
        warnings.warn(
            f"solver stopped after {it} Newton steps with gap {gap:.3g} > tol {tol:g}",
            SolverWarning, stacklevel=2)
    X = np.where(allowed, best_X, 0.0)
    X /= X.sum(axis=2, keepdims=True)
    return ObfuscationMatrix(X, budget, converged, max(gap, 0.0), it, tuple(trace))
