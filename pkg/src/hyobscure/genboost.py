"""Stochastic boundary search over generalizations with the obfuscation fixed.

A move shifts one boundary between adjacent groups by ``width`` domain
values.  A candidate replaces the incumbent only when it is feasible and
lowers both the leakage and the utility loss.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import cluster_array, joint_counts
from .infotheory import group_tensor, group_weights, leakage_from_tensor, utility_loss
from .obfopt import support_mask

SHIFT_UP = "shift_up"
SHIFT_DOWN = "shift_down"


@dataclass(frozen=True)
class BoundaryMove:
    """Shift of the boundary between ``group_index`` and ``neighbor_index``.

    ``shift_up`` moves the boundary towards larger values (the lower group
    gains ``width`` values), ``shift_down`` towards smaller ones.
    """

    group_index: int
    neighbor_index: int
    direction: str
    width: int = 1

    def __post_init__(self):
        if abs(self.group_index - self.neighbor_index) != 1:
            raise ValueError("a boundary move needs two adjacent groups")
        if self.direction not in (SHIFT_UP, SHIFT_DOWN):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.width < 1:
            raise ValueError("width must be at least 1")

    @property
    def boundary(self):
        """Index into ``bounds`` of the boundary being moved."""
        return max(self.group_index, self.neighbor_index)


@dataclass(frozen=True)
class CandidateEvaluation:
    leakage_bits: float
    utility_loss: float
    feasible: bool


def propose_move(gen, rng):
    """Draw a group, one of its neighbours and a direction; ``None`` for one group."""
    G = gen.n_groups
    if G < 2:
        return None
    g = int(rng.integers(G))
    nbrs = [n for n in (g - 1, g + 1) if 0 <= n < G]
    n = nbrs[int(rng.integers(len(nbrs)))]
    direction = SHIFT_UP if rng.random() < 0.5 else SHIFT_DOWN
    return BoundaryMove(g, n, direction)


def apply_move(gen, move):
    """Partition after ``move``, or ``None`` if a group would become empty."""
    b = list(gen.bounds)
    j = move.boundary
    b[j] += move.width if move.direction == SHIFT_UP else -move.width
    if b[j] <= b[j - 1] or b[j] >= b[j + 1]:
        return None
    return gen.with_bounds(b)


class _Scorer:
    """Leakage and utility of partitions against a fixed obfuscation."""

    def __init__(self, ds, clusters, obf, dist, cons=None):
        self.blocks = np.asarray(getattr(obf, "blocks", obf), dtype=float)
        cl = cluster_array(ds, clusters)
        self.counts = joint_counts(cl, ds.value_index, self.blocks.shape[1],
                                   len(ds.private_domain))
        self.value_counts = ds.value_counts
        self.n = ds.n_users
        self.dist = dist
        self.cons = cons

    def __call__(self, gen):
        P = group_tensor(self.counts, gen.bounds, self.n)
        ok = True if self.cons is None else gen.satisfies(self.value_counts, self.cons)
        # the fixed blocks must not route anyone to a cluster absent from
        # their group, or publishing would have no donor
        ok = ok and not np.any((self.blocks > 1e-15) & ~support_mask(P))
        return CandidateEvaluation(
            leakage_from_tensor(P, self.blocks),
            utility_loss(self.blocks, self.dist, group_weights(P)),
            ok,
        )


def evaluate_candidate(gen_candidate, obf, ds, clusters, dist, cons=None):
    """Score a partition with ``obf`` held fixed.

    Utility is re-weighted to the candidate's groups.  ``feasible`` needs the
    ``cons`` bounds (skipped when ``cons`` is None) and every cluster the
    blocks publish into to have members in the candidate's group.
    """
    return _Scorer(ds, clusters, obf, dist, cons)(gen_candidate)


def boost(gen0, obf, ds, clusters, dist, max_stalls=None, seed=0, cons=None,
          delta=1e-4, log=None):
    """Pareto-improving random boundary search starting from ``gen0``.

    Stops after ``max_stalls`` (default ``50 * groups``) rejections in a row,
    or right after an accepted move that lowers leakage by less than
    ``delta``.  If ``log`` is a list, every proposal is appended to it as
    ``(move, evaluation, accepted)``.
    """
    if max_stalls is None:
        max_stalls = 50 * gen0.n_groups
    if max_stalls <= 0 or gen0.n_groups < 2:
        return gen0
    score = _Scorer(ds, clusters, obf, dist, cons)
    rng = np.random.default_rng(seed)
    best, cur = gen0, score(gen0)
    stalls = 0
    while stalls < max_stalls:
        move = propose_move(best, rng)
        cand = apply_move(best, move)
        ev = score(cand) if cand is not None else None
        accepted = (ev is not None and ev.feasible
                    and ev.leakage_bits < cur.leakage_bits
                    and ev.utility_loss < cur.utility_loss)
        if log is not None:
            log.append((move, ev, accepted))
        if not accepted:
            stalls += 1
            continue
        gain = cur.leakage_bits - ev.leakage_bits
        best, cur, stalls = cand, ev, 0
        if gain < delta:
            break
    return best
