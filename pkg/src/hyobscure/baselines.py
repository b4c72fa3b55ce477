"""Comparison obfuscators and the two single-step ablations.

Every constructor returns cluster-level blocks.  Inside a partition the
same block is used for every group and then restricted to the clusters
present in that group (:func:`within_groups`).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .genboost import boost
from .infotheory import distance_table, group_tensor, group_weights, utility_loss
from .initgen import init_generalization
from .obfopt import ObfuscationMatrix, cluster_users, solve_obfuscation
from .pipeline import _counts

KINDS = ("random", "frapp", "simp", "dp", "privcheck", "xobf", "ygen")


@dataclass(frozen=True)
class BaselineSpec:
    kind: str
    p: float = None
    gamma: float = None
    temperature: float = None
    beta_dp: float = None
    budget: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}; choose from {KINDS}")
        if self.p is not None and not 0 <= self.p <= 1:
            raise ValueError("p must lie in [0, 1]")
        if self.gamma is not None and self.gamma < 1:
            raise ValueError("gamma must be at least 1")
        if self.temperature is not None and self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.beta_dp is not None and self.beta_dp < 0:
            raise ValueError("beta_dp must be non-negative")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be non-negative")


def _tile(block, n_groups, **kw):
    return ObfuscationMatrix(np.repeat(block[None], n_groups, axis=0), **kw)


def random_obfuscation(n_clusters, p, n_groups=1):
    """Keep the own cluster with ``1 - p``, spread ``p`` evenly over the rest."""
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    C = int(n_clusters)
    if C == 1:
        return _tile(np.ones((1, 1)), n_groups)
    b = np.full((C, C), p / (C - 1))
    np.fill_diagonal(b, 1.0 - p)
    return _tile(b, n_groups)


def frapp_obfuscation(n_clusters, gamma, n_groups=1):
    """Diagonal ``gamma / (gamma + C - 1)``, off-diagonal ``1 / (gamma + C - 1)``."""
    if gamma < 1:
        raise ValueError(f"gamma must be at least 1, got {gamma}")
    C = int(n_clusters)
    b = np.full((C, C), 1.0 / (gamma + C - 1))
    np.fill_diagonal(b, gamma / (gamma + C - 1))
    return _tile(b, n_groups)


def _softmin_rows(d, scale):
    z = -scale * d
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _dist(centroids, metric, dist):
    if dist is not None:
        return np.asarray(dist, dtype=float)
    return distance_table(centroids, metric)


def simp_obfuscation(centroids, temperature, metric="euclidean", n_groups=1, dist=None):
    """Rows proportional to ``exp(-d / temperature)``."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    return _tile(_softmin_rows(_dist(centroids, metric, dist), 1.0 / temperature), n_groups)


def dp_obfuscation(centroids, beta_dp, metric="euclidean", n_groups=1, dist=None):
    """Exponential mechanism over clusters: rows proportional to ``exp(-beta d)``.

    For any target and two sources the probability ratio is at most
    ``exp(2 beta d_max)``.
    """
    if beta_dp < 0:
        raise ValueError(f"beta_dp must be non-negative, got {beta_dp}")
    return _tile(_softmin_rows(_dist(centroids, metric, dist), beta_dp), n_groups)


def dp_max_ratio(obf):
    """Largest ``p(v|u) / p(v|u')`` over all blocks, sources and targets."""
    b = np.asarray(getattr(obf, "blocks", obf))
    worst = 1.0
    for blk in b:
        col_max = blk.max(axis=0)
        col_min = blk.min(axis=0)
        if np.any(col_min == 0):
            return math.inf
        worst = max(worst, float(np.max(col_max / col_min)))
    return worst


def privcheck_obfuscation(ds, clusters, budget, tol=1e-6, metric="euclidean", dist=None):
    """Leakage-optimal single block, ignoring the generalized label."""
    C = clusters.n_clusters
    if dist is None:
        dist = distance_table(clusters.centroids, metric)
    counts = _counts(ds, clusters, C)
    P1 = group_tensor(counts, [0, counts.shape[1]], ds.n_users)
    return solve_obfuscation(P1, dist, budget, tol=tol)


def within_groups(obf, P):
    """Tile a single block over the groups of ``P`` and restrict to present clusters."""
    o = obf if isinstance(obf, ObfuscationMatrix) else ObfuscationMatrix(obf)
    if o.n_groups == 1:
        o = o.tiled(P.shape[0])
    return o.restricted(group_weights(P) > 0)


def fit_budget(obf, P, dist, budget):
    """Blend restricted blocks towards the identity until they meet the budget.

    Blending keeps the support, and the cost scales linearly with the blend.
    """
    used = utility_loss(obf, dist, group_weights(P))
    if used <= budget:
        return obf
    lam = budget / used
    b = lam * obf.blocks + (1.0 - lam) * np.eye(obf.n_clusters)[None]
    return ObfuscationMatrix(b, budget)


# -- calibration ---------------------------------------------------------------

def _family(kind, n_clusters, dist):
    """Map ``s`` in ``[0, 1]`` (0 = identity, 1 = most mixing) to a block."""
    d_pos = dist[dist > 0]
    scale = float(d_pos.min()) if d_pos.size else 1.0
    if kind == "random":
        return lambda s: random_obfuscation(n_clusters, s).blocks[0], lambda s: {"p": s}
    if kind == "frapp":
        # gamma = 1/s, s = 1 is uniform
        return (lambda s: frapp_obfuscation(n_clusters, 1.0 / max(s, 1e-300)).blocks[0],
                lambda s: {"gamma": 1.0 / max(s, 1e-300)})
    if kind in ("simp", "dp"):
        # s = 0: beta large enough that every off-diagonal weight underflows;
        # s = 1: beta = 0 (uniform); log-spaced in between
        top = 700.0 / scale

        def beta(s):
            if s >= 1:
                return 0.0
            return top * (1e-9 / top) ** (s / (1 - 1e-9)) if s > 0 else top
        if kind == "simp":
            return (lambda s: _softmin_rows(dist, beta(s)),
                    lambda s: {"temperature": math.inf if beta(s) == 0 else 1.0 / beta(s)})
        return lambda s: _softmin_rows(dist, beta(s)), lambda s: {"beta_dp": beta(s)}
    raise ValueError(f"{kind!r} has no tunable family")


def calibrate(kind, P, dist, budget):
    """Parameter of a baseline family whose realized utility loss meets ``budget``.

    Realized loss is measured after the within-group restriction.  Returns
    ``(params, obf)``; when even the most mixing member stays under the
    budget, that member is returned.
    """
    C = P.shape[1]
    w = group_weights(P)
    build, params = _family(kind, C, dist)

    def realized(s):
        return within_groups(ObfuscationMatrix(build(s)), P)

    def excess(s):
        return utility_loss(realized(s), dist, w) - budget

    if budget <= 0:
        s = 0.0
    elif excess(1.0) <= 0:
        s = 1.0
    else:
        s = brentq(excess, 0.0, 1.0, xtol=1e-13, rtol=1e-12)
        # land on the feasible side
        while s > 0 and excess(s) > 0:
            s = max(0.0, s - 1e-12)
    return params(s), realized(s)


# -- ablations -----------------------------------------------------------------

def _setup(ds, cfg, clusters):
    if clusters is None:
        clusters = cluster_users(ds, cfg.n_clusters, cfg.seed)
    gen0 = init_generalization(ds, cfg.gen_constraints, cfg.seed)
    dist = distance_table(clusters.centroids, cfg.metric)
    counts = _counts(ds, clusters, clusters.n_clusters)
    return clusters, gen0, dist, counts


def ablation_xobf(ds, cfg, clusters=None):
    """``G0`` plus one obfuscation solve; no boosting."""
    clusters, gen0, dist, counts = _setup(ds, cfg, clusters)
    P = group_tensor(counts, gen0.bounds, ds.n_users)
    return solve_obfuscation(P, dist, cfg.budget), gen0


def ablation_ygen(ds, cfg, clusters=None):
    """Single-group optimum held fixed (within ``G0``'s groups) plus one boost."""
    clusters, gen0, dist, counts = _setup(ds, cfg, clusters)
    P = group_tensor(counts, gen0.bounds, ds.n_users)
    star = privcheck_obfuscation(ds, clusters, cfg.budget, dist=dist)
    obf = fit_budget(within_groups(star, P), P, dist, cfg.budget)
    gen = boost(gen0, obf, ds, clusters, dist, seed=[cfg.seed, 1],
                cons=cfg.gen_constraints, delta=cfg.delta)
    return obf, gen
