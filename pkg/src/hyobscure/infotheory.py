"""Entropy, mutual information, hybrid leakage, utility loss and Fano's bound.

All logarithms are base 2.  Zero cells contribute nothing (``0 log 0 = 0``).
Obfuscation blocks are handled as a ``(G, C, C)`` array where
``blocks[g, c, c_hat]`` is the probability of publishing cluster ``c_hat``
for a member of cluster ``c`` in generalised group ``g``.
"""

import numpy as np

from .dataset import EmpiricalJoint, cluster_array, joint_counts

# log2 floor used where a gradient would otherwise be -inf (an empty target
# cell receiving mass); keeps first-order steps finite.
_LOG2_FLOOR = -1074.0
# published clusters lighter than this are treated as empty by the gradient:
# a near-empty column's slope is only valid over a vanishing neighbourhood
_EMPTY_MASS = 1e-12


def xlogx(a):
    """Elementwise ``a * log2(a)`` with the convention ``0 log 0 = 0``."""
    a = np.asarray(a, dtype=float)
    out = np.zeros_like(a)
    pos = a > 0
    out[pos] = a[pos] * np.log2(a[pos])
    return out


def _check_distribution(p):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("distribution must be a non-empty vector")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("distribution must be non-negative and sum to 1")
    return p


def entropy(p):
    """Shannon entropy in bits."""
    p = _check_distribution(p)
    return float(-xlogx(p).sum())


def mutual_information(joint):
    """Plug-in mutual information (bits) of a 2-D joint table."""
    if isinstance(joint, EmpiricalJoint):
        p = joint.probabilities
    else:
        p = EmpiricalJoint(joint).probabilities
    pa = p.sum(axis=1)
    pb = p.sum(axis=0)
    return float(xlogx(p).sum() - xlogx(pa).sum() - xlogx(pb).sum())


def clamp_bits(x):
    """Reporting form of a leakage value: round-off negatives become 0."""
    return max(0.0, float(x))


# -- group tensors -------------------------------------------------------------

def group_bounds(gen):
    b = np.asarray(getattr(gen, "bounds", gen), dtype=np.int64)
    if b.ndim != 1 or b.size < 2 or b[0] != 0 or np.any(np.diff(b) <= 0):
        raise ValueError("generalization bounds must start at 0 and strictly increase")
    return b


def group_tensor(counts, bounds, n_users=None):
    """Split a (cluster x value) count table into per-group joints.

    Returns ``P`` of shape ``(G, C, W)`` with ``W`` the widest group;
    ``P[g, c, j]`` is the fraction of all users that sit in cluster ``c``
    with the ``j``-th value of group ``g``.  Padding columns are zero.
    """
    counts = np.asarray(counts, dtype=float)
    bounds = np.asarray(bounds, dtype=np.int64)
    if bounds[-1] != counts.shape[1]:
        raise ValueError("generalization does not cover the private domain")
    n = counts.sum() if n_users is None else n_users
    widths = np.diff(bounds)
    G, C, W = widths.size, counts.shape[0], int(widths.max())
    P = np.zeros((G, C, W))
    for g in range(G):
        P[g, :, :widths[g]] = counts[:, bounds[g]:bounds[g + 1]]
    return P / n


def group_weights(P):
    """Cluster mass per group, ``p(c, y~)``, shape ``(G, C)``."""
    return P.sum(axis=2)


def _as_blocks(obf):
    return np.asarray(getattr(obf, "blocks", obf), dtype=float)


def published_joint(P, blocks):
    """``Q[g, c_hat, y] = sum_c O[g, c, c_hat] P[g, c, y]``."""
    return np.einsum("gcd,gcy->gdy", blocks, P)


def leakage_from_tensor(P, blocks):
    """``I(Y; X_hat, Y~)`` for per-group joints ``P`` and obfuscation ``blocks``."""
    blocks = _as_blocks(blocks)
    if blocks.shape[0] != P.shape[0] or blocks.shape[1] != P.shape[1]:
        raise ValueError(
            f"obfuscation has {blocks.shape[0]} blocks of size {blocks.shape[1]}, "
            f"expected {P.shape[0]} of size {P.shape[1]}"
        )
    Q = published_joint(P, blocks)
    q = Q.sum(axis=2)
    py = P.sum(axis=1)
    # H(Y) - H(Y | X_hat, Y~)
    return float(-xlogx(py).sum() + xlogx(Q).sum() - xlogx(q).sum())


def leakage_gradient_from_tensor(P, blocks, empty_mass=_EMPTY_MASS):
    """Partial derivatives of :func:`leakage_from_tensor` w.r.t. each block entry.

    Where a published cluster receives (next to) no mass the one-sided
    derivative is finite and depends on the source row; where only a single
    cell is empty it is ``-inf`` and is floored.  ``empty_mass`` is the
    column mass below which a published cluster counts as empty.
    """
    blocks = _as_blocks(blocks)
    Q = published_joint(P, blocks)
    q = Q.sum(axis=2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(Q > 0, np.log2(Q) - np.log2(np.where(q > 0, q, 1.0)), _LOG2_FLOOR)
    # d/dQ[g,d,y] of sum Q log Q - sum q log q is log2(Q/q)
    grad = np.einsum("gcy,gdy->gcd", P, ratio)
    empty = q[:, :, 0] <= empty_mass * P.sum()
    if np.any(empty):
        own = xlogx(P).sum(axis=2) - xlogx(P.sum(axis=2))
        grad = np.where(empty[:, None, :], own[:, :, None], grad)
    return grad


def leakage(ds, gen, obf, clusters):
    """Privacy leakage ``I(Y; X_hat, Y~)`` in bits from data, partition and blocks.

    ``clusters`` is a :class:`~hyobscure.obfopt.ClusterModel`, an integer
    array, or a mapping from user id to cluster.  Evaluation happens at the
    cluster granularity the map defines.
    """
    blocks = _as_blocks(obf)
    cl = cluster_array(ds, clusters)
    n_clusters = blocks.shape[1]
    if cl.max() >= n_clusters:
        raise ValueError("cluster label exceeds obfuscation block size")
    counts = joint_counts(cl, ds.value_index, n_clusters, len(ds.private_domain))
    P = group_tensor(counts, group_bounds(gen), ds.n_users)
    return leakage_from_tensor(P, blocks)


# -- utility -------------------------------------------------------------------

def check_distance_table(dist, atol=1e-12):
    d = np.asarray(dist, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distance table must be square")
    if np.any(d < 0):
        raise ValueError("distance table has negative entries")
    if np.any(np.abs(np.diag(d)) > atol) or not np.allclose(d, d.T, atol=atol, rtol=0):
        raise ValueError("distance table must be symmetric with zero diagonal")
    return d


def utility_loss(obf, dist, weights):
    """Expected obfuscation distance ``E[d(C, C_hat)]``.

    ``weights[g, c]`` is the probability mass of cluster ``c`` inside group
    ``g`` (it sums to 1 over the whole table).
    """
    blocks = _as_blocks(obf)
    d = check_distance_table(dist)
    w = np.asarray(weights, dtype=float)
    if w.ndim == 1:
        w = w[None, :]
    return float(np.einsum("gc,gcd,cd->", w, blocks, d))


# -- bounds and distances ------------------------------------------------------

def fano_bound(h_y, leakage_bits, domain_size):
    """Lower bound on any attacker's error probability."""
    if domain_size < 2:
        raise ValueError("domain_size must be at least 2")
    return max(0.0, (h_y - leakage_bits - 1.0) / np.log2(domain_size))


def js_divergence(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    for v in (a, b):
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
            raise ValueError("js_divergence needs non-negative vectors summing to 1")
    m = 0.5 * (a + b)
    return float(max(0.0, -xlogx(m).sum() + 0.5 * (xlogx(a).sum() + xlogx(b).sum())))


def cluster_distance(centroid_a, centroid_b, metric="euclidean"):
    a = np.asarray(centroid_a, dtype=float)
    b = np.asarray(centroid_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if metric == "euclidean":
        return float(np.sqrt(np.sum((a - b) ** 2)))
    if metric == "js_divergence":
        return js_divergence(a, b)
    raise ValueError(f"unknown metric {metric!r}")


def distance_table(centroids, metric="euclidean"):
    """Symmetric cluster-pair distance matrix with an exact zero diagonal."""
    cen = np.asarray(centroids, dtype=float)
    k = cen.shape[0]
    d = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            d[i, j] = d[j, i] = cluster_distance(cen[i], cen[j], metric)
    return d
