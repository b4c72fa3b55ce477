"""Hot loops with a numba path and a pure-numpy fallback.

The backend is fixed at import time.  Set ``HYOBSCURE_DISABLE_NUMBA=1`` to
force the numpy implementations (numba is also skipped if it fails to
import).  Both paths consume the same pre-drawn random numbers and use the
same summation order, so they return identical results.
"""

import os

import numpy as np

try:
    if os.environ.get("HYOBSCURE_DISABLE_NUMBA", "").strip() not in ("", "0"):
        raise ImportError("numba disabled by HYOBSCURE_DISABLE_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"

_CHUNK = 4096


# -- nearest centroid (k-means assignment step) --------------------------------

def _sqdist_np(X, C):
    out = np.zeros((X.shape[0], C.shape[0]))
    for j in range(X.shape[1]):
        diff = X[:, j, None] - C[None, :, j]
        out += diff * diff
    return out


def nearest_centroid_numpy(X, C):
    n = X.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n)
    for start in range(0, n, _CHUNK):
        d2 = _sqdist_np(X[start:start + _CHUNK], C)
        lab = np.argmin(d2, axis=1)
        labels[start:start + _CHUNK] = lab
        best[start:start + _CHUNK] = d2[np.arange(d2.shape[0]), lab]
    return labels, best


def _nearest_centroid_loop(X, C):
    n, d = X.shape
    k = C.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n)
    for i in range(n):
        bi = 0
        bd = np.inf
        for c in range(k):
            s = 0.0
            for j in range(d):
                t = X[i, j] - C[c, j]
                s += t * t
            if s < bd:
                bd = s
                bi = c
        labels[i] = bi
        best[i] = bd
    return labels, best


# -- publish sampler -----------------------------------------------------------

def sample_donors_numpy(groups, clusters, blocks, offsets, pool, uniforms):
    """Draw one donor per user.

    ``pool[offsets[g*C + c]:offsets[g*C + c + 1]]`` lists the users of cluster
    ``c`` inside group ``g``.  ``uniforms`` has shape ``(n, C + 2)``: columns
    ``0..C`` feed the cluster draws (first try plus ``C`` resamples), the
    last column picks the donor inside the pool.
    """
    n = groups.shape[0]
    n_clusters = blocks.shape[1]
    rows = blocks[groups, clusters]
    cdf = np.cumsum(rows, axis=1)
    chosen = np.full(n, -1, dtype=np.int64)
    pending = np.ones(n, dtype=bool)
    for attempt in range(n_clusters + 1):
        u = uniforms[:, attempt]
        hat = np.zeros(n, dtype=np.int64)
        for j in range(n_clusters - 1):
            hat += (u >= cdf[:, j])
        key = groups * n_clusters + hat
        size = offsets[key + 1] - offsets[key]
        hit = pending & (size > 0)
        chosen[hit] = hat[hit]
        pending &= ~hit
    fallback = pending.copy()
    chosen[fallback] = clusters[fallback]
    key = groups * n_clusters + chosen
    size = offsets[key + 1] - offsets[key]
    pick = np.minimum((uniforms[:, -1] * size).astype(np.int64), size - 1)
    donors = pool[offsets[key] + pick]
    return donors, chosen, fallback


def _sample_donors_loop(groups, clusters, blocks, offsets, pool, uniforms):
    n = groups.shape[0]
    n_clusters = blocks.shape[1]
    donors = np.empty(n, dtype=np.int64)
    chosen = np.empty(n, dtype=np.int64)
    fallback = np.zeros(n, dtype=np.bool_)
    cdf = np.empty(n_clusters)
    for i in range(n):
        g = groups[i]
        c = clusters[i]
        acc = 0.0
        for j in range(n_clusters):
            acc += blocks[g, c, j]
            cdf[j] = acc
        hat = -1
        for attempt in range(n_clusters + 1):
            u = uniforms[i, attempt]
            h = 0
            for j in range(n_clusters - 1):
                if u >= cdf[j]:
                    h += 1
            key = g * n_clusters + h
            if offsets[key + 1] - offsets[key] > 0:
                hat = h
                break
        if hat < 0:
            hat = c
            fallback[i] = True
        key = g * n_clusters + hat
        size = offsets[key + 1] - offsets[key]
        pick = np.int64(uniforms[i, n_clusters + 1] * size)
        if pick > size - 1:
            pick = size - 1
        donors[i] = pool[offsets[key] + pick]
        chosen[i] = hat
    return donors, chosen, fallback


# -- k-nearest-neighbour attacker ----------------------------------------------

def knn_predict_numpy(train_X, train_y, test_X, test_lo, test_hi, k,
                      fallback, vote):
    """Predict a value per test row from its ``k`` nearest training rows.

    Only training rows whose value lies in the test row's interval
    ``[test_lo, test_hi]`` are eligible; with none eligible the row gets
    ``fallback[i]``.  ``vote`` selects majority vote (ties to the smaller
    value) instead of the mean.
    """
    m = test_X.shape[0]
    out = np.empty(m)
    for start in range(0, m, _CHUNK):
        d2 = _sqdist_np(test_X[start:start + _CHUNK], train_X)
        for r in range(d2.shape[0]):
            i = start + r
            ok = (train_y >= test_lo[i]) & (train_y <= test_hi[i])
            idx = np.flatnonzero(ok)
            if idx.size == 0:
                out[i] = fallback[i]
                continue
            order = idx[np.argsort(d2[r, idx], kind="mergesort")[:k]]
            vals = train_y[order]
            if vote:
                uniq, counts = np.unique(vals, return_counts=True)
                out[i] = uniq[np.argmax(counts)]
            else:
                out[i] = sum(vals.tolist()) / vals.size
    return out


def _knn_predict_loop(train_X, train_y, test_X, test_lo, test_hi, k,
                      fallback, vote):
    m = test_X.shape[0]
    t, d = train_X.shape
    out = np.empty(m)
    for i in range(m):
        cnt = 0
        for r in range(t):
            if train_y[r] >= test_lo[i] and train_y[r] <= test_hi[i]:
                cnt += 1
        if cnt == 0:
            out[i] = fallback[i]
            continue
        idx = np.empty(cnt, dtype=np.int64)
        dd = np.empty(cnt)
        p = 0
        for r in range(t):
            if train_y[r] >= test_lo[i] and train_y[r] <= test_hi[i]:
                s = 0.0
                for j in range(d):
                    z = test_X[i, j] - train_X[r, j]
                    s += z * z
                idx[p] = r
                dd[p] = s
                p += 1
        order = np.argsort(dd, kind="mergesort")
        kk = min(k, cnt)
        vals = np.empty(kk)
        for q in range(kk):
            vals[q] = train_y[idx[order[q]]]
        if vote:
            vals.sort()
            best_v = vals[0]
            best_c = 0
            q = 0
            while q < kk:
                e = q
                while e < kk and vals[e] == vals[q]:
                    e += 1
                if e - q > best_c:
                    best_c = e - q
                    best_v = vals[q]
                q = e
            out[i] = best_v
        else:
            s = 0.0
            for q in range(kk):
                s += vals[q]
            out[i] = s / kk
    return out


if HAVE_NUMBA:
    nearest_centroid_numba = njit(cache=True)(_nearest_centroid_loop)
    sample_donors_numba = njit(cache=True)(_sample_donors_loop)
    knn_predict_numba = njit(cache=True)(_knn_predict_loop)
    nearest_centroid = nearest_centroid_numba
    sample_donors = sample_donors_numba
    knn_predict = knn_predict_numba
else:
    nearest_centroid_numba = sample_donors_numba = knn_predict_numba = None
    nearest_centroid = nearest_centroid_numpy
    sample_donors = sample_donors_numpy
    knn_predict = knn_predict_numpy
