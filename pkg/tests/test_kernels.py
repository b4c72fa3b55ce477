import os
import subprocess
import sys

import numpy as np
import pytest

from hyobscure import _kernels

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not available")


def donor_inputs(rng, n=300, G=3, C=4):
    groups = rng.integers(0, G, n)
    clusters = rng.integers(0, C, n)
    b = rng.random((G, C, C)) ** 3
    b /= b.sum(axis=2, keepdims=True)
    key = groups * C + clusters
    pool = np.argsort(key, kind="stable").astype(np.int64)
    offsets = np.concatenate([[0], np.cumsum(np.bincount(key, minlength=G * C))]).astype(np.int64)
    return groups, clusters, b, offsets, pool, rng.random((n, C + 2))


@needs_numba
def test_nearest_centroid_backends_agree():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(500, 3))
    C = rng.normal(size=(7, 3))
    a = _kernels.nearest_centroid_numpy(X, C)
    b = _kernels.nearest_centroid_numba(X, C)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


@needs_numba
def test_sample_donors_backends_agree():
    rng = np.random.default_rng(1)
    args = donor_inputs(rng)
    a = _kernels.sample_donors_numpy(*args)
    b = _kernels.sample_donors_numba(*args)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


@needs_numba
@pytest.mark.parametrize("vote", [False, True])
def test_knn_backends_agree(vote):
    rng = np.random.default_rng(2)
    tX = rng.normal(size=(200, 3))
    ty = rng.integers(0, 10, 200).astype(float)
    qX = rng.normal(size=(150, 3))
    lo = rng.integers(0, 6, 150).astype(float)
    hi = lo + rng.integers(0, 4, 150)
    fb = (lo + hi) / 2
    a = _kernels.knn_predict_numpy(tX, ty, qX, lo, hi, 5, fb, vote)
    b = _kernels.knn_predict_numba(tX, ty, qX, lo, hi, 5, fb, vote)
    np.testing.assert_array_equal(a, b)


def test_donors_share_group_and_cluster():
    rng = np.random.default_rng(3)
    groups, clusters, b, offsets, pool, u = donor_inputs(rng)
    donors, chosen, fell = _kernels.sample_donors(groups, clusters, b, offsets, pool, u)
    assert np.array_equal(groups[donors], groups)
    assert np.array_equal(clusters[donors], chosen)
    assert np.array_equal(chosen[fell], clusters[fell])


def test_knn_respects_interval():
    tX = np.array([[0.0], [1.0], [2.0]])
    ty = np.array([1.0, 5.0, 9.0])
    pred = _kernels.knn_predict(tX, ty, np.array([[0.0]]), np.array([4.0]),
                                np.array([10.0]), 1, np.array([-1.0]), False)
    assert pred[0] == 5.0
    pred = _kernels.knn_predict(tX, ty, np.array([[0.0]]), np.array([6.0]),
                                np.array([8.0]), 1, np.array([-1.0]), False)
    assert pred[0] == -1.0


def test_disable_env_selects_numpy_and_matches():
    script = (
        "from hyobscure import _kernels\n"
        "from hyobscure.dataset import synth_population\n"
        "from hyobscure.obfopt import cluster_users, ObfuscationMatrix\n"
        "from hyobscure.initgen import GeneralizationFn\n"
        "from hyobscure.pipeline import publish\n"
        "import numpy as np\n"
        "ds = synth_population(300, 4, 6, 0.5, seed=1)\n"
        "cl = cluster_users(ds, 4, seed=0)\n"
        "gen = GeneralizationFn((0, 3, 6), ds.private_domain)\n"
        "b = np.full((2, 4, 4), 0.25)\n"
        "print(_kernels.BACKEND)\n"
        "print(hash(publish(ds, ObfuscationMatrix(b), gen, cl, 5).to_csv()))\n"
    )
    outs = {}
    for flag in ("1", "0"):
        env = dict(os.environ, HYOBSCURE_DISABLE_NUMBA=flag, PYTHONHASHSEED="0")
        r = subprocess.run([sys.executable, "-c", script], env=env, capture_output=True,
                           text=True, check=True)
        outs[flag] = r.stdout.split()
    assert outs["1"][0] == "numpy"
    if _kernels.HAVE_NUMBA:
        assert outs["0"][0] == "numba"
    assert outs["1"][1] == outs["0"][1]
