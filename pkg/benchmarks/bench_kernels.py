"""Compare the numba and numpy kernel backends.

    python benchmarks/bench_kernels.py [--users 16000] [--repeat 5]

Each kernel is timed on both backends with identical inputs (the numba
version is compiled before timing) and the outputs are checked for
equality.  The last section times a full ``obscure`` run in a subprocess
per backend, selected with ``HYOBSCURE_DISABLE_NUMBA``.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from hyobscure import _kernels

END_TO_END = """
import time
from hyobscure import _kernels, synth_population, cluster_users, GenConstraints, PipelineConfig, run, publish
from hyobscure.attack import simulate_attack
n = {n}
ds = synth_population(n, 10, 16, 0.7, seed=0)
cfg = PipelineConfig(GenConstraints(n // 10, 2 * n // 5, 2, 8, 4), 10, 2.0, seed=0)
t = time.perf_counter()
cl = cluster_users(ds, 10, seed=0)
obf, gen, rep = run(ds, cfg, clusters=cl)
pub = publish(ds, obf, gen, cl, seed=0)
err = simulate_attack(pub, ds, seed=0)
print(_kernels.BACKEND, time.perf_counter() - t, err)
"""


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def kernel_cases(n, rng):
    X = rng.normal(size=(n, 8))
    C = rng.normal(size=(10, 8))
    yield "nearest_centroid", (X, C)

    G, K = 4, 10
    groups = rng.integers(0, G, n)
    clusters = rng.integers(0, K, n)
    blocks = rng.random((G, K, K)) ** 3
    blocks /= blocks.sum(axis=2, keepdims=True)
    key = groups * K + clusters
    pool = np.argsort(key, kind="stable").astype(np.int64)
    offsets = np.concatenate([[0], np.cumsum(np.bincount(key, minlength=G * K))]).astype(np.int64)
    yield "sample_donors", (groups, clusters, blocks, offsets, pool, rng.random((n, K + 2)))

    m = n // 5
    tX = rng.normal(size=(m, 4))
    ty = rng.integers(0, 16, m).astype(float)
    qX = rng.normal(size=(n - m, 4))
    lo = rng.integers(0, 12, n - m).astype(float)
    hi = lo + 3
    yield "knn_predict", (tX, ty, qX, lo, hi, 5, (lo + hi) / 2, False)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=16000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args(argv)

    if not _kernels.HAVE_NUMBA:
        print("numba unavailable (or disabled); only the numpy backend can be timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':18s} {'numpy s':>10s} {'numba s':>10s} {'speedup':>8s}  equal")
    for name, inputs in kernel_cases(args.users, rng):
        t_np, out_np = best_of(lambda: getattr(_kernels, name + "_numpy")(*inputs), args.repeat)
        if _kernels.HAVE_NUMBA:
            fn = getattr(_kernels, name + "_numba")
            fn(*inputs)  # compile
            t_nb, out_nb = best_of(lambda: fn(*inputs), args.repeat)
            print(f"{name:18s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}  {same(out_np, out_nb)}")
        else:
            print(f"{name:18s} {t_np:10.4f} {'-':>10s} {'-':>8s}  -")

    if args.skip_end_to_end:
        return 0
    print(f"\nend to end ({args.users} users: cluster, obscure, publish, attack)")
    for flag in ("1", "0"):
        env = dict(os.environ, HYOBSCURE_DISABLE_NUMBA=flag)
        r = subprocess.run([sys.executable, "-c", END_TO_END.format(n=args.users)],
                           env=env, capture_output=True, text=True, check=True)
        backend, secs, err = r.stdout.split()
        print(f"  {backend:6s} {float(secs):8.2f}s  attack MAE {float(err):.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
