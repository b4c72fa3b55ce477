"""k-nearest-neighbour attribute-inference attacks on a published dataset."""

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dataset import DatasetError
from .pipeline import PublishedDataset

SCENARIOS = ("scenario_one", "scenario_two")


@dataclass(frozen=True)
class AttackScenario:
    """Who the attacker is.

    ``scenario_one``: trains on the original features and exact values of a
    few users.  ``scenario_two``: trains on the published features of those
    users, with their exact values.
    """

    kind: str = "scenario_one"
    train_fraction: float = 0.2
    attacker: str = "knn"
    k: int = 5

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.kind!r}")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if self.attacker != "knn":
            raise ValueError(f"unknown attacker {self.attacker!r}")
        if self.k < 1:
            raise ValueError("k must be positive")


def is_ordered(ds):
    return all(isinstance(v, (int, float, np.integer, np.floating)) for v in ds.private_domain)


def _align(published, ds):
    pos = {u: i for i, u in enumerate(ds.user_ids)}
    try:
        idx = np.array([pos[u] for u in published.user_ids], dtype=np.int64)
    except KeyError as exc:
        raise DatasetError(f"published user {exc.args[0]!r} not in the dataset") from None
    if idx.size != ds.n_users:
        raise DatasetError("published data and dataset cover different users")
    return idx


def simulate_attack(published, ds, scenario=None, seed=0):
    """Attack error on the held-out users: MAE, or ``1 - accuracy`` for
    unordered private values.

    The attacker predicts each test user from the ``k`` nearest training
    rows whose exact value lies in the user's published interval; with no
    such row it guesses the interval's median value.  Exact values of test
    users are read only to score.
    """
    scenario = scenario or AttackScenario()
    idx = _align(published, ds)
    n = ds.n_users
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(round(scenario.train_fraction * n))
    n_train = min(n_train, n - 1)
    if n_train < scenario.k:
        raise ValueError(
            f"train split has {n_train} users, fewer than k={scenario.k} neighbours")
    train, test = perm[:n_train], perm[n_train:]

    ordered = is_ordered(ds)
    pos = ds.domain_positions if ordered else np.arange(len(ds.private_domain), dtype=float)
    y = pos[ds.value_index[idx]]
    bounds = np.asarray(published.bounds)
    g = np.asarray(published.group_index)
    lo = pos[bounds[g]]
    hi = pos[bounds[g + 1] - 1]
    fallback = np.array([np.median(pos[bounds[k]:bounds[k + 1]]) for k in g])
    if not ordered:
        fallback = np.floor(fallback)

    pub = np.ascontiguousarray(published.features, dtype=float)
    if scenario.kind == "scenario_one":
        train_X = ds.features[idx[train]]
    else:
        train_X = pub[train]
    pred = _kernels.knn_predict(
        np.ascontiguousarray(train_X), np.ascontiguousarray(y[train]),
        np.ascontiguousarray(pub[test]), np.ascontiguousarray(lo[test]),
        np.ascontiguousarray(hi[test]), scenario.k,
        np.ascontiguousarray(fallback[test]), not ordered)
    truth = y[test]
    if ordered:
        return float(np.mean(np.abs(pred - truth)))
    return float(np.mean(pred != truth))


def load_published(path, ds):
    """Read a ``published.csv`` back, resolving ``[lo,hi]`` labels on ``ds``'s domain."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "user_id" or rows[0][-1] != "y_group":
        raise DatasetError(f"{path}: expected a user_id ... y_group header")
    names = tuple(rows[0][1:-1])
    body = [r for r in rows[1:] if r]
    domain = [str(v) for v in ds.private_domain]
    labels = [r[-1] for r in body]
    spans = {}
    for lab in sorted(set(labels)):
        try:
            a, b = lab.strip()[1:-1].split(",")
            spans[lab] = (domain.index(a), domain.index(b) + 1)
        except ValueError:
            raise DatasetError(f"cannot resolve group label {lab!r} on the private domain") from None
    cuts = sorted({0, len(domain)} | {c for s in spans.values() for c in s})
    order = {c: i for i, c in enumerate(cuts)}
    for a, b in spans.values():
        if order[b] != order[a] + 1:
            raise DatasetError("published group labels overlap")
    return PublishedDataset(
        user_ids=tuple(r[0] for r in body),
        features=np.array([[float(x) for x in r[1:-1]] for r in body]),
        labels=tuple(labels),
        group_index=np.array([order[spans[lab][0]] for lab in labels], dtype=np.int64),
        donors=np.full(len(body), -1),
        published_clusters=np.full(len(body), -1),
        fallback=np.zeros(len(body), dtype=bool),
        feature_names=names,
        bounds=tuple(cuts),
    )
