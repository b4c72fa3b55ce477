"""End-to-end driver: alternate obfuscation solves and boundary boosting,
then publish donor features with generalized labels."""

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import _kernels
from .dataset import cluster_array, joint_counts
from .genboost import boost
from .infotheory import (
    distance_table,
    group_tensor,
    group_weights,
    leakage_from_tensor,
    utility_loss,
)
from .initgen import GenConstraints, InfeasibleConstraintsError, init_generalization
from .obfopt import ObfuscationMatrix, SolverWarning, cluster_users, solve_obfuscation, support_mask

METRICS = ("euclidean", "js_divergence")


@dataclass(frozen=True)
class PipelineConfig:
    gen_constraints: GenConstraints
    n_clusters: int
    budget: float
    delta: float = 1e-4
    seed: int = 0
    metric: str = "euclidean"
    max_cross_iters: int = 200

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not self.budget >= 0:
            raise ValueError(f"budget must be non-negative, got {self.budget}")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be positive")
        if self.max_cross_iters < 1:
            raise ValueError("max_cross_iters must be positive")


@dataclass
class ObscureReport:
    iteration_trace: list
    final_leakage: float
    final_utility_loss: float
    theorem2_iters_bound: int
    theorem3_rhs: float
    constraints_ok: bool
    seed: int
    initial_leakage: float = 0.0
    obfuscation_only_leakage: float = 0.0
    delta: float = 1e-4
    budget: float = 0.0
    n_clusters: int = 0
    group_labels: list = field(default_factory=list)
    solver_converged: bool = True

    @property
    def n_iterations(self):
        return len(self.iteration_trace) - 1

    def to_dict(self):
        return {
            "iteration_trace": [[float(a), float(b)] for a, b in self.iteration_trace],
            "final_leakage": float(self.final_leakage),
            "final_utility_loss": float(self.final_utility_loss),
            "theorem2_iters_bound": int(self.theorem2_iters_bound),
            "theorem3_rhs": float(self.theorem3_rhs),
            "constraints_ok": bool(self.constraints_ok),
            "seed": int(self.seed),
            "initial_leakage": float(self.initial_leakage),
            "obfuscation_only_leakage": float(self.obfuscation_only_leakage),
            "delta": float(self.delta),
            "budget": float(self.budget),
            "n_clusters": int(self.n_clusters),
            "group_labels": [str(s) for s in self.group_labels],
            "solver_converged": bool(self.solver_converged),
        }

    def to_json(self, path=None):
        """JSON text with every float written to 17 significant digits."""
        text = _dump(self.to_dict()) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_dict(cls, d):
        validate_report(d)
        d = dict(d)
        d["iteration_trace"] = [tuple(p) for p in d["iteration_trace"]]
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _dump(obj, indent=0):
    pad = "  " * (indent + 1)
    if isinstance(obj, dict):
        items = [f'{pad}{json.dumps(k)}: {_dump(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, list):
        # short numeric rows stay on one line
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_dump(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _dump(v, indent + 1) for v in obj) + "\n" + "  " * indent + "]"
    if isinstance(obj, bool) or obj is None or isinstance(obj, (str, int)):
        return json.dumps(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError("report values must be finite")
        s = "%.17g" % obj
        return s if any(ch in s for ch in ".en") else s + ".0"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def report_schema():
    text = resources.files("hyobscure").joinpath("report_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_report(d):
    """Raise ``jsonschema.ValidationError`` if ``d`` breaks the report schema."""
    import jsonschema
    jsonschema.validate(d, report_schema())


# -- driver --------------------------------------------------------------------

def _counts(ds, clusters, n_clusters):
    cl = cluster_array(ds, clusters)
    return joint_counts(cl, ds.value_index, n_clusters, len(ds.private_domain))


def _fits(blocks, P, dist, budget):
    """Whether fixed blocks stay feasible (budget and support) for ``P``."""
    if blocks.shape[:2] != P.shape[:2]:
        return False
    if np.any((blocks > 1e-15) & ~support_mask(P)):
        return False
    return utility_loss(blocks, dist, group_weights(P)) <= budget


def run(ds, cfg, clusters=None):
    """HyObscure on ``ds``: returns ``(obf, gen, report)``.

    Iteration 0 is ``G0`` with no obfuscation.  Each later iteration solves
    the obfuscation for the current partition (warm-started, keeping the
    previous blocks if they are still feasible and better) and then boosts
    the partition with the blocks fixed.  The loop ends once an iteration
    lowers leakage by less than ``delta``.
    """
    cons = cfg.gen_constraints
    gen = init_generalization(ds, cons, cfg.seed)
    if clusters is None:
        clusters = cluster_users(ds, cfg.n_clusters, cfg.seed)
    C = clusters.n_clusters if hasattr(clusters, "n_clusters") else cfg.n_clusters
    centroids = getattr(clusters, "centroids", None)
    dist = distance_table(centroids, cfg.metric) if centroids is not None else None
    if dist is None:
        raise ValueError("clusters must carry centroids")
    counts = _counts(ds, clusters, C)
    n = ds.n_users

    P = group_tensor(counts, gen.bounds, n)
    obf = ObfuscationMatrix.identity(gen.n_groups, C, cfg.budget)
    I0 = leakage_from_tensor(P, obf.blocks)
    trace = [(I0, utility_loss(obf.blocks, dist, group_weights(P)))]
    bound = max(1, math.ceil(I0 / cfg.delta))
    converged = True
    for t in range(1, min(cfg.max_cross_iters, bound) + 1):
        # the first pass is a cold solve, exactly the obfuscation-only step
        new = solve_obfuscation(P, dist, cfg.budget, init=obf.blocks if t > 1 else None)
        keep = _fits(obf.blocks, P, dist, cfg.budget) and \
            leakage_from_tensor(P, obf.blocks) <= leakage_from_tensor(P, new.blocks)
        if not keep:
            obf = new
            converged = converged and new.converged
        gen = boost(gen, obf, ds, clusters, dist, seed=[cfg.seed, t], cons=cons,
                    delta=cfg.delta)
        P = group_tensor(counts, gen.bounds, n)
        trace.append((leakage_from_tensor(P, obf.blocks),
                      utility_loss(obf.blocks, dist, group_weights(P))))
        if trace[-2][0] - trace[-1][0] < cfg.delta:
            break

    # obfuscation-only reference for the leakage bound
    P1 = group_tensor(counts, [0, counts.shape[1]], n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SolverWarning)
        star = solve_obfuscation(P1, dist, cfg.budget)
    ref = leakage_from_tensor(P1, star.blocks)
    report = ObscureReport(
        iteration_trace=trace,
        final_leakage=trace[-1][0],
        final_utility_loss=trace[-1][1],
        theorem2_iters_bound=bound,
        theorem3_rhs=ref + math.log2(C * gen.n_groups),
        constraints_ok=gen.satisfies(ds.value_counts, cons),
        seed=cfg.seed,
        initial_leakage=I0,
        obfuscation_only_leakage=ref,
        delta=cfg.delta,
        budget=float(cfg.budget),
        n_clusters=C,
        group_labels=gen.labels,
        solver_converged=converged,
    )
    return obf, gen, report


@dataclass(frozen=True)
class Finding:
    name: str
    passed: bool
    detail: str


def verify_theorems(report):
    """Re-check monotonicity, the iteration bound and the leakage bound."""
    leak = [float(p[0]) for p in report.iteration_trace]
    ups = [i for i in range(1, len(leak)) if leak[i] > leak[i - 1]]
    iters = len(leak) - 1
    return [
        Finding("monotone_trace", not ups,
                "non-increasing" if not ups else f"leakage rises at iteration {ups[0]}"),
        Finding("iteration_bound", iters <= report.theorem2_iters_bound,
                f"{iters} iterations, bound {report.theorem2_iters_bound}"),
        Finding("leakage_bound", report.final_leakage <= report.theorem3_rhs + 1e-9,
                f"final {report.final_leakage:.6g} vs bound {report.theorem3_rhs:.6g}"),
    ]


# -- publishing ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PublishedDataset:
    user_ids: tuple
    features: np.ndarray
    labels: tuple
    group_index: np.ndarray
    donors: np.ndarray
    published_clusters: np.ndarray
    fallback: np.ndarray
    feature_names: tuple
    bounds: tuple
    events: tuple = ()

    @property
    def n_users(self):
        return len(self.user_ids)

    def provenance(self):
        """``(user_id, donor_id, published_cluster, fell_back)`` per user."""
        return [(u, self.user_ids[d], int(c), bool(f)) for u, d, c, f in
                zip(self.user_ids, self.donors, self.published_clusters, self.fallback)]

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("user_id",) + tuple(self.feature_names) + ("y_group",))
        for u, row, lab in zip(self.user_ids, self.features, self.labels):
            w.writerow([u] + [repr(float(x)) for x in row] + [lab])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def publish(ds, obf, gen, clusters, seed):
    """Replace each user's features by those of a donor from a sampled cluster.

    The donor shares the user's group.  When the sampled cluster has no
    member in the group, the cluster is redrawn up to ``C`` times, then the
    user's own cluster is used and the event is logged.
    """
    blocks = np.ascontiguousarray(getattr(obf, "blocks", obf), dtype=float)
    cl = cluster_array(ds, clusters)
    G, C = blocks.shape[:2]
    groups = np.ascontiguousarray(gen.group_of_index(ds.value_index), dtype=np.int64)
    if groups.max() >= G:
        raise ValueError(f"obfuscation has {G} blocks, partition has {gen.n_groups} groups")
    if cl.max() >= C:
        raise ValueError("cluster label exceeds obfuscation block size")
    key = groups * C + cl
    pool = np.argsort(key, kind="stable").astype(np.int64)
    offsets = np.concatenate([[0], np.cumsum(np.bincount(key, minlength=G * C))]).astype(np.int64)
    rng = np.random.default_rng(seed)
    uniforms = rng.random((ds.n_users, C + 2))
    donors, chosen, fallback = _kernels.sample_donors(groups, cl, blocks, offsets, pool, uniforms)
    labels = gen.labels
    events = tuple(
        f"user {ds.user_ids[i]}: no donor in sampled clusters, kept own cluster {cl[i]}"
        for i in np.flatnonzero(fallback))
    return PublishedDataset(
        user_ids=ds.user_ids,
        features=ds.features[donors],
        labels=tuple(labels[g] for g in groups),
        group_index=groups,
        donors=np.asarray(donors),
        published_clusters=np.asarray(chosen),
        fallback=np.asarray(fallback, dtype=bool),
        feature_names=ds.feature_names,
        bounds=gen.bounds,
        events=events,
    )


__all__ = [
    "PipelineConfig", "ObscureReport", "PublishedDataset", "Finding",
    "run", "publish", "verify_theorems", "validate_report", "report_schema",
    "InfeasibleConstraintsError",
]
