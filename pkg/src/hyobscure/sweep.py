"""Budget sweeps: every method at every budget and seed, published and attacked."""

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import baselines
from .attack import AttackScenario, simulate_attack
from .infotheory import (
    distance_table,
    entropy,
    fano_bound,
    group_tensor,
    group_weights,
    leakage_from_tensor,
    utility_loss,
)
from .initgen import InfeasibleConstraintsError, feasibility_check, init_generalization
from .obfopt import cluster_users
from .pipeline import _counts, publish, run

METHODS = ("hyobscure", "privcheck", "random", "frapp", "simp", "dp", "xobf", "ygen")
CSV_COLUMNS = ("method", "budget", "realized_utility_loss", "leakage_bits",
               "attack_error", "fano_bound", "seed_count")


@dataclass(frozen=True)
class TradeoffPoint:
    method: str
    budget: float
    realized_utility_loss: float
    leakage_bits: float
    attack_error: float
    fano_lower_bound: float
    seed_count: int = 1


@dataclass
class SweepResult:
    points: list
    records: list
    failures: list
    config: object
    seeds: tuple
    scenario: AttackScenario = field(default_factory=AttackScenario)

    def by_method(self, method):
        return [p for p in self.points if p.method == method]

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for p in self.points:
            w.writerow([p.method, repr(float(p.budget)), repr(float(p.realized_utility_loss)),
                        repr(float(p.leakage_bits)), repr(float(p.attack_error)),
                        repr(float(p.fano_lower_bound)), p.seed_count])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def method_output(method, ds, cfg, clusters, dist, counts, gen0):
    """``(obf, gen)`` that ``method`` publishes with at ``cfg.budget``."""
    P0 = group_tensor(counts, gen0.bounds, ds.n_users)
    if method == "hyobscure":
        obf, gen, _ = run(ds, cfg, clusters=clusters)
        return obf, gen
    if method == "xobf":
        return baselines.ablation_xobf(ds, cfg, clusters=clusters)
    if method == "ygen":
        return baselines.ablation_ygen(ds, cfg, clusters=clusters)
    if method == "privcheck":
        star = baselines.privcheck_obfuscation(ds, clusters, cfg.budget, dist=dist)
        return baselines.fit_budget(baselines.within_groups(star, P0), P0, dist, cfg.budget), gen0
    if method in ("random", "frapp", "simp", "dp"):
        _, obf = baselines.calibrate(method, P0, dist, cfg.budget)
        return obf, gen0
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def evaluate(ds, obf, gen, clusters, counts, dist, seed, scenario):
    P = group_tensor(counts, gen.bounds, ds.n_users)
    leak = max(0.0, leakage_from_tensor(P, obf.blocks))
    util = utility_loss(obf, dist, group_weights(P))
    pub = publish(ds, obf, gen, clusters, seed)
    err = simulate_attack(pub, ds, scenario, seed)
    hy = entropy(ds.value_counts / ds.n_users)
    m = len(ds.private_domain)
    fano = fano_bound(hy, leak, m) if m >= 2 else 0.0
    return util, leak, err, fano


def sweep(ds, methods, budgets, cfg, seeds, scenario=None):
    """Run every (method, budget, seed) cell and average over seeds.

    ``seeds`` is a count or an explicit list.  Each seed drives clustering,
    the initial partition, the solver pipeline, publishing and the attack
    split.  A cell that raises is recorded in ``failures`` and skipped.
    """
    scenario = scenario or AttackScenario()
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    budgets = sorted(float(b) for b in budgets)
    if not budgets:
        raise ValueError("budget grid is empty")
    seeds = tuple(range(seeds)) if isinstance(seeds, int) else tuple(seeds)
    report = feasibility_check(ds, cfg.gen_constraints)
    if not report.ok:
        raise InfeasibleConstraintsError("; ".join(report.reasons), report)

    records, failures = [], []
    for seed in seeds:
        clusters = cluster_users(ds, cfg.n_clusters, seed)
        dist = distance_table(clusters.centroids, cfg.metric)
        counts = _counts(ds, clusters, clusters.n_clusters)
        gen0 = init_generalization(ds, cfg.gen_constraints, seed)
        for budget in budgets:
            c = replace(cfg, budget=budget, seed=seed)
            for method in methods:
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        obf, gen = method_output(method, ds, c, clusters, dist, counts, gen0)
                        util, leak, err, fano = evaluate(ds, obf, gen, clusters, counts,
                                                         dist, seed, scenario)
                except Exception as exc:  # noqa: BLE001 - recorded, not fatal
                    failures.append((method, budget, seed, f"{type(exc).__name__}: {exc}"))
                    continue
                records.append(dict(method=method, budget=budget, seed=seed,
                                    realized_utility_loss=util, leakage_bits=leak,
                                    attack_error=err, fano_bound=fano))

    points = []
    for method in methods:
        for budget in budgets:
            cell = [r for r in records if r["method"] == method and r["budget"] == budget]
            if cell:
                mean = {k: float(np.mean([r[k] for r in cell])) for k in
                        ("realized_utility_loss", "leakage_bits", "attack_error", "fano_bound")}
            else:
                mean = dict.fromkeys(("realized_utility_loss", "leakage_bits",
                                      "attack_error", "fano_bound"), math.nan)
            points.append(TradeoffPoint(method, budget, mean["realized_utility_loss"],
                                        mean["leakage_bits"], mean["attack_error"],
                                        mean["fano_bound"], len(cell)))
    return SweepResult(points, records, failures, cfg, seeds, scenario)
