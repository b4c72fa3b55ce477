"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 infeasible constraints,
3 solver stopped before certifying its gap (outputs are still written),
4 ``check`` found a failed theorem re-check.
"""

import argparse
import json
import sys
import warnings
from pathlib import Path

from .attack import AttackScenario, load_published, simulate_attack
from .dataset import CsvSchema, DatasetError, load_csv, synth_population
from .initgen import GenConstraints, InfeasibleConstraintsError
from .obfopt import SolverWarning, cluster_users
from .pipeline import ObscureReport, PipelineConfig, publish, run, verify_theorems
from .sweep import METHODS, sweep

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3, 4

# defaults for the config keys; ``budget`` has none
DEFAULTS = dict(k=100, alpha=200, l=4, beta=8, groups=4, clusters=10,
                delta=1e-4, metric="euclidean", seed=0)
CONFIG_KEYS = tuple(DEFAULTS) + ("budget",)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_config(p, budget=True):
    p.add_argument("--config", help="JSON file with k, alpha, l, beta, groups, clusters, "
                   "budget, delta, metric, seed; flags override it")
    for name, typ in (("k", int), ("alpha", int), ("l", int), ("beta", int),
                      ("groups", int), ("clusters", int), ("delta", float), ("seed", int)):
        p.add_argument(f"--{name}", type=typ)
    p.add_argument("--metric", choices=("euclidean", "js_divergence"))
    if budget:
        p.add_argument("--budget", type=float)


def _add_input(p):
    p.add_argument("--input", required=True, help="CSV with one row per user")
    p.add_argument("--private", required=True, help="private column")
    p.add_argument("--id", dest="id_col", help="user id column (default: row number)")
    p.add_argument("--features", help="comma-separated feature columns (default: all others)")
    p.add_argument("--bin-width", type=float, help="floor the private value to this width")


def build_parser():
    parser = _Parser(prog="hyobscure", description="Hybrid obfuscation and generalization.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("obscure", help="run the pipeline and publish")
    _add_input(p)
    _add_config(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("sweep", help="budget sweep over methods")
    _add_input(p)
    _add_config(p, budget=False)
    p.add_argument("--budgets", required=True, help="comma-separated budget grid")
    p.add_argument("--methods", default="hyobscure,privcheck,random",
                   help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds")
    _add_attack(p)
    p.add_argument("--out", required=True, help="tradeoff CSV path")

    p = sub.add_parser("attack", help="score a published file")
    _add_input(p)
    p.add_argument("--published", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_attack(p)

    p = sub.add_parser("check", help="re-verify a report")
    p.add_argument("--report", required=True)

    p = sub.add_parser("synth", help="generate a synthetic population")
    p.add_argument("--users", type=int, default=1000)
    p.add_argument("--clusters", type=int, default=10)
    p.add_argument("--domain", type=int, default=16, help="private domain size")
    p.add_argument("--correlation", type=float, default=0.7)
    p.add_argument("--dim", type=int, default=4, help="feature dimension")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _add_attack(p):
    p.add_argument("--scenario", choices=("one", "two"), default="one")
    p.add_argument("--train-fraction", type=float, default=0.2)
    p.add_argument("--neighbors", type=int, default=5)


def _settings(args):
    merged = dict(DEFAULTS)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(cfg) - set(CONFIG_KEYS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update(cfg)
    for key in CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    return merged


def _config(s, need_budget=True):
    if need_budget and s.get("budget") is None:
        raise UsageError("a budget is required (--budget or config)")
    try:
        cons = GenConstraints(s["k"], s["alpha"], s["l"], s["beta"], s["groups"])
        return PipelineConfig(cons, s["clusters"], float(s.get("budget") or 0.0),
                              delta=s["delta"], seed=s["seed"], metric=s["metric"])
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _dataset(args):
    feats = tuple(f.strip() for f in args.features.split(",")) if args.features else None
    return load_csv(args.input, CsvSchema(args.private, feats, args.id_col, args.bin_width))


def _scenario(args):
    kind = "scenario_one" if args.scenario == "one" else "scenario_two"
    try:
        return AttackScenario(kind, args.train_fraction, "knn", args.neighbors)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"not a comma-separated list of numbers: {text!r}") from None


def cmd_obscure(args):
    cfg = _config(_settings(args))
    ds = _dataset(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        clusters = cluster_users(ds, cfg.n_clusters, cfg.seed)
        obf, gen, report = run(ds, cfg, clusters=clusters)
        pub = publish(ds, obf, gen, clusters, cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pub.to_csv(out / "published.csv")
    report.to_json(out / "report.json")
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    for e in pub.events:
        print(f"note: {e}", file=sys.stderr)
    print(f"leakage {report.final_leakage:.6f} bits, utility loss "
          f"{report.final_utility_loss:.6f}, groups {' '.join(gen.labels)}")
    solver_trouble = any(issubclass(w.category, SolverWarning) for w in caught)
    return EXIT_SOLVER if solver_trouble or not report.solver_converged else EXIT_OK


def cmd_sweep(args):
    s = _settings(args)
    cfg = _config(s, need_budget=False)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown methods: {', '.join(bad)}")
    budgets = _floats(args.budgets)
    if not budgets:
        raise UsageError("empty budget grid")
    if args.seeds < 1:
        raise UsageError("--seeds must be positive")
    ds = _dataset(args)
    result = sweep(ds, methods, budgets, cfg, args.seeds, _scenario(args))
    result.to_csv(args.out)
    for f in result.failures:
        print("failed cell: method={} budget={} seed={}: {}".format(*f), file=sys.stderr)
    return EXIT_OK


def cmd_attack(args):
    ds = _dataset(args)
    pub = load_published(args.published, ds)
    err = simulate_attack(pub, ds, _scenario(args), args.seed)
    print(f"{err:.17g}")
    return EXIT_OK


def cmd_check(args):
    try:
        report = ObscureReport.from_json(args.report)
    except Exception as exc:  # noqa: BLE001 - any unreadable report is an input error
        raise UsageError(f"invalid report {args.report}: {exc}") from None
    findings = verify_theorems(report)
    for f in findings:
        print(f"{'PASS' if f.passed else 'FAIL'} {f.name}: {f.detail}")
    return EXIT_OK if all(f.passed for f in findings) else EXIT_CHECK


def cmd_synth(args):
    try:
        ds = synth_population(args.users, args.clusters, args.domain, args.correlation,
                              args.seed, feature_dim=args.dim)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ds.to_csv(args.out)
    return EXIT_OK


COMMANDS = dict(obscure=cmd_obscure, sweep=cmd_sweep, attack=cmd_attack,
                check=cmd_check, synth=cmd_synth)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleConstraintsError as exc:
        print(f"infeasible constraints: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DatasetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
