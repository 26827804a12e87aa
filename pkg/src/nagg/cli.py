"""Command-line entry point: ``nagg {train,propcheck,gradcheck,synth,sweep}``.

Exit codes: 0 success, 1 a check failed, 2 invalid configuration,
3 training diverged, 4 file-system or data-format failure.
"""

import argparse
import csv
import os
import sys

from . import checks, experiment
from . import config as config_mod
from .autodiff import inject_fault
from .data import generate_sbm, make_splits, save_dataset
from .errors import ConfigError, DataFormatError, DivergenceError

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3, 4


def _run_overrides(args):
    """``--set`` pairs plus the dedicated flags, flags last so they win."""
    pairs = list(args.set or [])
    if getattr(args, "out", None):
        pairs.append(f"out_dir={args.out}")
    if getattr(args, "seed_list", None):
        pairs.append(f"seeds={args.seed_list}")
    elif getattr(args, "seeds", None) is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be at least 1")
        pairs.append("seeds=" + ",".join(str(s) for s in range(args.seeds)))
    return pairs


def _load(args):
    cfg = config_mod.load(args.config, _run_overrides(args))
    experiment.validate(cfg)
    return cfg


def cmd_train(args):
    cfg = _load(args)
    _, summary = experiment.run_experiment(cfg)
    print(experiment.format_summary(summary))
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load(args)
    if cfg["aggregator"] not in ("lp", "poly", "softmax"):
        raise ConfigError(f"sweep needs aggregator lp, poly or softmax, got {cfg['aggregator']!r}")
    try:
        grid = [float(v) for v in args.grid.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--grid must be comma-separated numbers, got {args.grid!r}") from None
    if not grid:
        raise ConfigError("--grid is empty")
    points = []
    for value in grid:
        point = dict(cfg, agg_learnable=False, agg_value=value)
        config_mod.check(point)
        experiment.validate(point)
        points.append(point)
    rows = []
    for value, point in zip(grid, points):
        name = f"{experiment.run_name(point)}-fixed-{value:g}"
        _, summary = experiment.run_experiment(point, name=name)
        print(experiment.format_summary(summary))
        rows.append((value, summary["test_acc_mean"], summary["test_acc_std"]))
    path = os.path.join(cfg["out_dir"], f"{experiment.run_name(cfg)}-sweep.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param_value", "mean_acc", "std_acc"])
        for row in rows:
            w.writerow([repr(v) for v in row])
    print(f"wrote {path}")
    return EXIT_OK


def cmd_synth(args):
    cfg = config_mod.load(args.config, list(args.set or []))
    try:
        spec = experiment.sbm_spec(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    bundle = generate_sbm(spec, cfg["data_seed"])
    bundle.name = experiment.dataset_name(dict(cfg, dataset="sbm-std"))
    split = None
    if args.with_splits:
        try:
            split = make_splits(bundle.labels, cfg["per_class"], cfg["val_size"],
                                cfg["test_size"], cfg["data_seed"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    save_dataset(bundle, args.out, split)
    print(f"wrote {bundle.num_nodes} nodes, {len(bundle.undirected_edges())} edges to {args.out}")
    return EXIT_OK


def _tolerances(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--tol expects name=value, got {item!r}")
        name, value = item.split("=", 1)
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"--tol value for {name!r} is not a number") from None
        names = list(checks.PROPERTY_TOLERANCES) if name == "all" else [name]
        for n in names:
            if n not in checks.PROPERTY_TOLERANCES:
                raise ConfigError(f"unknown property {n!r}; known: "
                                  f"{', '.join(checks.PROPERTY_TOLERANCES)}")
            out[n] = value
    return out


def _report(results):
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}")
        return EXIT_CHECK
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def cmd_propcheck(args):
    return _report(checks.property_suite(args.seed, _tolerances(args.tol)))


def cmd_gradcheck(args):
    if args.step <= 0:
        raise ConfigError("--step must be positive")
    if args.inject_fault:
        if args.inject_fault not in checks.OPS and not args.inject_fault.startswith("agg_"):
            raise ConfigError(f"unknown op {args.inject_fault!r}")
        with inject_fault(args.inject_fault, args.fault_factor):
            return _report(checks.gradient_suite(args.seed, args.step))
    return _report(checks.gradient_suite(args.seed, args.step))


def _run_flags(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", help="output directory (overrides out_dir)")
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seeds", type=int, help="run seeds 0..N-1")
    seeds.add_argument("--seed-list", help="comma-separated seeds, e.g. 0,3,7")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(prog="nagg", description="GNN aggregation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one configuration over several seeds")
    _run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="fixed aggregator parameter sweep")
    _run_flags(p)
    p.add_argument("--grid", required=True, help="comma-separated parameter values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write a synthetic block-model dataset")
    p.add_argument("--config", help="key = value config file (sbm_* keys)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.add_argument("--with-splits", action="store_true", help="also write splits.json")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("propcheck", help="aggregator property suite")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--tol", action="append", metavar="NAME=VALUE",
                   help="override a property tolerance; NAME may be 'all'")
    p.set_defaults(func=cmd_propcheck)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5, help="central-difference step")
    p.add_argument("--inject-fault", metavar="OP", help="scale the gradient of OP to test the checker")
    p.add_argument("--fault-factor", type=float, default=1.1)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, DataFormatError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
