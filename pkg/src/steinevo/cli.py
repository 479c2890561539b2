"""Command-line entry point: ``steinevo {sample,bench,grid,gt,check}``.

Exit codes: 0 on success, 2 on configuration errors, 3 on runtime failures.
"""
import argparse
import json
import sys
from dataclasses import replace

from . import checks, presets
from .errors import ConfigError, SteinEvoError
from .harness import (METHODS, TASKS, config_from_dict, emit_csv, grid_search, ground_truth,
                      run_experiment, write_csv)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

# flag name -> RunConfig field
_FLAGS = {
    "task": "task", "method": "method", "n_particles": "n_particles", "subpop_size": "subpop_size",
    "iterations": "iterations", "seed": "seed", "out": "out", "h": "h", "lr": "lr",
    "elite": "elite", "sigma_init": "sigma_init", "prior_scale": "prior_scale", "zeta": "zeta",
    "schedule": "schedule", "dump": "dump", "gt_dir": "gt_dir", "dataset": "dataset",
    "gt_burn_in": "gt_burn_in",
}


def _add_run_flags(p):
    p.add_argument("--config", help="JSON file with RunConfig fields (flags override it)")
    p.add_argument("--preset", help="named preset, e.g. gmm/svcmaes")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--n-particles", type=int)
    p.add_argument("--subpop-size", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="metrics CSV path")
    p.add_argument("--h", type=float, help="kernel bandwidth (default: median heuristic)")
    p.add_argument("--lr", type=float)
    p.add_argument("--elite", type=int)
    p.add_argument("--sigma-init", type=float)
    p.add_argument("--prior-scale", type=float)
    p.add_argument("--zeta", type=float)
    p.add_argument("--schedule", choices=("constant", "log_clamped", "log_fade"))
    p.add_argument("--dump", help="JSONL particle dump path")
    p.add_argument("--gt-dir", help="ground-truth cache directory")
    p.add_argument("--gt-burn-in", type=int)
    p.add_argument("--dataset", help="CSV dataset for the logreg task")


def build_parser():
    parser = argparse.ArgumentParser(prog="steinevo", description="Stein variational evolution strategies")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("sample", help="run one (config, seed) experiment")
    _add_run_flags(p)
    p = sub.add_parser("bench", help="run a config over several seeds")
    _add_run_flags(p)
    p.add_argument("--seeds", type=int, default=10, help="number of seeds, starting at --seed")
    p = sub.add_parser("grid", help="hyperparameter grid search")
    _add_run_flags(p)
    p.add_argument("--grid", help="JSON object mapping parameter -> list of values "
                                   "(default: the built-in grid for the task and method)")
    p.add_argument("--metric", default=None, help="selection metric (default depends on task)")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p = sub.add_parser("gt", help="generate and cache ground-truth samples")
    _add_run_flags(p)
    sub.add_parser("check", help="run the built-in invariant checks")
    sub.add_parser("presets", help="list preset names")
    return parser


def config_from_args(args):
    data = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    if args.preset:
        data["preset"] = args.preset
    for flag, name in _FLAGS.items():
        val = getattr(args, flag, None)
        if val is not None:
            data[name] = val
    return config_from_dict(data)


def _default_metric(cfg):
    if cfg.task in ("gmm", "banana", "motion"):
        return "mmd2"
    if cfg.task == "logreg":
        return "test_accuracy"
    if cfg.task in ("pendulum", "mountaincar"):
        return "best_return"
    return "best_f"


def _run_many(cfgs, out):
    records = []
    for cfg in cfgs:
        records.extend(run_experiment(cfg))
    if out:
        emit_csv(records, out)
    else:
        write_csv(records, sys.stdout)
    return records


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "presets":
            print("\n".join(presets.preset_names()))
            return EXIT_OK
        if args.command == "check":
            results = checks.run_all()
            for name, ok, detail in results:
                print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
            return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_RUNTIME
        cfg = config_from_args(args)
        if args.command == "sample":
            _run_many([cfg], cfg.out)
        elif args.command == "bench":
            cfgs = [replace(cfg, seed=cfg.seed + k, dump=None) for k in range(args.seeds)]
            _run_many(cfgs, cfg.out)
        elif args.command == "grid":
            metric = args.metric or _default_metric(cfg)
            if args.grid:
                try:
                    grid = json.loads(args.grid)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"--grid is not valid JSON: {exc}") from exc
            else:
                grid = presets.tuning_grid(cfg.task, cfg.method)
            seeds = range(cfg.seed, cfg.seed + args.seeds)
            best, report = grid_search(cfg, grid, metric, seeds=seeds, workers=args.workers)
            print(json.dumps({"best": {k: getattr(best, k) for k in sorted(grid)}, "report": report}))
        elif args.command == "gt":
            x = ground_truth(cfg)
            print(f"{cfg.task}: {x.shape[0]} ground-truth samples ready")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SteinEvoError, ArithmeticError, OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
