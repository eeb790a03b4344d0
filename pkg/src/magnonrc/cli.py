"""Command line entry point: ``magnonrc {run,bench-memory,gradient-probe,report}``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict
from pathlib import Path

from . import aor as aor_mod
from .harness import (ExperimentConfig, _write_csv, AGG_HEADER, emit_report, gradient_probe, memory_benchmark,
                      read_trials_csv, run_experiment)


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="base seed (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for sample simulations")
    p.add_argument("--out-dir", default="results", help="directory for CSV outputs")
    p.add_argument("--cache-dir", default=None, help="feature cache directory (off when omitted)")


def _aor_config(args) -> aor_mod.AorConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        phys = cfg.physics_config()
        if not isinstance(phys, aor_mod.AorConfig):
            raise ValueError("config must describe an aor experiment")
    else:
        phys = aor_mod.AorConfig(dt=args.dt)
    if args.seed is not None:
        phys = aor_mod.AorConfig(**{**asdict(phys), "seed": args.seed})
    return phys


def build_parser():
    ap = argparse.ArgumentParser(prog="magnonrc", description="spin-wave reservoir experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config and write trial/aggregate CSVs")
    p.add_argument("config")
    _common(p)

    p = sub.add_parser("bench-memory", help="input-memory and parity accuracy per delay")
    p.add_argument("--config", default=None, help="aor experiment config supplying the physics")
    p.add_argument("--j-max", type=int, default=5)
    p.add_argument("--intervals", type=int, default=200)
    p.add_argument("--levels", default="0.25,0.75", help="input values for bits 0 and 1")
    p.add_argument("--dt", type=float, default=100e-15)
    _common(p)

    p = sub.add_parser("gradient-probe", help="forward-difference ANN gradients through the AOR")
    p.add_argument("--config", default=None, help="aor experiment config supplying the physics")
    p.add_argument("--intervals", type=int, default=10)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--params", default="output", help="'output', 'all' or comma-separated indices")
    p.add_argument("--bypass-ann", action="store_true", help="hold the ANN gain at 1")
    p.add_argument("--dt", type=float, default=100e-15)
    _common(p)

    p = sub.add_parser("report", help="recompute the aggregate CSV from a trial CSV")
    p.add_argument("trials_csv")
    _common(p)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ValueError("--threads must be >= 1")
        out = Path(args.out_dir)
        if args.command == "run":
            cfg = ExperimentConfig.load(args.config)
            report = run_experiment(cfg, cache_dir=args.cache_dir, threads=args.threads, seed=args.seed)
            paths = emit_report(report, out)
            for method in cfg.readout.methods:
                mx, mean, std = report.summary(method)
                print(f"{cfg.name} {method}: max {mx:.1f} mean {mean:.1f} std {std:.1f}")
            print(f"wrote {', '.join(str(p) for p in paths.values())}")
        elif args.command == "bench-memory":
            phys = _aor_config(args)
            levels = tuple(float(v) for v in args.levels.split(","))
            if len(levels) != 2:
                raise ValueError("--levels needs two comma-separated values")
            res = memory_benchmark(phys, args.j_max, args.intervals, seed=phys.seed, levels=levels)
            path = out / "memory.csv"
            out.mkdir(parents=True, exist_ok=True)
            res.to_csv(path)
            for j, m, pa, pv in zip(res.j, res.memory, res.parity, res.memory_p):
                print(f"j={j} memory {m:.1f}% (p={pv:.2g}) parity {pa:.1f}%")
            print(f"wrote {path}")
        elif args.command == "gradient-probe":
            phys = _aor_config(args)
            which = args.params if args.params in ("output", "all") else [int(v) for v in args.params.split(",")]
            rep = gradient_probe(phys, args.intervals, args.delta, which, fixed_gain=1.0 if args.bypass_ann else None)
            out.mkdir(parents=True, exist_ok=True)
            path = out / "gradient_probe.csv"
            rep.to_csv(path)
            print(f"base loss {rep.base_loss:.6g}; max |estimate| {rep.max_abs:.3g} over {len(rep.indices)} parameters")
            print(f"wrote {path}")
        else:
            report = read_trials_csv(args.trials_csv)
            stem = Path(args.trials_csv).name.replace("trials.csv", "aggregate.csv")
            if stem == Path(args.trials_csv).name:
                stem = "aggregate.csv"
            path = out / stem
            _write_csv(path, AGG_HEADER, report.aggregates())
            print(f"wrote {path}")
    except (Exception, KeyboardInterrupt) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
