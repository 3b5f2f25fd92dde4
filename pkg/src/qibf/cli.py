"""Command-line interface.

Subcommands: simulate, replay, compare, design-quantizer, resync,
whiteness, test-acceptance.  All experiment subcommands take
``--config PATH`` (a JSON file or a built-in fixture name), ``--out DIR``
and ``--seed N``; a few config values can be overridden by flags.

Exit codes: 0 success, 2 configuration error, 3 numerical degeneration,
4 acceptance failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import (
    ConfigError,
    DegenerateDensityError,
    ExperimentError,
    OracleDegenerateError,
    QibfError,
    SingularGainError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_ACCEPTANCE = 4


def _common(parser):
    parser.add_argument("--config", required=True,
                        help="config JSON path or fixture name (case1, case2)")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seeds")
    parser.add_argument("--horizon", type=int, default=None)
    parser.add_argument("--methods", default=None,
                        help="comma-separated subset of kalman,K,R,S")
    parser.add_argument("--grid-points", type=int, default=None)
    parser.add_argument("--no-densities", action="store_true",
                        help="skip per-step density CSV dumps")


def _load(args):
    from .config import load_config

    cfg = load_config(args.config)
    if args.horizon is not None:
        cfg.horizon = args.horizon
    if args.methods is not None:
        cfg.methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if args.grid_points is not None:
        cfg.grid_points = args.grid_points
    if args.no_densities:
        cfg.dump_densities = False
    # revalidate after overrides
    cfg.__post_init__()
    return cfg


def _out_dir(args, cfg, suffix=""):
    from .runner import default_out_root

    base = args.out or os.path.join(default_out_root(), cfg.name + suffix)
    return base


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qibf",
        description="State estimation from quantized innovations: "
                    "simulation, replay, and receiver comparison.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate the plant and run the configured methods")
    _common(p_sim)

    p_rep = sub.add_parser("replay", help="replay the recorded noises from the config")
    _common(p_rep)

    p_cmp = sub.add_parser("compare", help="run all configured methods and write a combined summary")
    _common(p_cmp)

    p_dq = sub.add_parser("design-quantizer", help="emit a Lloyd-Max quantizer as JSON")
    p_dq.add_argument("--sigma", type=float, required=True)
    p_dq.add_argument("--levels", type=int, required=True)
    p_dq.add_argument("--tol", type=float, default=1e-10)
    p_dq.add_argument("--out", default=None, help="output file (default stdout)")

    p_rs = sub.add_parser("resync", help="clean vs corrupted receiver after one symbol flip")
    _common(p_rs)
    p_rs.add_argument("--flip-time", type=int, required=True)
    p_rs.add_argument("--flip-symbol", type=int, required=True)

    p_wh = sub.add_parser("whiteness", help="innovation autocorrelation report")
    _common(p_wh)
    p_wh.add_argument("--max-lag", type=int, default=10)

    p_acc = sub.add_parser("test-acceptance", help="run the acceptance suite")
    p_acc.add_argument("--quiet", action="store_true")

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateDensityError, SingularGainError, OracleDegenerateError) as exc:
        print(f"numerical degeneration: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ExperimentError as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        if isinstance(exc.cause, (DegenerateDensityError, SingularGainError,
                                  OracleDegenerateError)):
            return EXIT_NUMERICAL
        return EXIT_NUMERICAL
    except QibfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def _dispatch(args) -> int:
    if args.command == "design-quantizer":
        from .quantizer import lloyd_max_design

        q = lloyd_max_design(args.sigma, args.levels, tol=args.tol)
        text = json.dumps(q.to_dict(), indent=2)
        if args.out:
            with open(args.out, "w") as f:
                f.write(text + "\n")
        else:
            print(text)
        return EXIT_OK

    if args.command == "test-acceptance":
        from .acceptance import run_all

        ok = run_all(verbose=not args.quiet)
        return EXIT_OK if ok else EXIT_ACCEPTANCE

    cfg = _load(args)

    if args.command in ("simulate", "replay", "compare"):
        from .runner import run_experiment, write_comparison_csv

        if args.command == "simulate":
            cfg.realization = None
        elif args.command == "replay" and cfg.realization is None:
            raise ConfigError("replay needs a 'realization' block in the config")
        out = _out_dir(args, cfg)
        manifest = run_experiment(cfg, out_dir=out, seed=args.seed)
        if args.command == "compare":
            for sd, summary in manifest["seeds"].items():
                write_comparison_csv(
                    summary, os.path.join(out, f"seed{sd}", "comparison.csv"))
        print(f"wrote {os.path.join(out, 'manifest.json')}")
        return EXIT_OK if manifest["status"] == "ok" else EXIT_NUMERICAL

    if args.command == "resync":
        from .runner import resync_experiment

        report = resync_experiment(cfg, args.flip_time, args.flip_symbol,
                                   seed=args.seed, out_dir=_out_dir(args, cfg, "_resync"))
        peak = max(t["abs_mean_diff"] for t in report["trace"])
        print(f"flip at k={args.flip_time}; peak |mean diff| {peak:.6f}")
        return EXIT_OK

    if args.command == "whiteness":
        from .runner import whiteness_report

        report = whiteness_report(cfg, max_lag=args.max_lag, seed=args.seed,
                                  out_dir=_out_dir(args, cfg, "_whiteness"))
        print(f"band 3/sqrt(T) = {report['band']:.4f}; "
              f"all lags within band: {report['all_within_band']}")
        return EXIT_OK

    raise ConfigError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
