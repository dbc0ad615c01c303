"""expcli: config-driven experiment runner.

Exit codes: 0 success, 2 config error, 3 a run diverged, 4 assertion failure
(claim1 contract not met).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import harness
from .config import ConfigError, parse_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_ASSERTION = 4


def _add_common(parser: argparse.ArgumentParser, config_required: bool = True) -> None:
    parser.add_argument("--config", required=config_required, help="experiment config (TOML)")
    parser.add_argument("--out", default="out", help="output directory for CSVs")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for independent runs")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")


def _load(args: argparse.Namespace):
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expcli",
        description="Decentralized optimization experiments under heavy-tailed gradient noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one config across its repeat seeds")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="sweep one axis of a base config")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=("lambda", "sigma", "n"))
    p_sweep.add_argument(
        "--values", required=True,
        help="comma-separated axis values (topology kinds for lambda, numbers otherwise)",
    )

    p_grid = sub.add_parser("grid", help="hyperparameter grid search")
    _add_common(p_grid)
    p_grid.add_argument("--grid", default=None, help="TOML grid file; defaults to the built-in sets")

    p_claim = sub.add_parser("claim1", help="normalized-descent stall vs tracking repair")
    p_claim.add_argument("--n", type=int, default=2, help="node count (even)")
    p_claim.add_argument("--floor", type=float, default=1.0, help="required gradient floor B >= 1")
    p_claim.add_argument("--rounds", type=int, default=100)
    p_claim.add_argument("--alpha", type=float, default=0.25)

    p_rate = sub.add_parser("rate-check", help="fit empirical rate against the schedule's exponent")
    _add_common(p_rate)
    p_rate.add_argument(
        "--horizons", required=True, help="comma-separated round counts (need >= 3)"
    )

    p_noise = sub.add_parser("noise-diag", help="noise sampler diagnostics")
    _add_common(p_noise)
    p_noise.add_argument("--draws", type=int, default=10**6)

    p_topo = sub.add_parser("topo-info", help="print the config graph's contraction factor")
    _add_common(p_topo)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _load(args)
            result = harness.cmd_run(cfg, args.out, threads=args.threads)
            for path in result["traces"]:
                print(path)
            print(result["aggregate"])
            if result["diverged"]:
                print("diverged: at least one repeat hit a non-finite state", file=sys.stderr)
                return EXIT_DIVERGED
            return EXIT_OK

        if args.command == "sweep":
            cfg = _load(args)
            raw = [v.strip() for v in args.values.split(",") if v.strip()]
            values: list = raw if args.axis == "lambda" else [float(v) for v in raw]
            if args.axis == "n":
                values = [int(v) for v in values]
            result = harness.cmd_sweep(cfg, args.axis, values, args.out, threads=args.threads)
            print(result["summary"])
            return EXIT_OK

        if args.command == "grid":
            cfg = _load(args)
            result = harness.cmd_grid(cfg, args.out, grid_file=args.grid, threads=args.threads)
            print(result["ranked"])
            print(f"best: {result['best']} -> {result['best_score']:.6g}")
            return EXIT_OK

        if args.command == "claim1":
            report = harness.cmd_claim1(args.n, args.floor, args.rounds, alpha=args.alpha)
            print(
                f"plain normalized descent: time-averaged gradient norm "
                f"{report['vn_time_avg_grad']:.6g} (floor {report['floor']:.6g}), "
                f"iterates bit-constant: {report['vn_bit_constant']}"
            )
            print(
                f"with gradient tracking: final gradient norm {report['gt_final_grad']:.6g}, "
                f"below 2*alpha after {report['gt_rounds_to_band']} rounds"
            )
            if not report["vn_holds"]:
                print("claim1 contract violated", file=sys.stderr)
                return EXIT_ASSERTION
            return EXIT_OK

        if args.command == "rate-check":
            cfg = _load(args)
            horizons = [int(v) for v in args.horizons.split(",") if v.strip()]
            report = harness.cmd_rate_check(cfg, horizons, threads=args.threads)
            print(f"fitted slope: {report['fitted']:.6g}")
            print(f"theoretical exponent: {report['theoretical']:.6g}")
            return EXIT_OK

        if args.command == "noise-diag":
            cfg = _load(args)
            report = harness.cmd_noise_diag(cfg, args.out, n_draws=args.draws)
            for key, value in report.items():
                print(f"{key}: {value}")
            return EXIT_OK

        if args.command == "topo-info":
            cfg = _load(args)
            info = harness.cmd_topo_info(cfg)
            print(
                f"{info['kind']} n={info['n']} weighting={info['weighting']} "
                f"lambda={info['lambda']:.12g}"
            )
            return EXIT_OK

        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
