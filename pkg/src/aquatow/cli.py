"""Command-line entry point: run experiments, campaigns, and log replays.

Exit codes: 0 success, 2 simulation diverged, 3 configuration error.
"""

import argparse
import os
import sys

from . import config as cfgmod
from . import harness

EXIT_OK = 0
EXIT_DIVERGED = 2
EXIT_CONFIG = 3


def _out_dir(arg: str | None) -> str:
    out = arg or os.environ.get("AQUATOW_OUT_DIR", ".")
    os.makedirs(out, exist_ok=True)
    return out


def cmd_run(args) -> int:
    try:
        flat = cfgmod.load_flat(args.config)
        if args.mode:
            flat["mode"] = args.mode
        cfg = harness.config_from_flat(flat)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args.out)
    try:
        log = harness.run_experiment(cfg)
    except harness.SimulationDiverged as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        harness.export_csv(exc.partial_log, os.path.join(out, "run_partial.csv"))
        return EXIT_DIVERGED
    disturbance = cfg.mission.disturbances[0] if cfg.mission.disturbances else None
    metrics = harness.compute_metrics(log, skip=cfg.skip, disturbance=disturbance)
    harness.export_csv(log, os.path.join(out, "run.csv"))
    harness.export_summary(metrics, os.path.join(out, "summary.txt"))
    harness.export_signals(log, os.path.join(out, "signals"))
    print(f"mean_distance = {metrics.mean_distance:.4f} m "
          f"(full run {metrics.mean_distance_full:.4f} m)")
    if metrics.recovery_time is not None:
        print(f"recovery_time = {metrics.recovery_time:.2f} s")
    print(f"logs written to {out}")
    return EXIT_OK


def cmd_campaign(args) -> int:
    try:
        flat = cfgmod.load_flat(args.config)
        cfg = harness.config_from_flat(flat)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args.out)
    result = harness.run_campaign(cfg, n_pairs=args.pairs, jobs=args.jobs)
    harness.export_campaign_summary(result, os.path.join(out, "campaign.txt"))
    for mode, fit in sorted(result.fits.items()):
        print(f"{mode}: mu = {fit.mu:.3f} m, sigma = {fit.sigma:.3f} m "
              f"({fit.n_samples} runs)")
    wins = sum(1 for m, s in result.pair_means if m < s)
    print(f"multi wins {wins}/{len(result.pair_means)} pairs")
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        log = harness.load_csv(args.log)
    except harness.IoFailure as exc:
        print(f"cannot load log: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    metrics = harness.compute_metrics(log)
    if args.metrics:
        print(f"mean_distance = {metrics.mean_distance:.4f} m")
        print(f"max_distance = {metrics.max_distance:.4f} m")
        print(f"mean_distance_full = {metrics.mean_distance_full:.4f} m")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aquatow",
        description="Tethered USV/UAV object-towing simulation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a single closed-loop experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=["multi", "single"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("campaign", help="paired multi/single statistical campaign")
    p.add_argument("--config", required=True)
    p.add_argument("--pairs", type=int, default=30)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("replay", help="recompute metrics from a CSV log")
    p.add_argument("--log", required=True)
    p.add_argument("--metrics", action="store_true")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
