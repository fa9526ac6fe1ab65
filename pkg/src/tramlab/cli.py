"""``tram-lab`` command line entry point.

    tram-lab run --config configs/eps_sweep.cfg --seeds 0,1,2 --out runs/eps --check

Exit codes: 0 on success, 1 on a usage or I/O error, 2 when ``--check`` is
given and a threshold check fails.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .experiments import ExperimentConfig
from .runner import run_experiment, write_bundle

log = logging.getLogger("tramlab")

EXIT_OK, EXIT_ERROR, EXIT_CHECK_FAILED = 0, 1, 2


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be a comma list of integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tram-lab", description="TRAM experiment driver")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("--config", required=True, help="flat key = value config file")
    run.add_argument("--seeds", type=_parse_seeds, help="comma list overriding the config seeds")
    run.add_argument("--out", default=None, help="output directory (default: config out key or ./results)")
    run.add_argument("--check", action="store_true", help="exit 2 if any threshold check fails")
    run.add_argument("--timing", action="store_true", help="record per-row wall_ms in results.csv")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def _ensure_writable(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seeds:
            cfg = cfg.with_seeds(args.seeds)
        out = Path(args.out or cfg.get("out", "results"))
        _ensure_writable(out)
    except (OSError, ValueError, KeyError) as exc:
        print(f"tram-lab: {exc}", file=sys.stderr)
        return EXIT_ERROR
    log.info("running %s over seeds %s", cfg.experiment, cfg.seeds)
    bundle = run_experiment(cfg, timing=args.timing)
    write_bundle(bundle, out)
    for check in bundle.checks:
        print(f"{'PASS' if check.passed else 'FAIL'} {check.name} {check.detail}".rstrip())
    print(f"wrote {out / 'results.csv'} ({len(bundle.rows)} rows) in {bundle.wall_s:.1f} s")
    if args.check and not bundle.checks_passed:
        return EXIT_CHECK_FAILED
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "run":
        return cmd_run(args)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
