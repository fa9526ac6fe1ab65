"""Run an experiment over seeds and write its result bundle.

A bundle directory holds ``results.csv`` (one row per predictor and seed),
``results.json`` (config echo, rows, per-predictor aggregates, checks and run
provenance) and ``plotdata/*.tsv`` tables for external plotting.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from .experiments import (
    CheckResult,
    ExperimentConfig,
    PlotTable,
    Row,
    run_checks,
    run_seed,
    sweep_gaps,
)

THREADS_ENV = "TRAMLAB_THREADS"

PLOT_KINDS = {
    "regression_curve": ("synth_regression",),
    "classification_curve": ("synth_classification",),
    "eps_sweep": ("eps_sweep",),
    "cmi_table": ("cmi_table",),
}


@dataclass
class ResultBundle:
    config: ExperimentConfig
    rows: list[Row]
    plots: dict[str, PlotTable] = field(default_factory=dict)
    checks: list[CheckResult] = field(default_factory=list)
    wall_s: float = 0.0
    timing: bool = False

    @property
    def metric_names(self) -> list[str]:
        names: list[str] = []
        for r in self.rows:
            names += [k for k in r.metrics if k not in names]
        return names

    def aggregate(self) -> list[dict]:
        """Mean and sample std (ddof=1, 0 for a single seed) per predictor and metric."""
        groups: dict[tuple[str, str], list[float]] = {}
        for r in self.rows:
            for k, v in r.metrics.items():
                groups.setdefault((r.predictor, k), []).append(v)
        out = []
        for (pred, metric), vals in groups.items():
            arr = np.asarray(vals, dtype=float)
            std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
            out.append({"predictor": pred, "metric": metric, "mean": float(arr.mean()), "std": std, "n": len(arr)})
        return out

    @property
    def checks_passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1").strip()
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def run_experiment(cfg: ExperimentConfig, timing: bool = False, workers: int | None = None) -> ResultBundle:
    """Run every seed (in parallel when ``workers`` > 1) and merge in seed order."""
    workers = worker_count() if workers is None else max(1, workers)
    t0 = time.perf_counter()
    if workers == 1 or len(cfg.seeds) == 1:
        outputs = [run_seed(cfg, s) for s in cfg.seeds]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(cfg.seeds))) as pool:
            outputs = list(pool.map(run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    bundle = ResultBundle(cfg, [], timing=timing)
    for out in outputs:
        bundle.rows.extend(out.rows)
        for name, table in out.plots.items():
            bundle.plots.setdefault(name, table)
    _add_summary_plots(bundle)
    bundle.checks = run_checks(cfg, bundle.rows)
    bundle.wall_s = time.perf_counter() - t0
    return bundle


def _add_summary_plots(bundle: ResultBundle) -> None:
    cfg = bundle.config
    if cfg.experiment == "eps_sweep":
        table = sweep_gaps(bundle.rows, cfg.get_floats("sweep.eps", [0.1, 0.5, 1.0, 1.5, 2.0]))
        bundle.plots["eps_sweep"] = PlotTable(
            ["eps", "probe_pi_rmse", "probe_nopi_rmse", "gap"], [[e, p, q, q - p] for e, p, q in table]
        )
    elif cfg.experiment == "cmi_table":
        by_eps: dict[float, list[Row]] = {}
        for r in bundle.rows:
            by_eps.setdefault(r.metrics["eps"], []).append(r)
        rows = []
        for eps, rs in by_eps.items():
            ref = rs[0].metrics.get("reference", math.nan)
            rows.append([eps, float(np.mean([r.metrics["cmi"] for r in rs])), ref])
        bundle.plots["cmi_table"] = PlotTable(["eps", "cmi", "reference"], rows)


def emit_plot_data(bundle: ResultBundle, kind: str) -> PlotTable:
    """The plot table ``kind`` of ``bundle``; raises ValueError if the experiment has none."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {', '.join(PLOT_KINDS)}")
    if bundle.config.experiment not in PLOT_KINDS[kind]:
        raise ValueError(f"plot kind {kind!r} does not apply to experiment {bundle.config.experiment!r}")
    if kind not in bundle.plots:
        raise ValueError(f"bundle has no {kind!r} data")
    return bundle.plots[kind]


def _fmt(value: float) -> str:
    return repr(float(value))


def write_bundle(bundle: ResultBundle, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    (out / "plotdata").mkdir(parents=True, exist_ok=True)
    metrics = bundle.metric_names
    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["predictor", "seed", *metrics, "wall_ms"])
        for r in bundle.rows:
            vals = [_fmt(r.metrics[m]) if m in r.metrics else "" for m in metrics]
            writer.writerow([r.predictor, r.seed, *vals, f"{r.wall_ms:.3f}" if bundle.timing else ""])
    payload = {
        "config": dict(bundle.config.values),
        "rows": [{"predictor": r.predictor, "seed": r.seed, "metrics": r.metrics} for r in bundle.rows],
        "aggregate": bundle.aggregate(),
        "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in bundle.checks],
        "provenance": {
            "experiment": bundle.config.experiment,
            "seeds": bundle.config.seeds,
            "version": _version(),
            "wall_s": bundle.wall_s,
        },
    }
    with open(out / "results.json", "w") as fh:
        json.dump(payload, fh, indent=2, allow_nan=True)
    for name, table in bundle.plots.items():
        with open(out / "plotdata" / f"{name}.tsv", "w", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t")
            writer.writerow(table.header)
            writer.writerows([[_fmt(v) for v in row] for row in table.rows])
    return out


def read_results_csv(path: str | Path) -> list[Row]:
    """Rows of a written ``results.csv``; blank cells are skipped."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            metrics = {
                k: float(v) for k, v in rec.items() if k not in ("predictor", "seed", "wall_ms") and v != ""
            }
            rows.append(Row(rec["predictor"], int(rec["seed"]), metrics))
    return rows
