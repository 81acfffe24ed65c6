"""Seeded coverage-sweep benchmark over synthetic scenes."""

from __future__ import annotations

import csv
import dataclasses
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput
from .geometry import angular_error, distance_error
from .pipeline import METHODS, fit_normalized
from .robust import RobustConfig
from .synthetic import SceneSpec, coverage_subset, generate_scene

TRIAL_HEADER = ["seed", "coverage", "method", "delta_theta_deg", "delta_d", "runtime_s", "n_points", "status"]
SUMMARY_HEADER = ["coverage", "method", "metric", "median", "q1", "q3", "n"]


@dataclass
class TrialRecord:
    seed: int
    coverage: float
    method: str
    delta_theta: float
    delta_d: float
    runtime: float
    n_points: int
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def trial_seed(master_seed: int, coverage_index: int, trial_index: int) -> int:
    """64-bit scene seed depending only on the sweep coordinates."""
    words = np.random.SeedSequence([master_seed, coverage_index, trial_index]).generate_state(2, np.uint32)
    return int(words[0]) << 32 | int(words[1])


def run_trial(template: SceneSpec, seed: int, coverage: float, methods, config: RobustConfig):
    scene = generate_scene(dataclasses.replace(template, seed=seed))
    idx, _ = coverage_subset(scene.points, scene.truth.apex, coverage)
    p, n = scene.points[idx], scene.normals[idx]
    truth = scene.truth.axis
    records = []
    for method in methods:
        start = time.perf_counter()
        try:
            report = fit_normalized(p, n, config, method)
            dt = time.perf_counter() - start
            records.append(TrialRecord(
                seed, coverage, method,
                angular_error(report.axis.direction, truth.direction),
                distance_error(report.axis, truth.anchor),
                dt, len(p),
            ))
        except Exception as exc:  # recorded, never aborts the sweep
            dt = time.perf_counter() - start
            records.append(TrialRecord(seed, coverage, method, math.nan, math.nan, dt, len(p),
                                       f"failed:{type(exc).__name__}"))
    return records


def _run_job(args):
    return run_trial(*args)


def default_workers() -> int:
    env = os.environ.get("SPIRALFIT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_experiment(template: SceneSpec, coverages, trials_per_level: int, methods=METHODS,
                   master_seed: int = 0, config: RobustConfig | None = None,
                   workers: int | None = None) -> list[TrialRecord]:
    """Every (coverage, trial) pair on a fresh scene, records ordered by index."""
    if trials_per_level < 1:
        raise ValueError("trials_per_level must be >= 1")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    config = config or RobustConfig()
    jobs = [
        (template, trial_seed(master_seed, ci, ti), float(cov), tuple(methods), config)
        for ci, cov in enumerate(coverages)
        for ti in range(trials_per_level)
    ]
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(jobs) == 1:
        results = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [rec for batch in results for rec in batch]


def quartiles(values) -> tuple[float, float, float]:
    """``(q1, median, q3)`` with linear interpolation between order statistics."""
    q1, med, q3 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(q1), float(med), float(q3)


def summarize(records) -> list[dict]:
    """Median and quartiles of both error metrics per (coverage, method); failed trials skipped."""
    records = list(records)
    if not records:
        raise EmptyInput("no records to summarize")
    groups: dict = {}
    for r in records:
        groups.setdefault((r.coverage, r.method), []).append(r)
    rows = []
    for (cov, method), recs in groups.items():
        ok = [r for r in recs if r.ok]
        for metric, attr in (("delta_theta_deg", "delta_theta"), ("delta_d", "delta_d")):
            if ok:
                q1, med, q3 = quartiles([getattr(r, attr) for r in ok])
            else:
                q1 = med = q3 = math.nan
            rows.append({"coverage": cov, "method": method, "metric": metric,
                         "median": med, "q1": q1, "q3": q3, "n": len(ok)})
    return rows


def write_trials_csv(path, records, include_runtime: bool = False) -> None:
    """Trial CSV; ``runtime_s`` is left empty unless requested so reruns are byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_HEADER)
        for r in records:
            w.writerow([r.seed, repr(r.coverage), r.method, repr(r.delta_theta), repr(r.delta_d),
                        repr(r.runtime) if include_runtime else "", r.n_points, r.status])


def write_summary_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for row in rows:
            w.writerow([repr(row["coverage"]), row["method"], row["metric"],
                        repr(row["median"]), repr(row["q1"]), repr(row["q3"]), row["n"]])


def read_trials_csv(path) -> list[TrialRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(TrialRecord(
                int(row["seed"]), float(row["coverage"]), row["method"],
                float(row["delta_theta_deg"]), float(row["delta_d"]),
                float(row["runtime_s"]) if row["runtime_s"] else math.nan,
                int(row["n_points"]), row["status"],
            ))
    return out
