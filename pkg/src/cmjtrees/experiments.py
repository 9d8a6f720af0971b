"""Replicated Monte Carlo studies with deterministic seeding and aggregation.

Each replicate gets its own 64-bit seed derived from
``(master_seed, n_index, replicate)`` through :class:`numpy.random.SeedSequence`,
so results do not depend on how replicates are spread over workers.
"""

from __future__ import annotations

import csv
import io
import math
import multiprocessing as mp
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import RegimeSchedule, predict, subcritical_threshold
from .engine import SimOptions, simulate
from .errors import CMJError, ExperimentFailed, InsufficientData, InvalidParams
from .families import FamilyModel

__all__ = [
    "RAW_COLUMNS",
    "AGGREGATE_COLUMNS",
    "ExperimentConfig",
    "ExperimentReport",
    "replicate_seed",
    "run_experiment",
    "aggregate",
    "slope_fit",
    "write_report",
]

RAW_COLUMNS = (
    "family", "kind_params", "n", "regime", "c", "p", "seed", "replicate",
    "tau", "z_total", "z_phi", "root_cluster", "n_mutants", "retries",
)
AGGREGATE_COLUMNS = (
    "n", "p", "mean_frac", "se_frac", "mean_scaled", "se_scaled",
    "mean_ztotal_over_n", "se", "mean_tau_over_logn", "se",
    "predicted_frac", "predicted_exponent",
)
# keys used internally for the two columns that share the header "se"
_AGG_KEYS = (
    "n", "p", "mean_frac", "se_frac", "mean_scaled", "se_scaled",
    "mean_ztotal_over_n", "se_ztotal", "mean_tau_over_logn", "se_tau",
    "predicted_frac", "predicted_exponent",
)

FAILURE_LIMIT = 0.01


@dataclass(frozen=True)
class ExperimentConfig:
    family: FamilyModel
    schedule: RegimeSchedule
    n_values: tuple[float, ...]
    replicates: int = 100
    master_seed: int = 0
    mode: str = "streaming"
    outputs: str | None = None
    parallelism: int = 1
    cap: int = 10**8
    max_retries: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(float(n) for n in self.n_values))
        if self.replicates < 1:
            raise InvalidParams("replicates must be at least 1")
        if not self.n_values:
            raise InvalidParams("n_values must not be empty")
        if any(n < 1 for n in self.n_values):
            raise InvalidParams("every n must be >= 1")
        if any(b <= a for a, b in zip(self.n_values, self.n_values[1:])):
            raise InvalidParams("n_values must be strictly increasing")
        if not 0 <= self.master_seed < 2**64:
            raise InvalidParams("master_seed must be a 64-bit unsigned integer")
        if self.parallelism < 1:
            raise InvalidParams("parallelism must be at least 1")
        SimOptions(self.mode, cap=self.cap, max_retries=self.max_retries)
        self.schedule.validate(self.n_values)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    raw: list[dict]
    aggregates: list[dict]
    failures: list[dict] = field(default_factory=list)

    @property
    def n_tasks(self) -> int:
        return len(self.config.n_values) * self.config.replicates

    def check_consistency(self, rtol: float = 1e-12) -> None:
        """Recompute the aggregates from the raw rows and compare."""
        again = aggregate(self.config, self.raw)
        for a, b in zip(again, self.aggregates, strict=True):
            for key in _AGG_KEYS:
                x, y = a[key], b[key]
                if not (x == y or (math.isnan(x) and math.isnan(y)) or abs(x - y) <= rtol * max(abs(x), abs(y))):
                    raise AssertionError(f"aggregate {key} at n={a['n']:g} is {y!r}, raw rows give {x!r}")

    def raw_csv(self) -> str:
        return _csv(RAW_COLUMNS, [[r[k] for k in RAW_COLUMNS] for r in self.raw])

    def aggregate_csv(self) -> str:
        return _csv(AGGREGATE_COLUMNS, [[a[k] for k in _AGG_KEYS] for a in self.aggregates])

    def failures_csv(self) -> str:
        cols = ("n", "replicate", "seed", "error")
        return _csv(cols, [[f[k] for k in cols] for f in self.failures])


def _cell(v):
    if isinstance(v, float):
        if v.is_integer() and abs(v) < 2**53:
            return str(int(v))
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def replicate_seed(master_seed: int, n_index: int, replicate: int) -> int:
    """64-bit seed of one replicate, a pure function of its coordinates."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(n_index, replicate))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _run_one(task):
    family, n, p, seed, cap, max_retries, mode = task
    rng = np.random.Generator(np.random.PCG64(seed))
    try:
        out = simulate(family, n, p, rng, SimOptions(mode, cap=cap, max_retries=max_retries))
    except CMJError as exc:
        return None, f"{type(exc).__name__}: {exc}"
    return (out.tau, out.z_total, out.z_phi, out.root_cluster, out.n_mutants, out.retries), None


def _warm_up(family: FamilyModel) -> None:
    # compile (or load cached) kernels once, before any fork
    simulate(family, 1, 0.5, np.random.default_rng(0))


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Run every ``(n, replicate)`` pair and aggregate per ``n``.

    Failed replicates are recorded and excluded from the aggregates. If more
    than 1% fail, the report is still written (when ``outputs`` is set) and
    :class:`ExperimentFailed` is raised carrying it.
    """
    workers = config.parallelism if workers is None else workers
    sched = config.schedule
    meta = []
    tasks = []
    for i, n in enumerate(config.n_values):
        p = sched.p_of_n(n)
        for r in range(config.replicates):
            seed = replicate_seed(config.master_seed, i, r)
            meta.append((i, r, n, p, seed))
            tasks.append((config.family, n, p, seed, config.cap, config.max_retries, config.mode))

    _warm_up(config.family)
    if workers > 1 and len(tasks) > 1:
        ctx = mp.get_context("fork")
        with ctx.Pool(min(workers, len(tasks))) as pool:
            results = pool.map(_run_one, tasks, chunksize=max(1, len(tasks) // (8 * workers)))
    else:
        results = [_run_one(t) for t in tasks]

    raw, failures = [], []
    for (i, r, n, p, seed), (vals, err) in sorted(zip(meta, results), key=lambda x: (x[0][0], x[0][1])):
        if err is not None:
            failures.append({"n": n, "replicate": r, "seed": seed, "error": err})
            continue
        tau, z, zphi, root, nmut, retries = vals
        raw.append(
            {
                "family": config.family.label,
                "kind_params": f"{config.family.kind.value}:{config.family.describe()}",
                "n": n,
                "regime": sched.regime,
                "c": sched.c if sched.c is not None else "",
                "p": p,
                "seed": seed,
                "replicate": r,
                "tau": tau,
                "z_total": z,
                "z_phi": zphi,
                "root_cluster": root,
                "n_mutants": nmut,
                "retries": retries,
            }
        )
    report = ExperimentReport(config, raw, aggregate(config, raw), failures)
    if config.outputs:
        write_report(report, config.outputs)
    if len(failures) > FAILURE_LIMIT * report.n_tasks:
        raise ExperimentFailed(f"{len(failures)} of {report.n_tasks} replicates failed", report)
    return report


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    if len(x) == 0:
        return math.nan, math.nan
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.nan
    return mean, se


def aggregate(config: ExperimentConfig, raw: list[dict]) -> list[dict]:
    """Per-``n`` means and standard errors, with the analytic predictions."""
    out = []
    for n in config.n_values:
        rows = [r for r in raw if r["n"] == n]
        p = config.schedule.p_of_n(n)
        pred = predict(config.family, config.schedule, n) if p > subcritical_threshold(config.family) else None
        exponent = pred.exponent if pred else math.nan
        root = np.array([r["root_cluster"] for r in rows], dtype=float)
        z = np.array([r["z_total"] for r in rows], dtype=float)
        tau = np.array([r["tau"] for r in rows], dtype=float)
        mean_frac, se_frac = _mean_se(root / n)
        mean_scaled, se_scaled = _mean_se(root / n**exponent) if pred else (math.nan, math.nan)
        mean_z, se_z = _mean_se(z / n)
        mean_tau, se_tau = _mean_se(tau / math.log(n)) if n > 1 else (math.nan, math.nan)
        out.append(
            {
                "n": n,
                "p": p,
                "mean_frac": mean_frac,
                "se_frac": se_frac,
                "mean_scaled": mean_scaled,
                "se_scaled": se_scaled,
                "mean_ztotal_over_n": mean_z,
                "se_ztotal": se_z,
                "mean_tau_over_logn": mean_tau,
                "se_tau": se_tau,
                "predicted_frac": pred.predicted_frac if pred else math.nan,
                "predicted_exponent": exponent,
            }
        )
    return out


def slope_fit(report: ExperimentReport) -> float:
    """Least-squares slope of the per-``n`` mean of ``ln(root_cluster)`` against ``ln n``."""
    ns = sorted({r["n"] for r in report.raw})
    if len(ns) < 3:
        raise InsufficientData(f"slope fit needs at least 3 values of n, got {len(ns)}")
    ps = {r["p"] for r in report.raw}
    if len(ps) != 1:
        raise InsufficientData("slope fit needs every n run at one fixed p")
    x = np.log(ns)
    y = np.array([np.mean([math.log(r["root_cluster"]) for r in report.raw if r["n"] == n]) for n in ns])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def write_report(report: ExperimentReport, outdir) -> tuple[Path, Path]:
    """Write ``raw.csv`` and ``aggregate.csv`` (plus ``failures.csv`` if any)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    raw_path = outdir / "raw.csv"
    agg_path = outdir / "aggregate.csv"
    raw_path.write_text(report.raw_csv())
    agg_path.write_text(report.aggregate_csv())
    if report.failures:
        (outdir / "failures.csv").write_text(report.failures_csv())
    return raw_path, agg_path


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
