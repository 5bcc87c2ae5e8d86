"""Benchmark protocol: scenarios x methods x seeds, metrics tables and plots."""

import csv
import json
import logging
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import BenchScenario, GridGraphSettings
from ..exceptions import BenchmarkError, GridGraphError
from ..gbl import track
from ..mapio import OccupancyGrid, read_map
from ..mcl import LikelihoodField, SimilarEnergyIndex, run_mcl
from ..models import RunMetrics
from ..posegraph import PoseGraphMap, read_pgbm
from ..simulator import Sequence
from ..trajectory import read_sequence_jsonl
from .evaluation import evaluate
from .hybrid import hybrid_localize
from .plots import plot_convergence, plot_rmse_boxes

logger = logging.getLogger(__name__)

RUN_FIELDS = ["scenario", "method", "seed", "trans_rmse_cm", "rot_rmse_deg", "conv_time_s", "failed"]
SUMMARY_FIELDS = [
    "scenario",
    "method",
    "runs",
    "failures",
    "trans_mean_cm",
    "trans_median_cm",
    "trans_iqr_cm",
    "rot_mean_deg",
    "rot_median_deg",
    "rot_iqr_deg",
    "conv_median_s",
]
CONVERGENCE_FIELDS = ["scenario", "method", "seed", "conv_time_s", "failed"]

DETERMINISTIC_METHODS = {"gbl"}
NEEDS_GRID = {"mcl", "mcl-uniform", "mcl-ser", "hybrid"}
NEEDS_PGBM = {"gbl", "hybrid"}
RMSE_WINDOW = "post-convergence"


@dataclass
class Artifacts:
    """Inputs of one benchmark scenario, loaded once and shared read-only."""

    name: str
    sequence: Sequence
    grid: OccupancyGrid | None = None
    pgbm: PoseGraphMap | None = None
    grid_error: str = ""
    pgbm_error: str = ""
    likelihood: LikelihoodField | None = None
    ser_index: SimilarEnergyIndex | None = None


@dataclass
class BenchReport:
    rows: list[RunMetrics] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)


def _resolve(base_dir: Path, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else base_dir / p


def load_artifacts(entry: BenchScenario, base_dir: Path, settings: GridGraphSettings) -> Artifacts:
    """Load a scenario's sequence and maps; map failures are recorded, not raised.

    Raises:
        BenchmarkError: The sequence cannot be read.
    """
    try:
        seq = read_sequence_jsonl(_resolve(base_dir, entry.sequence))
    except (OSError, GridGraphError) as e:
        raise BenchmarkError(f"{entry.name}: sequence unavailable: {e}") from e
    art = Artifacts(entry.name, seq)
    try:
        art.grid = read_map(_resolve(base_dir, entry.map))
    except (OSError, GridGraphError) as e:
        art.grid_error = f"map unavailable: {e}"
    try:
        art.pgbm = read_pgbm(_resolve(base_dir, entry.pgbm))
    except (OSError, GridGraphError) as e:
        art.pgbm_error = f"pgbm unavailable: {e}"
    if art.grid is not None:
        art.likelihood = LikelihoodField.from_settings(art.grid, settings.mcl, seq.spec.range_max)
    return art


def run_once(art: Artifacts, method: str, seed: int, settings: GridGraphSettings) -> RunMetrics:
    """One localization run evaluated against the sequence's ground truth."""
    seq = art.sequence
    start = seq.ground_truth[0].pose
    if method == "gbl":
        estimates = track(art.pgbm, seq, start, settings.gbl).estimates
    elif method == "hybrid":
        estimates = hybrid_localize(
            art.grid, art.pgbm, seq, settings.mcl, settings.gbl, seed, art.likelihood, art.ser_index
        ).estimates
    else:
        init = {"mcl": "tracking", "mcl-uniform": "uniform", "mcl-ser": "ser"}[method]
        estimates = run_mcl(
            art.grid,
            seq,
            settings.mcl,
            init=init,
            seed=seed,
            init_pose=start,
            likelihood=art.likelihood,
            ser_index=art.ser_index,
        ).estimates
    return evaluate(estimates, seq.ground_truth, settings.evaluation, art.name, method, seed)


def run_benchmark(
    settings: GridGraphSettings,
    base_dir: str | Path = ".",
    repeats: int | None = None,
) -> BenchReport:
    """Run every scenario x method cell of ``settings.bench``.

    Stochastic methods run ``repeats`` times with seeds ``seed0 + i``; graph
    tracking is deterministic and runs once with ``seed0``. Cells whose inputs
    are missing are skipped with a reason. Runs execute on ``settings.threads``
    workers; rows are ordered by (scenario, method, seed).
    """
    bench = settings.bench
    repeats = repeats or bench.repeats
    base_dir = Path(base_dir)
    report = BenchReport()
    if not bench.scenarios:
        raise BenchmarkError("Benchmark matrix has no scenario")

    tasks: list[tuple[Artifacts, str, int]] = []
    for entry in bench.scenarios:
        try:
            art = load_artifacts(entry, base_dir, settings)
        except BenchmarkError as e:
            for method in bench.methods:
                report.skipped.append({"scenario": entry.name, "method": method, "reason": str(e)})
            logger.warning("Skipping scenario %s: %s", entry.name, e)
            continue
        if art.grid is not None and ({"mcl-ser", "hybrid"} & set(bench.methods)):
            art.ser_index = SimilarEnergyIndex(art.grid, art.sequence.spec.range_max, settings.mcl.ser_cell_stride)
        for method in bench.methods:
            reason = ""
            if method in NEEDS_GRID and art.grid is None:
                reason = art.grid_error
            elif method in NEEDS_PGBM and art.pgbm is None:
                reason = art.pgbm_error
            if reason:
                report.skipped.append({"scenario": entry.name, "method": method, "reason": reason})
                logger.warning("Skipping %s/%s: %s", entry.name, method, reason)
                continue
            n = 1 if method in DETERMINISTIC_METHODS else repeats
            tasks.extend((art, method, bench.seed0 + i) for i in range(n))

    def work(task: tuple[Artifacts, str, int]) -> RunMetrics:
        art, method, seed = task
        try:
            metrics = run_once(art, method, seed, settings)
        except GridGraphError as e:
            logger.warning("Run %s/%s/%d failed: %s", art.name, method, seed, e)
            metrics = RunMetrics(scenario=art.name, method=method, seed=seed)
        logger.info("Finished %s/%s/%d", art.name, method, seed)
        return metrics

    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        rows = list(pool.map(work, tasks))
    report.rows = sorted(rows, key=lambda r: (r.scenario, r.method, r.seed))
    report.skipped.sort(key=lambda s: (s["scenario"], s["method"]))
    return report


# ========== Output ==========


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def _quartiles(values: list[float]) -> tuple[float, float, float]:
    """Mean, median and interquartile range."""
    arr = np.asarray(values, dtype=float)
    q1, q3 = np.percentile(arr, [25, 75])
    return float(arr.mean()), float(np.median(arr)), float(q3 - q1)


def summarize(rows: list[RunMetrics]) -> list[dict]:
    """Per (scenario, method) statistics; failed runs count only as failures."""
    out = []
    for key in sorted({(r.scenario, r.method) for r in rows}):
        group = [r for r in rows if (r.scenario, r.method) == key]
        ok = [r for r in group if not r.failed]
        row = {"scenario": key[0], "method": key[1], "runs": len(group), "failures": len(group) - len(ok)}
        if ok:
            t_mean, t_median, t_iqr = _quartiles([r.trans_rmse_cm for r in ok])
            r_mean, r_median, r_iqr = _quartiles([r.rot_rmse_deg for r in ok])
            row.update(
                trans_mean_cm=_fmt(t_mean),
                trans_median_cm=_fmt(t_median),
                trans_iqr_cm=_fmt(t_iqr),
                rot_mean_deg=_fmt(r_mean),
                rot_median_deg=_fmt(r_median),
                rot_iqr_deg=_fmt(r_iqr),
                conv_median_s=_fmt(statistics.median(r.convergence_time for r in ok)),
            )
        out.append(row)
    return out


def _write_csv(path: Path, fields: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fields, lineterminator="\n", restval="")
        writer.writeheader()
        writer.writerows(rows)


def write_report(report: BenchReport, out_dir: str | Path, settings: GridGraphSettings, repeats: int) -> Path:
    """Write runs.csv, summary.csv, convergence.csv, bench_meta.json and the SVG plots."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = [
        {
            "scenario": r.scenario,
            "method": r.method,
            "seed": r.seed,
            "trans_rmse_cm": _fmt(r.trans_rmse_cm),
            "rot_rmse_deg": _fmt(r.rot_rmse_deg),
            "conv_time_s": _fmt(r.convergence_time),
            "failed": int(r.failed),
        }
        for r in report.rows
    ]
    _write_csv(out / "runs.csv", RUN_FIELDS, runs)
    _write_csv(out / "summary.csv", SUMMARY_FIELDS, summarize(report.rows))
    _write_csv(out / "convergence.csv", CONVERGENCE_FIELDS, [{k: row[k] for k in CONVERGENCE_FIELDS} for row in runs])

    meta = {
        "config_hash": settings.config_hash(),
        "repeats": repeats,
        "seed0": settings.bench.seed0,
        "methods": list(settings.bench.methods),
        "rmse_window": RMSE_WINDOW,
        "failed_runs_in_rmse": False,
        "simulator": settings.simulator.model_dump(mode="json"),
        "skipped": report.skipped,
    }
    (out / "bench_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    plot_rmse_boxes(report.rows, out / "boxplot.svg")
    plot_convergence(report.rows, out / "convergence.svg")
    logger.info("Wrote benchmark report to %s (%d runs, %d skipped cells)", out, len(report.rows), len(report.skipped))
    return out / "runs.csv"
