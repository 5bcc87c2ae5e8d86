"""Run a particle filter over a recorded sequence."""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from ..config import MCLSettings
from ..geometry import Pose2, StampedPose
from ..mapio import OccupancyGrid
from ..simulator import Sequence
from .field import LikelihoodField
from .filter import (PoseEstimate, converged, init_global_uniform,
                     init_tracking, step)
from .ser import SimilarEnergyIndex, init_global_ser

logger = logging.getLogger(__name__)

InitMode = Literal["tracking", "uniform", "ser"]

DIAGNOSTIC_FIELDS = ["stamp", "n", "neff", "cov_xx", "cov_yy", "cov_tt", "max_pos_eig", "updated", "diverged"]


@dataclass
class MCLRun:
    """Per-scan estimates and diagnostics of one filter run."""

    estimates: list[StampedPose] = field(default_factory=list)
    covariances: list[np.ndarray] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)
    converged_index: int | None = None
    divergences: int = 0


def run_mcl(
    grid: OccupancyGrid,
    seq: Sequence,
    cfg: MCLSettings,
    init: InitMode = "tracking",
    seed: int = 0,
    init_pose: Pose2 | None = None,
    likelihood: LikelihoodField | None = None,
    ser_index: SimilarEnergyIndex | None = None,
    stop_on_convergence: bool = False,
) -> MCLRun:
    """Localize along a sequence.

    Updates run when accumulated odometry exceeds ``update_min_d`` or
    ``update_min_a``; between updates the last estimate is carried forward by
    odometry.

    Args:
        grid: Map the filter localizes against.
        seq: Odometry and scans.
        cfg: Filter parameters.
        init: ``tracking`` (Gaussian around ``init_pose``), ``uniform`` or ``ser``.
        seed: Run seed.
        init_pose: Required for tracking.
        likelihood: Precomputed field for ``grid``.
        ser_index: Precomputed SER index for ``grid``.
        stop_on_convergence: Stop after the first estimate passing the covariance gate.
    """
    if not seq.scans:
        return MCLRun()
    rng = np.random.default_rng(seed)
    spec = seq.spec
    if likelihood is None:
        likelihood = LikelihoodField.from_settings(grid, cfg, spec.range_max)

    first = seq.scans[0]
    if init == "tracking":
        if init_pose is None:
            raise ValueError("tracking initialization needs init_pose")
        pset = init_tracking(grid, init_pose, cfg.init_sigma, cfg.n_particles, rng, cfg.init_attempts)
    elif init == "uniform":
        pset = init_global_uniform(grid, cfg.n_global, rng)
    else:
        if ser_index is None:
            ser_index = SimilarEnergyIndex(grid, spec.range_max, cfg.ser_cell_stride)
        pset = init_global_ser(grid, first, cfg.n_global, rng, ser_index, cfg.ser_fraction)

    run = MCLRun()
    pset, est, info = step(pset, Pose2(), first, likelihood, cfg)
    _record(run, first.stamp, est, info.n, info.neff, True, info.diverged)
    if converged(est, cfg.converge_threshold):
        run.converged_index = 0

    pending = Pose2()
    for i in range(1, len(seq.scans)):
        if stop_on_convergence and run.converged_index is not None:
            break
        pending = pending.compose(seq.odometry[i - 1].pose.between(seq.odometry[i].pose))
        scan = seq.scans[i]
        if math.hypot(pending.x, pending.y) >= cfg.update_min_d or abs(pending.theta) >= cfg.update_min_a:
            pset, est, info = step(pset, pending, scan, likelihood, cfg)
            pending = Pose2()
            _record(run, scan.stamp, est, info.n, info.neff, True, info.diverged)
        else:
            carried = PoseEstimate(est.mean.compose(pending), est.covariance)
            _record(run, scan.stamp, carried, len(pset), pset.effective_size(), False, False)

        if run.converged_index is None and converged(est, cfg.converge_threshold):
            run.converged_index = i

    logger.info(
        "MCL (%s, seed %d): %d estimates, %d divergences, gate passed at %s",
        init,
        seed,
        len(run.estimates),
        run.divergences,
        run.converged_index,
    )
    return run


def _record(run: MCLRun, stamp: float, est: PoseEstimate, n: int, neff: float, updated: bool, diverged: bool) -> None:
    cov = est.covariance
    run.estimates.append(StampedPose(stamp, est.mean))
    run.covariances.append(cov)
    run.divergences += int(diverged)
    run.diagnostics.append(
        {
            "stamp": stamp,
            "n": n,
            "neff": neff,
            "cov_xx": float(cov[0, 0]),
            "cov_yy": float(cov[1, 1]),
            "cov_tt": float(cov[2, 2]),
            "max_pos_eig": float(np.linalg.eigvalsh(cov[:2, :2]).max()),
            "updated": updated,
            "diverged": diverged,
        }
    )


def write_diagnostics_csv(path: str | Path, rows: list[dict], fields: list[str] | None = None) -> None:
    """Write per-step diagnostic rows with fixed-precision floats."""
    fields = fields or DIAGNOSTIC_FIELDS
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: f"{v:.6f}" if isinstance(v, float) else v for k, v in row.items()})
