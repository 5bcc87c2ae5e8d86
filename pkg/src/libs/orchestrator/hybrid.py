"""Global localization with a particle filter handed over to graph-based tracking."""

import logging
from dataclasses import dataclass, field

from ..config import GBLSettings, MCLSettings
from ..geometry import StampedPose
from ..gbl import TrackResult, track
from ..mapio import OccupancyGrid
from ..mcl import LikelihoodField, MCLRun, SimilarEnergyIndex, run_mcl
from ..posegraph import PoseGraphMap
from ..simulator import Sequence

logger = logging.getLogger(__name__)

PHASE_MCL = "mcl"
PHASE_GBL = "gbl"


@dataclass
class HybridResult:
    """Concatenated trajectory with a phase tag per sample."""

    estimates: list[StampedPose] = field(default_factory=list)
    phases: list[str] = field(default_factory=list)
    handover_index: int | None = None
    handover_time: float | None = None
    mcl: MCLRun | None = None
    gbl: TrackResult | None = None

    @property
    def failed(self) -> bool:
        return self.handover_index is None


def hybrid_localize(
    grid: OccupancyGrid,
    pgbm: PoseGraphMap,
    seq: Sequence,
    mcl_cfg: MCLSettings | None = None,
    gbl_cfg: GBLSettings | None = None,
    seed: int = 0,
    likelihood: LikelihoodField | None = None,
    ser_index: SimilarEnergyIndex | None = None,
) -> HybridResult:
    """SER-seeded particle filter until the covariance gate passes, then graph-based tracking.

    The tracker starts at the scan where the gate passed, from the filter's
    estimate there. If the gate never passes the whole run is the filter's
    output and the result is marked failed.
    """
    mcl_cfg = mcl_cfg or MCLSettings()
    gbl_cfg = gbl_cfg or GBLSettings()
    result = HybridResult()
    if not seq.scans:
        return result

    mcl_run = run_mcl(
        grid,
        seq,
        mcl_cfg,
        init="ser",
        seed=seed,
        likelihood=likelihood,
        ser_index=ser_index,
        stop_on_convergence=True,
    )
    result.mcl = mcl_run
    h = mcl_run.converged_index
    if h is None:
        logger.warning("Particle filter never passed the covariance gate; no handover")
        result.estimates = list(mcl_run.estimates)
        result.phases = [PHASE_MCL] * len(mcl_run.estimates)
        return result

    handover = mcl_run.estimates[h]
    tracked = track(pgbm, seq, handover.pose, gbl_cfg, start_index=h)
    result.gbl = tracked
    result.handover_index = h
    result.handover_time = handover.stamp - seq.scans[0].stamp
    result.estimates = list(mcl_run.estimates[:h]) + list(tracked.estimates)
    result.phases = [PHASE_MCL] * h + [PHASE_GBL] * len(tracked.estimates)
    logger.info("Handover at scan %d (t=%.2f s)", h, result.handover_time)
    return result
