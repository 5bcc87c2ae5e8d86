"""Graph-based pose tracking against a prior pose-graph map."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..config import GBLSettings
from ..exceptions import MatchError
from ..geometry import Pose2, StampedPose
from ..posegraph import PoseGraphMap, Submap
from ..simulator import Sequence
from .matcher import MatchResult, match
from .optimizer import WindowConstraint, WindowState, optimize_window

logger = logging.getLogger(__name__)

DIAGNOSTIC_FIELDS = ["stamp", "submap_id", "score", "accepted", "cost_before", "cost_after"]


@dataclass
class TrackResult:
    estimates: list[StampedPose] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)
    diverged: bool = False
    divergence_index: int | None = None


def nearest_submaps(pgbm: PoseGraphMap, pose: Pose2, count: int) -> list[Submap]:
    """Up to ``count`` non-empty submaps ordered by origin distance, ties by id."""
    candidates = [s for s in pgbm.submaps if not s.is_empty]
    candidates.sort(key=lambda s: (s.distance_to(pose), s.id))
    return candidates[:count]


def track(
    pgbm: PoseGraphMap,
    seq: Sequence,
    initial: Pose2,
    cfg: GBLSettings | None = None,
    start_index: int = 0,
) -> TrackResult:
    """Track the sequence from ``initial`` at scan ``start_index``.

    Each scan adds a node predicted from odometry, an odometry constraint to
    its predecessor and one constraint per accepted match against the nearest
    submaps; the window is then optimized and the newest pose emitted. Scans
    without an accepted match are carried by odometry alone. After more than
    ``max_blind`` such scans in a row the result is flagged as diverged and
    tracking continues on odometry.
    """
    cfg = cfg or GBLSettings()
    result = TrackResult()
    if start_index >= len(seq.scans):
        return result

    odom_info = np.diag(np.asarray(cfg.odom_info_diag, dtype=float))
    match_info = np.diag(np.asarray(cfg.match_info_diag, dtype=float))
    prior_info = np.diag(np.asarray(cfg.prior_info_diag, dtype=float))
    window = (cfg.search_xy, cfg.search_xy, math.radians(cfg.search_theta_deg))
    state = WindowState(size=cfg.window_size)
    blind = 0

    if pgbm.is_empty:
        logger.warning("Prior map has no observed submap; tracking on odometry only")

    for i in range(start_index, len(seq.scans)):
        scan = seq.scans[i]
        if i == start_index:
            predicted = initial
            state.add_node(i, scan.stamp, predicted)
            state.add_constraint(WindowConstraint.prior(i, predicted, prior_info))
        else:
            delta = seq.odometry[i - 1].pose.between(seq.odometry[i].pose)
            predicted = state.newest.pose.compose(delta)
            previous = state.newest.id
            state.add_node(i, scan.stamp, predicted)
            state.add_constraint(WindowConstraint.between_nodes(previous, i, delta, odom_info))

        best: MatchResult | None = None
        for submap in nearest_submaps(pgbm, predicted, cfg.candidate_submaps):
            try:
                found = match(scan, submap, predicted, window, cfg)
            except MatchError as e:
                logger.debug("Scan %d: %s", i, e)
                continue
            if best is None or found.score > best.score:
                best = found
            if found.accepted:
                state.add_constraint(
                    WindowConstraint.anchored(
                        submap.origin, i, submap.origin.between(found.pose), match_info * found.score
                    )
                )

        accepted = best is not None and best.accepted
        opt = optimize_window(state, cfg)
        state.set_poses(opt.poses)
        result.estimates.append(StampedPose(scan.stamp, state.newest.pose))
        result.diagnostics.append(
            {
                "stamp": scan.stamp,
                "submap_id": best.submap_id if best is not None else "",
                "score": best.score if best is not None else 0.0,
                "accepted": accepted,
                "cost_before": opt.cost_before,
                "cost_after": opt.cost_after,
            }
        )

        blind = 0 if accepted else blind + 1
        if blind > cfg.max_blind and not result.diverged:
            result.diverged = True
            result.divergence_index = i
            logger.warning("No accepted match for %d scans at t=%.2f; continuing on odometry", blind, scan.stamp)
        state.slide(prior_info)

    logger.info(
        "GBL: %d estimates from scan %d%s",
        len(result.estimates),
        start_index,
        f", diverged at scan {result.divergence_index}" if result.diverged else "",
    )
    return result
