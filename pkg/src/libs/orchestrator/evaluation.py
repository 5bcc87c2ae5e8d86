"""Trajectory evaluation: association, convergence and post-convergence RMSE."""

import logging
import math

import numpy as np

from ..config import EvaluationSettings
from ..exceptions import EvaluationError
from ..geometry import StampedPose, normalize_angles
from ..models import RunMetrics

logger = logging.getLogger(__name__)


def associate(estimate: list[StampedPose], truth: list[StampedPose], tol: float) -> list[tuple[int, int]]:
    """Pairs (estimate index, truth index) of nearest stamps no further apart than ``tol``."""
    if not estimate or not truth:
        return []
    stamps = np.array([t.stamp for t in truth])
    order = np.argsort(stamps, kind="stable")
    sorted_stamps = stamps[order]
    pairs = []
    for i, est in enumerate(estimate):
        k = int(np.searchsorted(sorted_stamps, est.stamp))
        best = None
        for j in (k - 1, k):
            if 0 <= j < len(sorted_stamps):
                d = abs(sorted_stamps[j] - est.stamp)
                if d <= tol + 1e-12 and (best is None or d < best[0]):
                    best = (d, int(order[j]))
        if best is not None:
            pairs.append((i, best[1]))
    return pairs


def pose_errors(estimate: list[StampedPose], truth: list[StampedPose], pairs: list[tuple[int, int]]):
    """Translational (m) and wrapped rotational (rad) errors per pair."""
    est = np.array([estimate[i].pose.as_array() for i, _ in pairs])
    ref = np.array([truth[j].pose.as_array() for _, j in pairs])
    trans = np.hypot(est[:, 0] - ref[:, 0], est[:, 1] - ref[:, 1])
    rot = np.abs(normalize_angles(est[:, 2] - ref[:, 2]))
    return trans, rot


def convergence_index(trans: np.ndarray, radius: float, debounce: int) -> int | None:
    """First index from which ``debounce`` samples (or all remaining) lie within ``radius``."""
    inside = trans < radius
    n = len(inside)
    for k in range(n):
        window = inside[k : k + min(debounce, n - k)]
        if window.all():
            return k
    return None


def evaluate(
    estimate: list[StampedPose],
    truth: list[StampedPose],
    cfg: EvaluationSettings | None = None,
    scenario: str = "",
    method: str = "",
    seed: int = 0,
) -> RunMetrics:
    """Convergence time and post-convergence RMSE of an estimated trajectory.

    Convergence is the first associated estimate from which the next
    ``debounce`` estimates (fewer at the end of the stream) stay within
    ``convergence_radius`` of the truth. A run that has not converged within
    the first ``failure_fraction`` of the truth's duration fails and carries
    no RMSE.

    Raises:
        EvaluationError: No estimate can be associated with a truth stamp.
    """
    cfg = cfg or EvaluationSettings()
    pairs = associate(estimate, truth, cfg.association_tol)
    if not pairs:
        raise EvaluationError("No estimate lies within the association tolerance of a truth stamp")
    trans, rot = pose_errors(estimate, truth, pairs)

    t0 = min(t.stamp for t in truth)
    duration = max(t.stamp for t in truth) - t0
    k = convergence_index(trans, cfg.convergence_radius, cfg.debounce)
    if k is not None:
        conv_time = estimate[pairs[k][0]].stamp - t0
        if conv_time > cfg.failure_fraction * duration + 1e-9:
            k = None
    if k is None:
        logger.info("Run %s/%s/%d did not converge", scenario, method, seed)
        return RunMetrics(scenario=scenario, method=method, seed=seed)

    trans_rmse = math.sqrt(float(np.mean(trans[k:] ** 2))) * 100.0
    rot_rmse = math.degrees(math.sqrt(float(np.mean(rot[k:] ** 2))))
    return RunMetrics(
        scenario=scenario,
        method=method,
        seed=seed,
        trans_rmse_cm=trans_rmse,
        rot_rmse_deg=rot_rmse,
        convergence_time=conv_time,
    )
