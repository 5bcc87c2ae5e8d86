import math

import numpy as np
import pytest

from src.libs.config import EvaluationSettings
from src.libs.exceptions import EvaluationError
from src.libs.geometry import Pose2, StampedPose
from src.libs.orchestrator import associate, convergence_index, evaluate


def _truth(n: int = 11) -> list[StampedPose]:
    return [StampedPose(float(i), Pose2(float(i), 0.0, 0.0)) for i in range(n)]


def _offset(truth: list[StampedPose], errors: list[float]) -> list[StampedPose]:
    return [StampedPose(t.stamp, Pose2(t.pose.x, e, 0.0)) for t, e in zip(truth, errors)]


def test_associate_nearest_within_tolerance() -> None:
    truth = _truth(3)
    estimate = [StampedPose(s, Pose2()) for s in (0.01, 0.98, 1.6, 2.0)]
    assert associate(estimate, truth, 0.05) == [(0, 0), (1, 1), (3, 2)]
    assert associate([], truth, 0.05) == []


def test_convergence_index_debounce() -> None:
    trans = np.array([1.0, 0.1, 0.2, 1.0, 0.1, 0.1])
    assert convergence_index(trans, 0.5, 2) == 1
    assert convergence_index(trans, 0.5, 3) == 4
    assert convergence_index(np.array([1.0, 1.0]), 0.5, 1) is None


def test_post_convergence_rmse() -> None:
    truth = _truth()
    estimate = _offset(truth, [1.0, 1.0, 1.0] + [0.1] * 8)
    metrics = evaluate(estimate, truth, scenario="1-static", method="mcl", seed=3)
    assert metrics.convergence_time == pytest.approx(3.0)
    assert metrics.trans_rmse_cm == pytest.approx(10.0)
    assert metrics.rot_rmse_deg == pytest.approx(0.0)
    assert not metrics.failed
    assert (metrics.scenario, metrics.method, metrics.seed) == ("1-static", "mcl", 3)


def test_rotational_error_is_wrapped() -> None:
    truth = [StampedPose(float(i), Pose2(0.0, 0.0, math.pi - 0.01)) for i in range(6)]
    estimate = [StampedPose(float(i), Pose2(0.0, 0.0, -math.pi + 0.01)) for i in range(6)]
    metrics = evaluate(estimate, truth)
    assert metrics.convergence_time == 0.0
    assert metrics.rot_rmse_deg == pytest.approx(math.degrees(0.02))


def test_late_convergence_fails() -> None:
    truth = _truth()
    estimate = _offset(truth, [1.0] * 10 + [0.0])
    metrics = evaluate(estimate, truth, EvaluationSettings(debounce=1))
    assert metrics.failed
    assert metrics.trans_rmse_cm is None
    assert metrics.rot_rmse_deg is None


def test_never_converged() -> None:
    truth = _truth()
    assert evaluate(_offset(truth, [2.0] * 11), truth).failed


def test_nothing_associated() -> None:
    truth = _truth(3)
    with pytest.raises(EvaluationError):
        evaluate([StampedPose(100.0, Pose2())], truth)


def test_three_sample_rmse() -> None:
    truth = _truth(3)
    metrics = evaluate(_offset(truth, [0.1, 0.2, 0.2]), truth)
    assert metrics.convergence_time == pytest.approx(0.0)
    assert metrics.trans_rmse_cm == pytest.approx(math.sqrt((0.01 + 0.04 + 0.04) / 3.0) * 100.0)


def test_time_shift_of_both_streams_keeps_metrics() -> None:
    rng = np.random.default_rng(6)
    truth = [StampedPose(0.1 * i, Pose2(0.05 * i, 1.0, 0.01 * i)) for i in range(60)]
    errors = np.concatenate([rng.uniform(0.6, 1.5, 10), rng.uniform(0.0, 0.3, 50)])
    estimate = [
        StampedPose(t.stamp + 0.02, Pose2(t.pose.x, t.pose.y + e, t.pose.theta + 0.1 * e))
        for t, e in zip(truth, errors)
    ]
    base = evaluate(estimate, truth)
    for shift in (-7.5, 1234.25):
        moved = evaluate(
            [StampedPose(s.stamp + shift, s.pose) for s in estimate],
            [StampedPose(t.stamp + shift, t.pose) for t in truth],
        )
        assert moved.convergence_time == pytest.approx(base.convergence_time, abs=1e-9)
        assert moved.trans_rmse_cm == pytest.approx(base.trans_rmse_cm)
        assert moved.rot_rmse_deg == pytest.approx(base.rot_rmse_deg)
