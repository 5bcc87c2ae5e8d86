"""Odometry motion model (rot1 / trans / rot2 decomposition)."""

import math

import numpy as np

from .geometry import Pose2, normalize_angle, normalize_angles

# Below this translation the heading change is attributed to rot2 alone
MIN_TRANSLATION = 1e-6


def decompose(prev: Pose2, curr: Pose2) -> tuple[float, float, float]:
    """Split the motion between two poses into (rot1, trans, rot2)."""
    dx, dy = curr.x - prev.x, curr.y - prev.y
    trans = math.hypot(dx, dy)
    rot1 = normalize_angle(math.atan2(dy, dx) - prev.theta) if trans >= MIN_TRANSLATION else 0.0
    rot2 = normalize_angle(curr.theta - prev.theta - rot1)
    return rot1, trans, rot2


def folded(rot: float) -> float:
    """Rotation magnitude with reverse motion folded onto forward motion."""
    return min(abs(normalize_angle(rot)), abs(normalize_angle(rot - math.pi)))


def sample_motion(
    poses: np.ndarray,
    delta: tuple[float, float, float],
    alphas: tuple[float, float, float, float],
    rng: np.random.Generator | None,
) -> np.ndarray:
    """Propagate (N, 3) poses by a noisy odometry increment.

    Args:
        poses: Rows of [x, y, theta].
        delta: (rot1, trans, rot2) from :func:`decompose`.
        alphas: Noise parameters; the variance of each term is a weighted sum
            of squared motion components.
        rng: Source of noise; may be None when every alpha is zero.

    Returns:
        New (N, 3) array.
    """
    rot1, trans, rot2 = delta
    a1, a2, a3, a4 = alphas
    poses = np.asarray(poses, dtype=float).reshape(-1, 3)
    n = len(poses)
    r1, r2 = folded(rot1), folded(rot2)
    sd_rot1 = math.sqrt(a1 * r1 * r1 + a2 * trans * trans)
    sd_trans = math.sqrt(a3 * trans * trans + a4 * (r1 * r1 + r2 * r2))
    sd_rot2 = math.sqrt(a1 * r2 * r2 + a2 * trans * trans)

    if rng is None or (sd_rot1 == 0.0 and sd_trans == 0.0 and sd_rot2 == 0.0):
        rot1_hat = np.full(n, rot1)
        trans_hat = np.full(n, trans)
        rot2_hat = np.full(n, rot2)
    else:
        rot1_hat = rot1 - rng.normal(0.0, 1.0, n) * sd_rot1
        trans_hat = trans - rng.normal(0.0, 1.0, n) * sd_trans
        rot2_hat = rot2 - rng.normal(0.0, 1.0, n) * sd_rot2

    heading = poses[:, 2] + rot1_hat
    out = np.empty_like(poses)
    out[:, 0] = poses[:, 0] + trans_hat * np.cos(heading)
    out[:, 1] = poses[:, 1] + trans_hat * np.sin(heading)
    out[:, 2] = normalize_angles(poses[:, 2] + rot1_hat + rot2_hat)
    return out


def apply_delta(pose: Pose2, delta: tuple[float, float, float]) -> Pose2:
    """Noise-free application of an odometry increment."""
    return Pose2.from_array(sample_motion(pose.as_array()[None, :], delta, (0.0, 0.0, 0.0, 0.0), None)[0])
