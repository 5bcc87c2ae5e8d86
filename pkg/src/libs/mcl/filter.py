"""Adaptive Monte Carlo localization: particles, motion, weighting and resampling."""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from ..config import MCLSettings
from ..geometry import Pose2, normalize_angles
from ..mapio import OccupancyGrid
from ..odometry import decompose, sample_motion
from ..simulator import Scan
from .field import LikelihoodField

logger = logging.getLogger(__name__)


@dataclass
class ParticleSet:
    """Weighted pose hypotheses. ``poses`` is (N, 3); weights sum to 1."""

    poses: np.ndarray
    weights: np.ndarray
    rng: np.random.Generator

    def __len__(self) -> int:
        return len(self.weights)

    @classmethod
    def uniform(cls, poses: np.ndarray, rng: np.random.Generator) -> "ParticleSet":
        n = len(poses)
        return cls(np.asarray(poses, dtype=float), np.full(n, 1.0 / n), rng)

    def effective_size(self) -> float:
        return float(1.0 / np.sum(self.weights**2))


@dataclass(frozen=True, eq=False)
class PoseEstimate:
    mean: Pose2
    covariance: np.ndarray


@dataclass(frozen=True)
class StepInfo:
    n: int
    neff: float
    resampled: bool
    diverged: bool


# ========== Initialization ==========


def _on_free(grid: OccupancyGrid, poses: np.ndarray) -> np.ndarray:
    cols, rows = grid.world_to_cells(poses[:, :2])
    ok = grid.in_bounds(cols, rows)
    ok[ok] = grid.free[rows[ok], cols[ok]]
    return ok


def init_tracking(
    grid: OccupancyGrid,
    pose0: Pose2,
    sigma: tuple[float, float, float],
    n: int,
    rng_seed: int | np.random.Generator | None = 0,
    attempts: int = 100,
) -> ParticleSet:
    """Gaussian cloud around ``pose0``.

    Particles off Free cells are redrawn up to ``attempts`` times and then kept
    where they are.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    rng = np.random.default_rng(rng_seed)
    mean = pose0.as_array()
    scale = np.asarray(sigma, dtype=float)

    def draw(k: int) -> np.ndarray:
        p = mean + rng.normal(0.0, 1.0, (k, 3)) * scale
        p[:, 2] = normalize_angles(p[:, 2])
        return p

    poses = draw(n)
    for _ in range(attempts):
        bad = ~_on_free(grid, poses)
        if not bad.any():
            break
        poses[bad] = draw(int(bad.sum()))
    return ParticleSet.uniform(poses, rng)


def sample_free_cells(grid: OccupancyGrid, cols: np.ndarray, rows: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform poses inside randomly chosen cells with uniform headings."""
    pick = rng.integers(0, len(cols), n)
    local = np.column_stack([cols[pick], rows[pick]]) + rng.random((n, 2))
    xy = grid.origin.transform_points(local * grid.resolution)
    theta = rng.uniform(-math.pi, math.pi, n)
    return np.column_stack([xy, normalize_angles(theta)])


def init_global_uniform(grid: OccupancyGrid, n: int, rng_seed: int | np.random.Generator | None = 0) -> ParticleSet:
    """Particles spread uniformly over Free cells with uniform headings."""
    rng = np.random.default_rng(rng_seed)
    cols, rows = grid.free_cell_indices()
    if not len(cols):
        raise ValueError("Grid has no Free cell")
    return ParticleSet.uniform(sample_free_cells(grid, cols, rows, n, rng), rng)


# ========== Resampling ==========


def low_variance_resample(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling: indices drawn with one random offset and stride 1/n."""
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side="right").clip(0, len(weights) - 1)


def kld_sample_count(k: int, err: float, z_quantile: float) -> int:
    """Particles needed so the KL divergence to a k-bin histogram stays below ``err``.

    Args:
        k: Occupied histogram bins.
        err: Divergence bound epsilon.
        z_quantile: Confidence 1 - delta.
    """
    if k <= 1:
        return 1
    z = float(norm.ppf(z_quantile))
    a = 2.0 / (9.0 * (k - 1))
    return int(math.ceil((k - 1) / (2.0 * err) * (1.0 - a + math.sqrt(a) * z) ** 3))


def occupied_bins(poses: np.ndarray, bin_xy: float, bin_theta: float) -> int:
    keys = np.column_stack(
        [
            np.floor(poses[:, 0] / bin_xy),
            np.floor(poses[:, 1] / bin_xy),
            np.floor((poses[:, 2] + math.pi) / bin_theta),
        ]
    ).astype(np.int64)
    return len(np.unique(keys, axis=0))


# ========== Estimation ==========


def estimate(pset: ParticleSet) -> PoseEstimate:
    """Weighted mean (circular for theta) and covariance."""
    w = pset.weights
    p = pset.poses
    x = float(np.dot(w, p[:, 0]))
    y = float(np.dot(w, p[:, 1]))
    theta = math.atan2(float(np.dot(w, np.sin(p[:, 2]))), float(np.dot(w, np.cos(p[:, 2]))))
    d = np.column_stack([p[:, 0] - x, p[:, 1] - y, normalize_angles(p[:, 2] - theta)])
    cov = (d * w[:, None]).T @ d
    cov = 0.5 * (cov + cov.T)
    return PoseEstimate(Pose2(x, y, theta), cov)


def converged(est: PoseEstimate, threshold: float = 0.05) -> bool:
    """Largest eigenvalue of the positional covariance below ``threshold`` (m^2)."""
    return bool(np.linalg.eigvalsh(est.covariance[:2, :2]).max() < threshold)


# ========== Filter step ==========


def step(
    pset: ParticleSet,
    odom_delta: Pose2,
    scan: Scan,
    field: LikelihoodField,
    cfg: MCLSettings,
) -> tuple[ParticleSet, PoseEstimate, StepInfo]:
    """One motion update, importance weighting and (conditional) resampling.

    Args:
        pset: Current particles.
        odom_delta: Odometry motion since the last step, in the robot frame.
        scan: Current scan.
        field: Measurement model.
        cfg: Noise, beam subsampling and resampling parameters.

    Returns:
        New particle set, its estimate and step diagnostics.
    """
    rng = pset.rng
    delta = decompose(Pose2(), odom_delta)
    poses = sample_motion(pset.poses, delta, cfg.alphas, rng)

    loglik = field.log_likelihood(poses, scan.ranges, scan.bearings(), cfg.beam_stride)
    with np.errstate(divide="ignore"):
        logw = np.log(pset.weights) + loglik
    logw = np.where(np.isnan(logw), -np.inf, logw)
    diverged = not np.isfinite(logw).any()
    if diverged:
        logger.warning("All particle weights vanished; resetting to uniform")
        weights = np.full(len(poses), 1.0 / len(poses))
    else:
        weights = np.exp(logw - logsumexp(logw))
        weights /= weights.sum()

    current = ParticleSet(poses, weights, rng)
    neff = current.effective_size()
    resampled = False
    if neff < cfg.resample_frac * len(current):
        k = occupied_bins(poses[weights > 0], cfg.bin_xy, math.radians(cfg.bin_theta_deg))
        n_new = min(max(kld_sample_count(k, cfg.kld_err, cfg.kld_z), cfg.n_min), cfg.n_max)
        idx = low_variance_resample(weights, n_new, rng)
        current = ParticleSet.uniform(poses[idx], rng)
        resampled = True
        logger.debug("Resampled %d -> %d particles (Neff %.1f, %d bins)", len(poses), n_new, neff, k)

    info = StepInfo(n=len(current), neff=neff, resampled=resampled, diverged=diverged)
    return current, estimate(current), info
