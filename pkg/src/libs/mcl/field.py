"""Likelihood-field measurement model."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..config import MCLSettings
from ..mapio import OccupancyGrid


@dataclass(frozen=True, eq=False)
class LikelihoodField:
    """Distance to the nearest Occupied cell and the derived beam-endpoint probability."""

    grid: OccupancyGrid
    distance: np.ndarray
    probability: np.ndarray
    off_map_probability: float

    @classmethod
    def from_grid(
        cls,
        grid: OccupancyGrid,
        sigma_hit: float = 0.2,
        z_hit: float = 0.95,
        z_rand: float = 0.05,
        d_max: float = 2.0,
        range_max: float = 10.0,
    ) -> "LikelihoodField":
        if grid.occupied.any():
            distance = ndimage.distance_transform_edt(~grid.occupied) * grid.resolution
            distance = np.minimum(distance, d_max)
        else:
            distance = np.full(grid.shape, d_max)
        probability = z_hit * np.exp(-(distance**2) / (2.0 * sigma_hit**2)) + z_rand / range_max
        off_map = z_hit * np.exp(-(d_max**2) / (2.0 * sigma_hit**2)) + z_rand / range_max
        distance.setflags(write=False)
        probability.setflags(write=False)
        return cls(grid, distance, probability, float(off_map))

    @classmethod
    def from_settings(cls, grid: OccupancyGrid, cfg: MCLSettings, range_max: float) -> "LikelihoodField":
        return cls.from_grid(grid, cfg.sigma_hit, cfg.z_hit, cfg.z_rand, cfg.d_max, range_max)

    def probability_at(self, points: np.ndarray) -> np.ndarray:
        """Probabilities for world points of any leading shape (..., 2)."""
        points = np.asarray(points, dtype=float)
        flat = points.reshape(-1, 2)
        cols, rows = self.grid.world_to_cells(flat)
        inside = self.grid.in_bounds(cols, rows)
        p = np.full(len(flat), self.off_map_probability)
        p[inside] = self.probability[rows[inside], cols[inside]]
        return p.reshape(points.shape[:-1])

    def log_likelihood(self, poses: np.ndarray, ranges: np.ndarray, bearings: np.ndarray, stride: int) -> np.ndarray:
        """Sum of log endpoint probabilities per pose over every ``stride``-th finite beam.

        Args:
            poses: (N, 3) particle poses.
            ranges: Scan ranges; ``inf`` beams are skipped.
            bearings: Beam bearings relative to the sensor heading.
            stride: Beam subsampling.

        Returns:
            (N,) log-likelihoods; zeros when no beam qualifies.
        """
        r = ranges[::stride]
        b = bearings[::stride]
        ok = np.isfinite(r)
        r, b = r[ok], b[ok]
        if not len(r):
            return np.zeros(len(poses))
        angles = poses[:, 2:3] + b[None, :]
        points = np.stack(
            [poses[:, 0:1] + r[None, :] * np.cos(angles), poses[:, 1:2] + r[None, :] * np.sin(angles)], axis=-1
        )
        with np.errstate(divide="ignore"):
            return np.log(self.probability_at(points)).sum(axis=1)
