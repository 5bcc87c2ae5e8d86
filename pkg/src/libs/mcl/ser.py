"""Similar-energy regions: scan-plausible Free cells for global initialization."""

import logging
import math

import numpy as np

from ..mapio import OccupancyGrid
from ..raycast import cast_rays
from ..simulator import Scan
from .filter import ParticleSet, init_global_uniform, sample_free_cells

logger = logging.getLogger(__name__)

SIGNATURE_RAYS = 8


def scan_signature(scan: Scan) -> np.ndarray | None:
    """Eight order statistics of the scan's ranges (no return counts as range_max).

    Returns:
        Ascending signature, or None when the scan has no finite range.
    """
    if not np.isfinite(scan.ranges).any():
        return None
    ranges = np.minimum(np.where(np.isfinite(scan.ranges), scan.ranges, scan.spec.range_max), scan.spec.range_max)
    q = (np.arange(SIGNATURE_RAYS) + 0.5) / SIGNATURE_RAYS
    return np.quantile(ranges, q)


class SimilarEnergyIndex:
    """Per-Free-cell signature of sorted expected ranges along eight bearings.

    Computed once per map and shared read-only across runs.
    """

    def __init__(self, grid: OccupancyGrid, range_max: float, cell_stride: int = 1):
        self.grid = grid
        self.range_max = range_max
        cols, rows = grid.free_cell_indices()
        keep = (cols % cell_stride == 0) & (rows % cell_stride == 0)
        self.cols, self.rows = cols[keep], rows[keep]
        self.has_obstacles = bool(grid.occupied.any())
        self.signatures = np.zeros((len(self.cols), SIGNATURE_RAYS))
        if len(self.cols) and self.has_obstacles:
            centers = grid.cells_to_world(self.cols, self.rows)
            bearings = np.arange(SIGNATURE_RAYS) * (2.0 * math.pi / SIGNATURE_RAYS)
            origins = np.repeat(centers, SIGNATURE_RAYS, axis=0)
            ranges = cast_rays(grid, origins, np.tile(bearings, len(centers)), range_max)
            ranges = np.minimum(ranges, range_max).reshape(-1, SIGNATURE_RAYS)
            self.signatures = np.sort(ranges, axis=1)
        logger.info("SER index: %d cells (stride %d)", len(self.cols), cell_stride)

    def __len__(self) -> int:
        return len(self.cols)

    def region(self, signature: np.ndarray, fraction: float = 0.1) -> np.ndarray:
        """Indices of cells whose L1 signature distance is within the best ``fraction``."""
        distance = np.abs(self.signatures - signature[None, :]).sum(axis=1)
        k = max(1, int(math.ceil(fraction * len(distance))))
        cutoff = np.partition(distance, k - 1)[k - 1]
        return np.nonzero(distance <= cutoff)[0]


def init_global_ser(
    grid: OccupancyGrid,
    scan: Scan,
    n: int,
    rng_seed: int | np.random.Generator | None = 0,
    index: SimilarEnergyIndex | None = None,
    fraction: float = 0.1,
) -> ParticleSet:
    """Particles spread over the similar-energy region of ``scan``.

    Falls back to uniform-over-Free when the map has no obstacle, the scan has
    no finite range, or the region holds fewer than n/10 cells.
    """
    rng = np.random.default_rng(rng_seed)
    if index is None:
        index = SimilarEnergyIndex(grid, scan.spec.range_max)
    signature = scan_signature(scan)
    if signature is None or not index.has_obstacles or not len(index):
        logger.warning("SER unavailable (no finite range or no obstacle); sampling uniformly over Free cells")
        return init_global_uniform(grid, n, rng)
    cells = index.region(signature, fraction)
    if len(cells) < n / 10.0:
        logger.warning("SER has %d cells (< n/10); sampling uniformly over Free cells", len(cells))
        return init_global_uniform(grid, n, rng)
    poses = sample_free_cells(grid, index.cols[cells], index.rows[cells], n, rng)
    logger.info("SER: %d of %d cells", len(cells), len(index))
    return ParticleSet.uniform(poses, rng)
