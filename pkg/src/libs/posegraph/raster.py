"""Projection of pose-graph submaps into one occupancy grid."""

import logging
import math

import numpy as np

from ..geometry import Pose2
from ..mapio import FREE, OCCUPIED, UNKNOWN, OccupancyGrid
from .container import PoseGraphMap
from .submap import dequantize

logger = logging.getLogger(__name__)


def _target_frame(pgbm: PoseGraphMap, resolution: float | None) -> OccupancyGrid:
    """All-Unknown grid over the union of submap extents, aligned with the lattice."""
    lattice = pgbm.lattice
    res = resolution or lattice.resolution
    populated = [s for s in pgbm.submaps if s.shape[0] and s.shape[1]]
    if not populated:
        return OccupancyGrid(np.full((1, 1), UNKNOWN, dtype=np.int8), res, lattice.origin)
    lo = np.array([min(s.offset[0] for s in populated), min(s.offset[1] for s in populated)], dtype=float)
    hi = np.array(
        [max(s.offset[0] + s.shape[1] for s in populated), max(s.offset[1] + s.shape[0] for s in populated)],
        dtype=float,
    )
    lo_m, hi_m = lo * lattice.resolution, hi * lattice.resolution
    width = max(1, int(math.ceil((hi_m[0] - lo_m[0]) / res - 1e-9)))
    height = max(1, int(math.ceil((hi_m[1] - lo_m[1]) / res - 1e-9)))
    origin = lattice.origin.compose(Pose2(lo_m[0], lo_m[1], 0.0))
    return OccupancyGrid(np.full((height, width), UNKNOWN, dtype=np.int8), res, origin)


def aggregate(pgbm: PoseGraphMap, frame: OccupancyGrid) -> tuple[np.ndarray, np.ndarray]:
    """Max submap probability and observed flag for every cell of ``frame``.

    Each frame cell center is looked up in the lattice cell containing it.
    """
    rows, cols = np.indices(frame.shape)
    centers = frame.cells_to_world(cols.ravel(), rows.ravel())
    lat_cols, lat_rows = pgbm.lattice.world_to_cells(centers)
    best = np.zeros(frame.shape[0] * frame.shape[1])
    observed = np.zeros_like(best, dtype=bool)
    for submap in pgbm.submaps:
        h, w = submap.shape
        if not h or not w:
            continue
        lc = lat_cols - submap.offset[0]
        lr = lat_rows - submap.offset[1]
        inside = (lc >= 0) & (lc < w) & (lr >= 0) & (lr < h)
        idx = np.nonzero(inside)[0]
        known = submap.known[lr[idx], lc[idx]]
        idx = idx[known]
        p = dequantize(submap.probabilities[lr[idx], lc[idx]])
        best[idx] = np.maximum(best[idx], p)
        observed[idx] = True
    return best.reshape(frame.shape), observed.reshape(frame.shape)


def rasterize_global(
    pgbm: PoseGraphMap,
    resolution: float | None = None,
    frame: OccupancyGrid | None = None,
    occupied_thresh: float = 0.65,
    free_thresh: float = 0.196,
) -> OccupancyGrid:
    """Project all submaps into one trinary grid.

    Args:
        pgbm: Pose-graph map.
        resolution: Output cell size; the lattice resolution when omitted.
        frame: Grid whose frame the output takes (its cells are ignored).
        occupied_thresh: Max probability above which a cell is Occupied.
        free_thresh: Max probability below which an observed cell is Free.

    Returns:
        Grid with unobserved cells Unknown; all-Unknown for an empty map.
    """
    target = frame if frame is not None else _target_frame(pgbm, resolution)
    best, observed = aggregate(pgbm, target)
    cells = np.full(target.shape, UNKNOWN, dtype=np.int8)
    cells[observed & (best > occupied_thresh)] = OCCUPIED
    cells[observed & (best < free_thresh)] = FREE
    logger.info("Rasterized %d submaps into %dx%d grid", len(pgbm.submaps), target.width, target.height)
    return target.with_cells(cells)


def observed_mask(pgbm: PoseGraphMap, frame: OccupancyGrid) -> np.ndarray:
    """Cells of ``frame`` seen by at least one beam."""
    return aggregate(pgbm, frame)[1]


def occupied_iou(raster: OccupancyGrid, source: OccupancyGrid, observed: np.ndarray | None = None) -> float:
    """Intersection over union of Occupied cells, restricted to ``observed``."""
    if observed is None:
        observed = np.ones(source.shape, dtype=bool)
    a = raster.occupied & observed
    b = source.occupied & observed
    union = int((a | b).sum())
    if union == 0:
        return 1.0
    return int((a & b).sum()) / union
