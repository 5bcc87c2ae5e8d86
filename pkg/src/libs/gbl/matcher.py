"""Correlative scan-to-submap matching.

Candidates are a discretized window around an initial pose: integer cell
shifts on the submap lattice and angular steps of ``resolution / r90`` where
``r90`` is the 90th percentile of the matched ranges. A max-pooled copy of the
lookup table bounds every block of ``coarse_factor``² shifts from above, and
blocks are refined in bound order until no remaining bound can beat the best
full-resolution score, which yields the exhaustive optimum.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..config import GBLSettings
from ..exceptions import MatchError
from ..geometry import Pose2, rotation_matrix
from ..posegraph.submap import UNKNOWN_PROBABILITY, Submap
from ..simulator import Scan

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MatchResult:
    pose: Pose2
    score: float
    accepted: bool
    submap_id: int = -1


def robot_points(scan: Scan, stride: int, extend: float) -> np.ndarray:
    """Finite beam endpoints (M, 2) in the robot frame, pushed ``extend`` meters further."""
    return scan.endpoints(Pose2(), extend=extend, stride=stride)


class _LookupGrid:
    """Submap probabilities with out-of-grid cells at the unknown probability."""

    def __init__(self, submap: Submap, coarse_factor: int):
        self.submap = submap
        self.table = submap.lookup_table()
        self.factor = coarse_factor
        f = coarse_factor
        padded = np.pad(self.table, f - 1, constant_values=UNKNOWN_PROBABILITY)
        # pooled[r + f - 1, c + f - 1] = max(table[r:r + f, c:c + f])
        self.pooled = sliding_window_view(padded, (f, f)).max(axis=(2, 3))

    def cells(self, world: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Table (col, row) of world points."""
        local = np.floor(self.submap.lattice.world_to_local(world)).astype(np.int64)
        c0, r0 = self.submap.offset
        return local[:, 0] - c0, local[:, 1] - r0

    @staticmethod
    def _gather(table: np.ndarray, cols: np.ndarray, rows: np.ndarray) -> np.ndarray:
        cols, rows = np.broadcast_arrays(cols, rows)
        h, w = table.shape
        inside = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
        out = np.full(cols.shape, UNKNOWN_PROBABILITY)
        out[inside] = table[rows[inside], cols[inside]]
        return out

    def values(self, cols: np.ndarray, rows: np.ndarray) -> np.ndarray:
        return self._gather(self.table, cols, rows)

    def bounds(self, cols: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Block maxima for blocks whose lower-left cell is (cols, rows)."""
        shift = self.factor - 1
        return self._gather(self.pooled, cols + shift, rows + shift)


def score(submap: Submap, points: np.ndarray, pose: Pose2) -> float:
    """Mean submap probability at robot-frame ``points`` placed at ``pose``."""
    if not len(points):
        return 0.0
    grid = _LookupGrid(submap, 1)
    cols, rows = grid.cells(pose.transform_points(points))
    return float(grid.values(cols, rows).mean())


def angular_step(points: np.ndarray, resolution: float) -> float:
    """Angle that moves the 90th-percentile endpoint by one cell."""
    r90 = float(np.percentile(np.hypot(points[:, 0], points[:, 1]), 90))
    if r90 <= resolution:
        return math.pi / 4.0
    return resolution / r90


def match(
    scan: Scan,
    submap: Submap,
    initial: Pose2,
    window: tuple[float, float, float],
    cfg: GBLSettings | None = None,
) -> MatchResult:
    """Best pose of ``scan`` against ``submap`` inside ``window`` around ``initial``.

    Args:
        scan: Scan to align.
        submap: Prior-map submap.
        initial: Predicted global pose.
        window: Half extents (x m, y m, theta rad) of the search.
        cfg: Beam stride, coarse factor and acceptance score.

    Returns:
        Best candidate; ``accepted`` when its score reaches ``cfg.min_score``.

    Raises:
        MatchError: No finite beam, an empty submap, or a window that misses
            the submap.
    """
    cfg = cfg or GBLSettings()
    res = submap.lattice.resolution
    wx, wy, wt = window
    if submap.is_empty:
        raise MatchError(f"Submap {submap.id} holds no observation")
    lo, hi = submap.world_bounds()
    if initial.x + wx < lo[0] or initial.x - wx > hi[0] or initial.y + wy < lo[1] or initial.y - wy > hi[1]:
        raise MatchError(f"Search window around ({initial.x:.2f}, {initial.y:.2f}) misses submap {submap.id}")
    points = robot_points(scan, cfg.beam_stride, 0.5 * res)
    if not len(points):
        raise MatchError("Scan has no finite beam")

    grid = _LookupGrid(submap, cfg.coarse_factor)
    f = cfg.coarse_factor
    nx = int(round(wx / res))
    ny = int(round(wy / res))
    dtheta = angular_step(points, res)
    nt = int(math.ceil(wt / dtheta - 1e-9)) if wt > 0 else 0
    thetas = initial.theta + np.arange(-nt, nt + 1) * dtheta

    # Block lower-left shifts covering [-n, n]
    block_x = np.arange(-nx, nx + 1, f)
    block_y = np.arange(-ny, ny + 1, f)

    base_cells = []
    bounds = []
    for theta in thetas:
        world = points @ rotation_matrix(theta).T + initial.translation
        cols, rows = grid.cells(world)
        base_cells.append((cols, rows))
        b = grid.bounds(
            cols[:, None, None] + block_x[None, :, None],
            rows[:, None, None] + block_y[None, None, :],
        ).mean(axis=0)
        bounds.append(b)
    bounds = np.stack(bounds)

    order = np.argsort(-bounds, axis=None, kind="stable")
    best = (-1.0, 0, 0, 0)
    refined = 0
    for flat in order:
        t, a, b = np.unravel_index(flat, bounds.shape)
        if bounds[t, a, b] <= best[0]:
            break
        refined += 1
        sx = np.arange(block_x[a], min(block_x[a] + f, nx + 1))
        sy = np.arange(block_y[b], min(block_y[b] + f, ny + 1))
        cols, rows = base_cells[t]
        scores = grid.values(cols[:, None, None] + sx[None, :, None], rows[:, None, None] + sy[None, None, :]).mean(axis=0)
        i, j = np.unravel_index(int(np.argmax(scores)), scores.shape)
        if scores[i, j] > best[0]:
            best = (float(scores[i, j]), int(t), int(sx[i]), int(sy[j]))

    value, t, i, j = best
    shift = rotation_matrix(submap.lattice.origin.theta) @ np.array([i * res, j * res])
    pose = Pose2(initial.x + shift[0], initial.y + shift[1], float(thetas[t]))
    logger.debug(
        "Match on submap %d: score %.3f after refining %d of %d blocks", submap.id, value, refined, bounds.size
    )
    return MatchResult(pose=pose, score=value, accepted=value >= cfg.min_score, submap_id=submap.id)
