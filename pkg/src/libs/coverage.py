"""Wavefront coverage planning over a cell region."""

import csv
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import CoverageError
from .geometry import Pose2
from .mapio import OccupancyGrid
from .models import ScanSpec
from .raycast import traversed_mask
from .skeleton import CellMask

logger = logging.getLogger(__name__)

# (d_col, d_row) in tie-break order: E, NE, N, NW, W, SW, S, SE
STEPS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))

Cell = tuple[int, int]


@dataclass(frozen=True)
class WaypointPath:
    """Ordered waypoints at cell centers and the region they sweep."""

    waypoints: list[Pose2]
    cells: list[Cell]
    region: CellMask
    visit_order: list[Cell] = field(default_factory=list)
    new_cells: int = 0

    def __len__(self) -> int:
        return len(self.waypoints)

    def length(self) -> float:
        """Polyline length in meters."""
        return sum(a.distance_to(b) for a, b in zip(self.waypoints, self.waypoints[1:]))


def default_start(region: CellMask) -> Cell:
    """Region cell nearest to the grid centroid (first in row-major order on ties)."""
    rows, cols = np.nonzero(region.bits)
    if not len(rows):
        raise CoverageError("Coverage region is empty")
    cx, cy = region.width / 2.0, region.height / 2.0
    d2 = (cols + 0.5 - cx) ** 2 + (rows + 0.5 - cy) ** 2
    i = int(np.argmin(d2))
    return int(cols[i]), int(rows[i])


def wavefront_labels(region: np.ndarray, start: Cell) -> np.ndarray:
    """Breadth-first 8-connected step distance from ``start``; -1 where unreached."""
    height, width = region.shape
    labels = np.full(region.shape, -1, dtype=np.int64)
    labels[start[1], start[0]] = 0
    queue = deque([start])
    while queue:
        col, row = queue.popleft()
        d = labels[row, col] + 1
        for dc, dr in STEPS:
            c, r = col + dc, row + dr
            if 0 <= c < width and 0 <= r < height and region[r, c] and labels[r, c] < 0:
                labels[r, c] = d
                queue.append((c, r))
    return labels


def visit_order(labels: np.ndarray, start: Cell) -> tuple[list[Cell], int]:
    """Steepest-ascent sweep with backtracking over labelled cells.

    Returns:
        Visit path (backtrack cells included) and the number of new cells.
    """
    height, width = labels.shape
    total = int((labels >= 0).sum())
    visited = np.zeros(labels.shape, dtype=bool)
    visited[start[1], start[0]] = True
    order = [start]
    stack = [start]
    new_cells = 1
    while stack and new_cells < total:
        col, row = stack[-1]
        best: Cell | None = None
        best_label = -1
        for dc, dr in STEPS:
            c, r = col + dc, row + dr
            if 0 <= c < width and 0 <= r < height and not visited[r, c] and labels[r, c] > best_label:
                best, best_label = (c, r), int(labels[r, c])
        if best is not None:
            visited[best[1], best[0]] = True
            stack.append(best)
            order.append(best)
            new_cells += 1
        else:
            stack.pop()
            if stack:
                order.append(stack[-1])
    return order, new_cells


def downsample(order: list[Cell], stride: int) -> list[Cell]:
    """Every ``stride``-th cell of the visit path plus the final cell."""
    picked = order[::stride]
    if (len(order) - 1) % stride:
        picked.append(order[-1])
    # drop repeats where the path came back to the same cell
    return [c for i, c in enumerate(picked) if i == 0 or c != picked[i - 1]]


def _poses(grid: OccupancyGrid, cells: list[Cell]) -> list[Pose2]:
    centers = grid.cells_to_world(np.array([c for c, _ in cells]), np.array([r for _, r in cells]))
    headings = []
    for i in range(len(cells)):
        if i + 1 < len(cells):
            d = centers[i + 1] - centers[i]
            headings.append(math.atan2(d[1], d[0]))
        else:
            headings.append(headings[-1] if headings else 0.0)
    return [Pose2(float(p[0]), float(p[1]), h) for p, h in zip(centers, headings)]


def wavefront_plan(
    grid: OccupancyGrid,
    region: CellMask,
    start: Cell | None = None,
    stride: int = 5,
) -> WaypointPath:
    """Plan a sweep of ``region`` starting at ``start``.

    Args:
        grid: Map the region indexes.
        region: Cells to sweep; cells not 8-connected to ``start`` are dropped.
        start: (col, row); defaults to :func:`default_start`.
        stride: Visit-path steps between emitted waypoints.

    Returns:
        Waypoint path whose ``region`` is the swept component.
    """
    if stride < 1:
        raise CoverageError(f"stride must be at least 1, got {stride}")
    if region.count == 0:
        raise CoverageError("Coverage region is empty")
    if start is None:
        start = default_start(region)
    if not region.contains(*start):
        raise CoverageError(f"Start cell {start} is not in the coverage region")

    labels = wavefront_labels(region.bits, start)
    reached = labels >= 0
    dropped = region.count - int(reached.sum())
    if dropped:
        logger.warning("%d region cells are not connected to the start cell and are skipped", dropped)

    order, new_cells = visit_order(labels, start)
    cells = downsample(order, stride)
    path = WaypointPath(
        waypoints=_poses(grid, cells),
        cells=cells,
        region=CellMask(reached, grid),
        visit_order=order,
        new_cells=new_cells,
    )
    logger.info(
        "Coverage plan: %d waypoints over %d cells (%d visit steps, stride %d)",
        len(cells),
        new_cells,
        len(order),
        stride,
    )
    return path


def coverage_check(grid: OccupancyGrid, path: WaypointPath, scan_spec: ScanSpec) -> float:
    """Share of all Free cells that some beam from some waypoint enters.

    Free cells the waypoints cannot see, such as a room with no waypoint in
    it, count against the fraction.
    """
    total = int(grid.free.sum())
    if not path.waypoints or total == 0:
        return 0.0

    seen = np.zeros(grid.shape, dtype=bool)
    bearings = scan_spec.bearings()
    for pose in path.waypoints:
        seen |= traversed_mask(grid, np.array([[pose.x, pose.y]]), pose.theta + bearings, scan_spec.range_max)
    return float((seen & grid.free).sum()) / total


def write_waypoints_csv(path: str | Path, waypoint_path: WaypointPath) -> None:
    """Write ``idx,x,y,theta`` rows."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["idx", "x", "y", "theta"])
        for i, p in enumerate(waypoint_path.waypoints):
            writer.writerow([i, f"{p.x:.6f}", f"{p.y:.6f}", f"{p.theta:.6f}"])
