"""Exact grid traversal for batches of rays."""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import RayOriginError
from .mapio import OccupancyGrid


@dataclass(frozen=True)
class Traversal:
    """Cells entered by a batch of rays, in traversal order per ray."""

    cols: np.ndarray
    rows: np.ndarray
    ray: np.ndarray


def traverse(
    occupied: np.ndarray | None,
    shape: tuple[int, int],
    start: np.ndarray,
    angles: np.ndarray,
    t_max: np.ndarray | float,
    collect: bool = False,
) -> tuple[np.ndarray, Traversal | None]:
    """Walk rays cell by cell through a lattice (incremental DDA).

    All quantities are in cell units: ``start`` is (N, 2) [col, row] with cell
    (c, r) spanning [c, c+1) x [r, r+1).

    Args:
        occupied: Boolean (rows, cols) array of blocking cells, or None.
        shape: Lattice shape (rows, cols).
        start: Ray origins, which must lie inside the lattice.
        angles: Ray directions in radians, in the lattice frame.
        t_max: Maximum travel per ray.
        collect: Also return every entered cell.

    Returns:
        Entry distance of the first blocking cell per ray (inf if none within
        ``t_max``), and the traversal when ``collect`` is set.
    """
    start = np.asarray(start, dtype=float).reshape(-1, 2)
    angles = np.asarray(angles, dtype=float).reshape(-1)
    n = len(angles)
    height, width = shape
    t_limit = np.broadcast_to(np.asarray(t_max, dtype=float), (n,))

    dx, dy = np.cos(angles), np.sin(angles)
    cell_x = np.floor(start[:, 0]).astype(np.int64)
    cell_y = np.floor(start[:, 1]).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        delta_x = np.where(dx != 0.0, 1.0 / np.abs(dx), np.inf)
        delta_y = np.where(dy != 0.0, 1.0 / np.abs(dy), np.inf)
        # 0 * inf in the unselected branch for axis-aligned rays
        next_x = np.where(
            dx > 0.0,
            (cell_x + 1 - start[:, 0]) * delta_x,
            np.where(dx < 0.0, (start[:, 0] - cell_x) * delta_x, np.inf),
        )
        next_y = np.where(
            dy > 0.0,
            (cell_y + 1 - start[:, 1]) * delta_y,
            np.where(dy < 0.0, (start[:, 1] - cell_y) * delta_y, np.inf),
        )
    step_x = np.where(dx > 0.0, 1, -1)
    step_y = np.where(dy > 0.0, 1, -1)
    t_entry = np.zeros(n)
    t_hit = np.full(n, np.inf)

    visited_cols: list[np.ndarray] = []
    visited_rows: list[np.ndarray] = []
    visited_ray: list[np.ndarray] = []

    active = np.arange(n)
    while active.size:
        cx, cy = cell_x[active], cell_y[active]
        keep = (cx >= 0) & (cx < width) & (cy >= 0) & (cy < height) & (t_entry[active] <= t_limit[active])
        active, cx, cy = active[keep], cx[keep], cy[keep]
        if not active.size:
            break
        if collect:
            visited_cols.append(cx)
            visited_rows.append(cy)
            visited_ray.append(active)
        if occupied is not None:
            hit = occupied[cy, cx]
            t_hit[active[hit]] = t_entry[active[hit]]
            active = active[~hit]

        go_x = next_x[active] <= next_y[active]
        ix, iy = active[go_x], active[~go_x]
        t_entry[ix] = next_x[ix]
        cell_x[ix] += step_x[ix]
        next_x[ix] += delta_x[ix]
        t_entry[iy] = next_y[iy]
        cell_y[iy] += step_y[iy]
        next_y[iy] += delta_y[iy]

    traversal = None
    if collect:
        if visited_ray:
            ray = np.concatenate(visited_ray)
            order = np.argsort(ray, kind="stable")
            traversal = Traversal(
                np.concatenate(visited_cols)[order],
                np.concatenate(visited_rows)[order],
                ray[order],
            )
        else:
            empty = np.zeros(0, dtype=np.int64)
            traversal = Traversal(empty, empty, empty)
    return t_hit, traversal


def _grid_frame(grid: OccupancyGrid, origins: np.ndarray, bearings: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    origins = np.asarray(origins, dtype=float).reshape(-1, 2)
    local = grid.world_to_grid_frame(origins) / grid.resolution
    inside = (local[:, 0] >= 0) & (local[:, 0] < grid.width) & (local[:, 1] >= 0) & (local[:, 1] < grid.height)
    if not inside.all():
        bad = origins[~inside][0]
        raise RayOriginError(f"Ray origin ({bad[0]:.3f}, {bad[1]:.3f}) lies outside the grid")
    return local, np.asarray(bearings, dtype=float) - grid.origin.theta


def cast_rays(
    grid: OccupancyGrid,
    origins: np.ndarray,
    bearings: np.ndarray,
    range_max: float,
    occupied: np.ndarray | None = None,
) -> np.ndarray:
    """Distance from each origin to the first Occupied cell along each bearing.

    Args:
        grid: Map; supplies the frame and, unless ``occupied`` is given, the obstacles.
        origins: (N, 2) world points, or one point broadcast over all bearings.
        bearings: (N,) world bearings in radians.
        range_max: Meters.
        occupied: Alternative obstacle mask in the grid's shape.

    Returns:
        Meters, ``inf`` for no return. Unknown cells are transparent.
    """
    bearings = np.asarray(bearings, dtype=float).reshape(-1)
    origins = np.asarray(origins, dtype=float).reshape(-1, 2)
    if len(origins) == 1 and len(bearings) > 1:
        origins = np.repeat(origins, len(bearings), axis=0)
    local, angles = _grid_frame(grid, origins, bearings)
    mask = grid.occupied if occupied is None else occupied
    t_hit, _ = traverse(mask, grid.shape, local, angles, range_max / grid.resolution)
    return t_hit * grid.resolution


def cast_ray(grid: OccupancyGrid, origin: tuple[float, float], bearing: float, range_max: float) -> float:
    """Single-ray :func:`cast_rays`; ``inf`` means no return."""
    return float(cast_rays(grid, np.array([origin]), np.array([bearing]), range_max)[0])


def traversed_mask(
    grid: OccupancyGrid,
    origins: np.ndarray,
    bearings: np.ndarray,
    range_max: float,
    occupied: np.ndarray | None = None,
) -> np.ndarray:
    """Cells entered by any ray, up to and including the first Occupied cell."""
    bearings = np.asarray(bearings, dtype=float).reshape(-1)
    origins = np.asarray(origins, dtype=float).reshape(-1, 2)
    if len(origins) == 1 and len(bearings) > 1:
        origins = np.repeat(origins, len(bearings), axis=0)
    local, angles = _grid_frame(grid, origins, bearings)
    mask = grid.occupied if occupied is None else occupied
    _, traversal = traverse(mask, grid.shape, local, angles, range_max / grid.resolution, collect=True)
    seen = np.zeros(grid.shape, dtype=bool)
    seen[traversal.rows, traversal.cols] = True
    return seen


def full_circle(n: int) -> np.ndarray:
    """``n`` bearings evenly spaced over a full turn, starting at 0."""
    return np.arange(n) * (2.0 * math.pi / n)
