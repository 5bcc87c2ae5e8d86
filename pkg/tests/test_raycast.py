import math
import warnings

import numpy as np
import pytest

from src.libs.exceptions import RayOriginError
from src.libs.geometry import Pose2
from src.libs.mapio import FREE, OCCUPIED, UNKNOWN, OccupancyGrid
from src.libs.raycast import cast_ray, cast_rays, full_circle, traverse, traversed_mask


@pytest.mark.parametrize(
    "bearing, expected",
    [(0.0, 1.9), (math.pi / 2, 1.4), (math.pi, 1.9), (-math.pi / 2, 1.4)],
)
def test_axis_rays_hit_walls(room: OccupancyGrid, bearing: float, expected: float) -> None:
    assert cast_ray(room, (2.0, 1.5), bearing, 10.0) == pytest.approx(expected)


def test_no_return_beyond_range(room: OccupancyGrid) -> None:
    assert cast_ray(room, (2.0, 1.5), 0.0, 1.0) == math.inf


def test_unknown_cells_are_transparent() -> None:
    cells = np.full((1, 10), FREE, dtype=np.int8)
    cells[0, 4] = UNKNOWN
    cells[0, 8] = OCCUPIED
    grid = OccupancyGrid(cells, 1.0)
    assert cast_ray(grid, (0.5, 0.5), 0.0, 20.0) == pytest.approx(7.5)


def test_rotated_grid_frame(room: OccupancyGrid) -> None:
    rotated = OccupancyGrid(room.cells, room.resolution, Pose2(0.0, 0.0, math.pi / 2))
    assert cast_ray(rotated, (-1.5, 2.0), math.pi / 2, 10.0) == pytest.approx(1.9)


def test_origin_outside_grid(room: OccupancyGrid) -> None:
    with pytest.raises(RayOriginError):
        cast_ray(room, (-1.0, 1.0), 0.0, 5.0)


def test_broadcast_origin(room: OccupancyGrid) -> None:
    ranges = cast_rays(room, np.array([[2.0, 1.5]]), full_circle(4), 10.0)
    np.testing.assert_allclose(ranges, [1.9, 1.4, 1.9, 1.4])


def test_traverse_matches_cell_walk() -> None:
    # leaves the 3x3 lattice through x = 3 at y = 1.75
    hits, traversal = traverse(None, (3, 3), np.array([[0.5, 0.5]]), np.array([math.atan2(1.0, 2.0)]), 10.0, True)
    assert hits[0] == math.inf
    cells = list(zip(traversal.cols.tolist(), traversal.rows.tolist()))
    assert cells == [(0, 0), (1, 0), (1, 1), (2, 1)]


def _slab_overlap(start: np.ndarray, angle: float, t_max: float, col: int, row: int) -> float:
    """Length of the ray segment [0, t_max] inside cell (col, row)."""
    lo, hi = 0.0, t_max
    for origin, d, edge in ((start[0], math.cos(angle), col), (start[1], math.sin(angle), row)):
        a, b = (edge - origin) / d, (edge + 1 - origin) / d
        lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
    return hi - lo


def test_traverse_agrees_with_slab_oracle() -> None:
    rng = np.random.default_rng(5)
    shape = (7, 9)
    for _ in range(200):
        start = rng.uniform([0.0, 0.0], [shape[1], shape[0]])
        angle = float(rng.uniform(-math.pi, math.pi))
        _, traversal = traverse(None, shape, start[None, :], np.array([angle]), 4.0, True)
        cells = list(zip(traversal.cols.tolist(), traversal.rows.tolist()))
        assert cells[0] == (int(start[0]), int(start[1]))
        for (c0, r0), (c1, r1) in zip(cells, cells[1:]):
            assert abs(c1 - c0) + abs(r1 - r0) == 1
        overlaps = {
            (c, r): _slab_overlap(start, angle, 4.0, c, r) for c in range(shape[1]) for r in range(shape[0])
        }
        assert {cell for cell, length in overlaps.items() if length > 1e-9} <= set(cells)
        assert all(overlaps[cell] > -1e-9 for cell in cells)


def test_axis_aligned_ray_from_cell_corner_is_silent() -> None:
    grid = OccupancyGrid(np.full((4, 6), FREE, dtype=np.int8), 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        assert cast_ray(grid, (2.0, 1.0), 0.0, 10.0) == math.inf
        assert cast_ray(grid, (2.0, 1.0), math.pi / 2, 10.0) == math.inf


def test_cast_ray_is_translation_invariant(room: OccupancyGrid) -> None:
    shift = np.array([3.7, -12.25])
    moved = OccupancyGrid(room.cells, room.resolution, Pose2(float(shift[0]), float(shift[1]), 0.0))
    bearings = full_circle(36)
    for point in ([2.0, 1.5], [0.55, 0.45], [3.31, 2.62]):
        origin = np.array(point)
        np.testing.assert_allclose(
            cast_rays(moved, origin + shift, bearings, 10.0), cast_rays(room, origin, bearings, 10.0), atol=1e-9
        )


def test_traversed_mask_stops_at_first_hit(room: OccupancyGrid) -> None:
    seen = traversed_mask(room, np.array([[2.05, 1.55]]), np.array([0.0]), 10.0)
    assert seen[15, 20:40].all()
    assert seen.sum() == 20
