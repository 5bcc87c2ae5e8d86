"""Topology-preserving thinning of the Free region and skeleton dilation."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .mapio import EIGHT_CONNECTED, OccupancyGrid, encode_pgm, grid_pixels

logger = logging.getLogger(__name__)

# Neighbor offsets (d_row, d_col), counter-clockwise from east; row grows northward.
# Bit k of a neighborhood code is set when neighbor k is foreground.
NEIGHBORS = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))
E, NE, N, NW, W, SW, S, SE = range(8)


@dataclass(frozen=True, eq=False)
class CellMask:
    """Boolean mask over the cells of a grid."""

    bits: np.ndarray
    grid: OccupancyGrid

    def __post_init__(self) -> None:
        bits = np.array(self.bits, dtype=bool, copy=True)
        if bits.shape != self.grid.shape:
            raise ValueError(f"mask shape {bits.shape} does not match grid {self.grid.shape}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return self.grid.width

    @property
    def height(self) -> int:
        return self.grid.height

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def contains(self, col: int, row: int) -> bool:
        return bool(self.grid.in_bounds(col, row) and self.bits[row, col])

    def cells(self) -> list[tuple[int, int]]:
        """(col, row) of set cells in row-major order."""
        rows, cols = np.nonzero(self.bits)
        return list(zip(cols.tolist(), rows.tolist()))


# ========== Neighborhood lookup tables ==========


def _bits(code: int) -> list[int]:
    return [(code >> k) & 1 for k in range(8)]


def _build_tables() -> dict[str, np.ndarray]:
    count = np.zeros(256, dtype=np.int8)
    transitions = np.zeros(256, dtype=np.int8)
    first = np.zeros(256, dtype=bool)
    second = np.zeros(256, dtype=bool)
    removable = np.zeros(256, dtype=bool)
    # clockwise walk from north, as the thinning conditions are usually stated
    walk = (N, NE, E, SE, S, SW, W, NW)
    for code in range(256):
        p = _bits(code)
        b = sum(p)
        seq = [p[k] for k in walk]
        a = sum(1 for i in range(8) if seq[i] == 0 and seq[(i + 1) % 8] == 1)
        count[code] = b
        transitions[code] = a
        base = 2 <= b <= 6 and a == 1
        first[code] = base and p[N] * p[E] * p[S] == 0 and p[E] * p[S] * p[W] == 0
        second[code] = base and p[N] * p[E] * p[W] == 0 and p[N] * p[S] * p[W] == 0

        ring = np.zeros((3, 3), dtype=bool)
        for k, (dr, dc) in enumerate(NEIGHBORS):
            ring[1 + dr, 1 + dc] = p[k]
        _, n_groups = ndimage.label(ring, structure=EIGHT_CONNECTED)
        removable[code] = b >= 2 and n_groups == 1
    return {
        "count": count,
        "transitions": transitions,
        "first": first,
        "second": second,
        "removable": removable,
    }


_TABLES = _build_tables()


def neighborhood_codes(bits: np.ndarray) -> np.ndarray:
    """8-bit neighborhood code for every cell; out-of-grid neighbors are background."""
    padded = np.pad(bits.astype(np.uint8), 1)
    h, w = bits.shape
    code = np.zeros((h, w), dtype=np.uint8)
    for k, (dr, dc) in enumerate(NEIGHBORS):
        code |= padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w] << k
    return code


def _code_at(bits: np.ndarray, row: int, col: int) -> int:
    h, w = bits.shape
    code = 0
    for k, (dr, dc) in enumerate(NEIGHBORS):
        r, c = row + dr, col + dc
        if 0 <= r < h and 0 <= c < w and bits[r, c]:
            code |= 1 << k
    return code


# ========== Thinning ==========


class _TopologyGuard:
    """Checks that a mask still has one 8-connected component per Free component."""

    def __init__(self, free: np.ndarray):
        self.labels, self.n_components = ndimage.label(free, structure=EIGHT_CONNECTED)

    def preserved(self, bits: np.ndarray) -> bool:
        _, n = ndimage.label(bits, structure=EIGHT_CONNECTED)
        if n != self.n_components:
            return False
        return len(np.unique(self.labels[bits])) == self.n_components


def _delete_sequentially(bits: np.ndarray, candidates: np.ndarray) -> int:
    """Delete candidates one at a time while each stays locally removable."""
    removed = 0
    for row, col in zip(*np.nonzero(candidates)):
        if bits[row, col] and _TABLES["removable"][_code_at(bits, row, col)]:
            bits[row, col] = False
            removed += 1
    return removed


def _remove_full_blocks(bits: np.ndarray) -> int:
    """Break fully set 2x2 blocks by deleting removable pixels."""
    removed = 0
    while True:
        blocks = bits[:-1, :-1] & bits[1:, :-1] & bits[:-1, 1:] & bits[1:, 1:]
        if not blocks.any():
            return removed
        changed = False
        for row, col in zip(*np.nonzero(blocks)):
            cells = ((row, col), (row, col + 1), (row + 1, col), (row + 1, col + 1))
            if not all(bits[r, c] for r, c in cells):
                continue
            for r, c in cells:
                if _TABLES["removable"][_code_at(bits, r, c)]:
                    bits[r, c] = False
                    removed += 1
                    changed = True
                    break
        if not changed:
            logger.warning("%d 2x2 blocks cannot be thinned without splitting the skeleton", int(blocks.sum()))
            return removed


def skeletonize(grid: OccupancyGrid, max_iterations: int = 10_000) -> CellMask:
    """Thin the Free region of a grid to a connected one-cell-wide skeleton.

    Two parallel subiterations run until nothing changes. A subiteration whose
    deletions would split or erase a component is replayed one pixel at a
    time. A final pass breaks any remaining fully set 2x2 blocks.

    Args:
        grid: Source grid.
        max_iterations: Cap on thinning passes.

    Returns:
        Skeleton mask, empty when the grid has no Free cell.
    """
    free = grid.free
    bits = free.copy()
    if not bits.any():
        return CellMask(bits, grid)

    guard = _TopologyGuard(free)
    iterations = 0
    replays = 0
    for iterations in range(1, max_iterations + 1):
        changed = False
        for table in ("first", "second"):
            candidates = bits & _TABLES[table][neighborhood_codes(bits)]
            if not candidates.any():
                continue
            thinned = bits & ~candidates
            if guard.preserved(thinned):
                bits = thinned
                changed = True
            else:
                replays += 1
                changed |= _delete_sequentially(bits, candidates) > 0
        if not changed:
            break
    else:
        logger.warning("Thinning stopped at the iteration cap (%d)", max_iterations)

    post = _remove_full_blocks(bits)
    logger.info(
        "Skeleton: %d cells from %d free after %d iterations (%d sequential replays, %d post-pass)",
        int(bits.sum()),
        int(free.sum()),
        iterations,
        replays,
        post,
    )
    return CellMask(bits, grid)


def dilate(mask: CellMask, radius: int) -> CellMask:
    """Chebyshev dilation clipped to the Free cells of the mask's grid."""
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    if radius == 0:
        return mask
    structure = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    grown = ndimage.binary_dilation(mask.bits, structure=structure) & mask.grid.free
    return CellMask(grown, mask.grid)


def skeleton_overlay(grid: OccupancyGrid, mask: CellMask) -> bytes:
    """PGM of the map with skeleton pixels drawn as 128."""
    pixels = grid_pixels(grid)
    pixels[np.flipud(mask.bits)] = 128
    return encode_pgm(pixels)
