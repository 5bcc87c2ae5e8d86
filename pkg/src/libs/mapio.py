"""Occupancy grid data model, PGM/YAML map files and region classification."""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from pydantic import ValidationError
from scipy import ndimage

from .exceptions import MapDimensionError, MapFormatError
from .geometry import Pose2
from .models import MapMetadata

logger = logging.getLogger(__name__)

# Cell states, stored as int8 (the usual occupancy-grid message values)
OCCUPIED = np.int8(100)
FREE = np.int8(0)
UNKNOWN = np.int8(-1)

# Pixel values written by save_ogm
PIXEL_OCCUPIED = 0
PIXEL_FREE = 254
PIXEL_UNKNOWN = 205

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)
EIGHT_CONNECTED = ndimage.generate_binary_structure(2, 2)


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Trinary raster map.

    ``cells`` has shape (height, width); row 0 is the bottom row of the map,
    so increasing row index means increasing world y in the grid frame.
    The array is copied on construction and marked read-only.
    """

    cells: np.ndarray
    resolution: float
    origin: Pose2 = field(default_factory=Pose2)

    def __post_init__(self) -> None:
        cells = np.array(self.cells, dtype=np.int8, copy=True)
        if cells.ndim != 2 or cells.size == 0:
            raise MapDimensionError(f"cells must be a non-empty 2D array, got shape {cells.shape}")
        if not (self.resolution > 0 and math.isfinite(self.resolution)):
            raise MapDimensionError(f"resolution must be positive, got {self.resolution}")
        bad = ~np.isin(cells, (OCCUPIED, FREE, UNKNOWN))
        if bad.any():
            raise MapFormatError("cells must be Occupied (100), Free (0) or Unknown (-1)")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "resolution", float(self.resolution))

    # ========== Shape and frame ==========

    @property
    def width(self) -> int:
        return int(self.cells.shape[1])

    @property
    def height(self) -> int:
        return int(self.cells.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def same_frame(self, other: "OccupancyGrid") -> bool:
        """True if both grids share dimensions, resolution and origin."""
        return (
            self.shape == other.shape
            and self.resolution == other.resolution
            and self.origin == other.origin
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return self.same_frame(other) and bool(np.array_equal(self.cells, other.cells))

    __hash__ = None  # type: ignore[assignment]

    def with_cells(self, cells: np.ndarray) -> "OccupancyGrid":
        """New grid in the same frame."""
        if cells.shape != self.shape:
            raise MapDimensionError(f"shape {cells.shape} does not match grid {self.shape}")
        return OccupancyGrid(cells, self.resolution, self.origin)

    def content_hash(self) -> str:
        """Stable identifier of frame and contents."""
        h = hashlib.sha256()
        h.update(f"{self.width}x{self.height}|{self.resolution!r}|".encode())
        h.update(f"{self.origin.x!r},{self.origin.y!r},{self.origin.theta!r}|".encode())
        h.update(self.cells.tobytes())
        return h.hexdigest()

    # ========== Coordinates ==========

    def world_to_grid_frame(self, points: np.ndarray) -> np.ndarray:
        """World points (N, 2) into the grid frame in meters."""
        return self.origin.inverse().transform_points(points)

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        """World point to (col, row); may lie out of bounds."""
        cols, rows = self.world_to_cells(np.array([[x, y]]))
        return int(cols[0]), int(rows[0])

    def world_to_cells(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        local = self.world_to_grid_frame(points)
        cols = np.floor(local[:, 0] / self.resolution).astype(np.int64)
        rows = np.floor(local[:, 1] / self.resolution).astype(np.int64)
        return cols, rows

    def cell_to_world(self, col: int, row: int) -> tuple[float, float]:
        """World coordinates of a cell center."""
        p = self.cells_to_world(np.array([col]), np.array([row]))[0]
        return float(p[0]), float(p[1])

    def cells_to_world(self, cols: np.ndarray, rows: np.ndarray) -> np.ndarray:
        local = np.column_stack(
            [(np.asarray(cols) + 0.5) * self.resolution, (np.asarray(rows) + 0.5) * self.resolution]
        )
        return self.origin.transform_points(local)

    def in_bounds(self, col: int | np.ndarray, row: int | np.ndarray):
        return (col >= 0) & (col < self.width) & (row >= 0) & (row < self.height)

    # ========== Masks ==========

    @property
    def occupied(self) -> np.ndarray:
        return self.cells == OCCUPIED

    @property
    def free(self) -> np.ndarray:
        return self.cells == FREE

    @property
    def unknown(self) -> np.ndarray:
        return self.cells == UNKNOWN

    def free_cell_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """(cols, rows) of Free cells in row-major order."""
        rows, cols = np.nonzero(self.free)
        return cols, rows


# ========== PGM codec ==========


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` header tokens, skipping '#' comments. Returns tokens and offset."""
    tokens: list[bytes] = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i >= n:
            raise MapFormatError("PGM header truncated")
        if data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
            i += 1
        tokens.append(data[start:i])
    return tokens, i


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode a P5 or P2 PGM with maxval 255 into a (rows, cols) uint8 array, top row first."""
    tokens, offset = _pgm_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P2"):
        raise MapFormatError(f"Not a PGM image (magic {magic!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise MapFormatError(f"Malformed PGM header: {e}") from e
    if width <= 0 or height <= 0:
        raise MapFormatError(f"Invalid PGM size {width}x{height}")
    if maxval != 255:
        raise MapFormatError(f"PGM maxval must be 255, got {maxval}")

    expected = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates the header from the raster
        raster = data[offset + 1 :]
        if len(raster) != expected:
            raise MapFormatError(f"PGM pixel count {len(raster)} != {expected}")
        pixels = np.frombuffer(raster, dtype=np.uint8)
    else:
        try:
            values = [int(t) for t in data[offset:].split()]
        except ValueError as e:
            raise MapFormatError(f"Malformed ASCII PGM raster: {e}") from e
        if len(values) != expected:
            raise MapFormatError(f"PGM pixel count {len(values)} != {expected}")
        if values and (min(values) < 0 or max(values) > 255):
            raise MapFormatError("ASCII PGM pixel outside [0, 255]")
        pixels = np.asarray(values, dtype=np.uint8)
    return pixels.reshape(height, width)


def encode_pgm(pixels: np.ndarray) -> bytes:
    """Encode a (rows, cols) uint8 array, top row first, as binary P5."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    height, width = pixels.shape
    return f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes()


# ========== Map files ==========


def load_ogm(pgm_bytes: bytes, meta: MapMetadata) -> OccupancyGrid:
    """Build a trinary grid from PGM bytes and metadata.

    Args:
        pgm_bytes: P5 or P2 image, maxval 255.
        meta: Resolution, origin, negate flag and thresholds.

    Returns:
        Grid whose row 0 is the bottom image row.
    """
    pixels = decode_pgm(pgm_bytes).astype(np.float64)
    prob = pixels / 255.0 if meta.negate else (255.0 - pixels) / 255.0
    cells = np.full(prob.shape, UNKNOWN, dtype=np.int8)
    cells[prob > meta.occupied_thresh] = OCCUPIED
    cells[prob < meta.free_thresh] = FREE
    origin = Pose2(*meta.origin)
    return OccupancyGrid(np.flipud(cells), meta.resolution, origin)


def grid_pixels(grid: OccupancyGrid) -> np.ndarray:
    """Trinary pixel raster (top row first) for a grid."""
    pixels = np.full(grid.shape, PIXEL_UNKNOWN, dtype=np.uint8)
    pixels[grid.occupied] = PIXEL_OCCUPIED
    pixels[grid.free] = PIXEL_FREE
    return np.flipud(pixels)


def save_ogm(grid: OccupancyGrid, image_name: str = "map.pgm") -> tuple[bytes, MapMetadata]:
    """Encode a grid as a P5 image plus metadata with default thresholds."""
    meta = MapMetadata(
        image=image_name,
        resolution=grid.resolution,
        origin=(grid.origin.x, grid.origin.y, grid.origin.theta),
        negate=0,
        occupied_thresh=0.65,
        free_thresh=0.196,
    )
    return encode_pgm(grid_pixels(grid)), meta


def parse_metadata(text: str) -> MapMetadata:
    """Validate map YAML text."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise MapFormatError(f"Invalid map YAML: {e}") from e
    if not isinstance(data, dict):
        raise MapFormatError("Map YAML must be a mapping")
    try:
        return MapMetadata.model_validate(data)
    except ValidationError as e:
        raise MapFormatError(f"Invalid map metadata: {e}") from e


def read_map(yaml_path: str | Path) -> OccupancyGrid:
    """Read a YAML + PGM map pair; ``image`` is resolved relative to the YAML file."""
    yaml_path = Path(yaml_path)
    meta = parse_metadata(yaml_path.read_text(encoding="utf-8"))
    image_path = Path(meta.image)
    if not image_path.is_absolute():
        image_path = yaml_path.parent / image_path
    grid = load_ogm(image_path.read_bytes(), meta)
    logger.info("Loaded map %s (%dx%d @ %.3f m)", yaml_path, grid.width, grid.height, grid.resolution)
    return grid


def write_map(grid: OccupancyGrid, yaml_path: str | Path, image_name: str | None = None) -> Path:
    """Write a YAML + PGM pair. The image sits next to the YAML file.

    Returns:
        Path of the written image.
    """
    yaml_path = Path(yaml_path)
    image_name = image_name or yaml_path.with_suffix(".pgm").name
    pgm, meta = save_ogm(grid, image_name)
    yaml_path.parent.mkdir(parents=True, exist_ok=True)
    image_path = yaml_path.parent / image_name
    image_path.write_bytes(pgm)
    yaml_path.write_text(yaml.safe_dump(meta.to_yaml_dict(), sort_keys=False), encoding="utf-8")
    logger.info("Wrote map %s", yaml_path)
    return image_path


# ========== Region classification ==========


def _require_same_frame(grids: list[OccupancyGrid]) -> None:
    first = grids[0]
    for g in grids[1:]:
        if not first.same_frame(g):
            raise MapDimensionError(
                f"grid frames differ: {first.shape}@{first.resolution} {first.origin} vs "
                f"{g.shape}@{g.resolution} {g.origin}"
            )


def exterior_mask(full: OccupancyGrid) -> np.ndarray:
    """Non-Occupied cells of ``full`` 4-connected to the grid border."""
    open_cells = ~full.occupied
    labels, _ = ndimage.label(open_cells, structure=FOUR_CONNECTED)
    border = np.concatenate([labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]])
    border_labels = np.unique(border[border > 0])
    return np.isin(labels, border_labels)


def classify_regions(structural: OccupancyGrid, full: OccupancyGrid) -> OccupancyGrid:
    """Split a structural slice into indoor (Free) and outdoor (Unknown).

    Args:
        structural: Slice of permanent elements.
        full: Slice that additionally holds doors, windows and spaces.

    Returns:
        ``structural`` with exterior cells Unknown and other non-Occupied cells Free.
    """
    _require_same_frame([structural, full])
    exterior = exterior_mask(full)
    cells = np.where(structural.occupied, OCCUPIED, np.where(exterior, UNKNOWN, FREE))
    logger.info(
        "Classified regions: %d free, %d unknown, %d occupied",
        int((cells == FREE).sum()),
        int((cells == UNKNOWN).sum()),
        int((cells == OCCUPIED).sum()),
    )
    return structural.with_cells(cells.astype(np.int8))


_RANK_OF = {int(UNKNOWN): 0, int(FREE): 1, int(OCCUPIED): 2}
_STATE_OF_RANK = np.array([UNKNOWN, FREE, OCCUPIED], dtype=np.int8)


def _ranks(grid: OccupancyGrid) -> np.ndarray:
    ranks = np.zeros(grid.shape, dtype=np.int8)
    ranks[grid.free] = _RANK_OF[int(FREE)]
    ranks[grid.occupied] = _RANK_OF[int(OCCUPIED)]
    return ranks


def merge_stories(grids: list[OccupancyGrid]) -> OccupancyGrid:
    """Cell-wise merge with precedence Occupied > Free > Unknown."""
    if not grids:
        raise MapDimensionError("merge_stories needs at least one grid")
    _require_same_frame(grids)
    merged = np.max(np.stack([_ranks(g) for g in grids]), axis=0)
    return grids[0].with_cells(_STATE_OF_RANK[merged])
