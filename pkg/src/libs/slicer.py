"""Slice a prism-based building model into occupancy grids."""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import ValidationError
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.transform import Rotation

from .exceptions import BuildingModelError, SlicerError
from .geometry import Pose2, polygon_is_convex, triangulate
from .mapio import FREE, OCCUPIED, OccupancyGrid, classify_regions, merge_stories
from .models import BuildingElement, BuildingModel, ElementClass

logger = logging.getLogger(__name__)

REFERENCE_POST_PREFIX = "__reference_post"


@dataclass(frozen=True)
class SliceResult:
    """Grids produced by one cut."""

    structural: OccupancyGrid
    full: OccupancyGrid
    empty: bool = False
    sliced_ids: list[str] = field(default_factory=list)


# ========== Model loading ==========


def parse_building_model(text: str) -> BuildingModel:
    """Validate a building model JSON document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise BuildingModelError(f"Invalid building model JSON: {e}") from e
    try:
        return BuildingModel.model_validate(data)
    except ValidationError as e:
        raise BuildingModelError(f"Invalid building model: {e}") from e


def load_building_model(path: str | Path) -> BuildingModel:
    return parse_building_model(Path(path).read_text(encoding="utf-8"))


# ========== Geometry ==========


def _prism_vertices(element: BuildingElement) -> tuple[np.ndarray, np.ndarray]:
    fp = np.asarray(element.footprint, dtype=float)
    bottom = np.column_stack([fp, np.full(len(fp), element.z_min)])
    top = np.column_stack([fp, np.full(len(fp), element.z_max)])
    return bottom, top


def model_bounds(model: BuildingModel) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned 3D bounds of all element vertices before rotation."""
    points = np.vstack([np.vstack(_prism_vertices(e)) for e in model.elements])
    return points.min(axis=0), points.max(axis=0)


class ModelFrame:
    """Rotation of a model about the center of its bounding box."""

    def __init__(self, model: BuildingModel):
        if not model.elements:
            raise SlicerError("Building model has no elements")
        w, x, y, z = model.rotation
        self.matrix = Rotation.from_quat([x, y, z, w]).as_matrix()
        lo, hi = model_bounds(model)
        self.pivot = (lo + hi) / 2.0
        self.identity = bool(np.allclose(self.matrix, np.eye(3), atol=0.0, rtol=0.0))

    def apply(self, points: np.ndarray) -> np.ndarray:
        if self.identity:
            return points
        return (points - self.pivot) @ self.matrix.T + self.pivot


def _convex_section(bottom: np.ndarray, top: np.ndarray, height: float) -> np.ndarray | None:
    """Cross-section of a convex prism with the plane z = height.

    Args:
        bottom, top: (n, 3) rotated vertex rings.

    Returns:
        Counter-clockwise polygon vertices (m, 2), or None if the plane misses
        the prism or touches it in fewer than three non-collinear points.
    """
    n = len(bottom)
    edges = [(bottom[i], bottom[(i + 1) % n]) for i in range(n)]
    edges += [(top[i], top[(i + 1) % n]) for i in range(n)]
    edges += [(bottom[i], top[i]) for i in range(n)]

    points = []
    for a, b in edges:
        da, db = a[2] - height, b[2] - height
        if da == 0.0:
            points.append(a[:2])
        if db == 0.0:
            points.append(b[:2])
        if da * db < 0.0:
            t = da / (da - db)
            points.append(a[:2] + t * (b[:2] - a[:2]))
    if len(points) < 3:
        return None
    pts = np.unique(np.round(np.asarray(points), 12), axis=0)
    if len(pts) < 3:
        return None
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return None
    return pts[hull.vertices]


def element_sections(element: BuildingElement, frame: ModelFrame, height: float) -> list[np.ndarray]:
    """Convex polygons whose union is the element's cross-section at ``height``."""
    footprint = np.asarray(element.footprint, dtype=float)
    if frame.identity:
        if not element.z_min <= height <= element.z_max:
            return []
        if polygon_is_convex(footprint):
            return [footprint]
        return triangulate(footprint)

    pieces = [footprint] if polygon_is_convex(footprint) else triangulate(footprint)
    sections = []
    for piece in pieces:
        bottom = np.column_stack([piece, np.full(len(piece), element.z_min)])
        top = np.column_stack([piece, np.full(len(piece), element.z_max)])
        section = _convex_section(frame.apply(bottom), frame.apply(top), height)
        if section is not None:
            sections.append(section)
    return sections


def rasterize_convex(cells: np.ndarray, polygon: np.ndarray, origin: np.ndarray, resolution: float) -> int:
    """Mark cells whose center lies inside (or on) a convex polygon as Occupied.

    Returns:
        Number of cells marked.
    """
    poly = np.asarray(polygon, dtype=float)
    if len(poly) < 3:
        return 0
    area2 = np.sum(poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1])
    if area2 < 0:
        poly = poly[::-1]
    height, width = cells.shape
    lo = np.floor((poly.min(axis=0) - origin) / resolution - 0.5).astype(int)
    hi = np.ceil((poly.max(axis=0) - origin) / resolution - 0.5).astype(int)
    c0, r0 = max(lo[0], 0), max(lo[1], 0)
    c1, r1 = min(hi[0], width - 1), min(hi[1], height - 1)
    if c0 > c1 or r0 > r1:
        return 0

    cols = np.arange(c0, c1 + 1)
    rows = np.arange(r0, r1 + 1)
    cx = origin[0] + (cols + 0.5) * resolution
    cy = origin[1] + (rows + 0.5) * resolution
    px, py = np.meshgrid(cx, cy)
    inside = np.ones(px.shape, dtype=bool)
    scale = max(1.0, float(np.abs(poly).max()))
    eps = 1e-9 * scale * scale
    for i in range(len(poly)):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % len(poly)]
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        inside &= cross >= -eps
    block = cells[r0 : r1 + 1, c0 : c1 + 1]
    block[inside] = OCCUPIED
    return int(inside.sum())


def grid_extent(model: BuildingModel, frame: ModelFrame, resolution: float) -> tuple[np.ndarray, int, int]:
    """Origin and size of the grid covering all rotated geometry plus one cell of padding."""
    points = np.vstack([frame.apply(np.vstack(_prism_vertices(e))) for e in model.elements])
    lo = points[:, :2].min(axis=0)
    hi = points[:, :2].max(axis=0)
    span = hi - lo
    width = int(math.ceil(span[0] / resolution - 1e-9)) + 2
    height = int(math.ceil(span[1] / resolution - 1e-9)) + 2
    return lo - resolution, width, height


# ========== Operations ==========


def slice_model(model: BuildingModel, cut_height: float, resolution: float) -> SliceResult:
    """Cut a building model at ``cut_height`` into structural and full grids.

    Args:
        model: Building model; its rotation is applied before cutting.
        cut_height: Plane elevation in meters, after rotation.
        resolution: Cell size in meters.

    Returns:
        Both grids share a frame. Non-Occupied cells are Free; the ``empty``
        flag is set when the plane misses every element.
    """
    if not resolution > 0:
        raise SlicerError(f"resolution must be positive, got {resolution}")
    frame = ModelFrame(model)
    origin, width, height = grid_extent(model, frame, resolution)
    structural = np.full((height, width), FREE, dtype=np.int8)
    full = np.full((height, width), FREE, dtype=np.int8)

    sliced: list[str] = []
    for element in model.elements:
        sections = element_sections(element, frame, cut_height)
        if not sections:
            continue
        sliced.append(element.id)
        for polygon in sections:
            rasterize_convex(full, polygon, origin, resolution)
            if element.is_structural:
                rasterize_convex(structural, polygon, origin, resolution)

    grid_origin = Pose2(float(origin[0]), float(origin[1]), 0.0)
    result = SliceResult(
        structural=OccupancyGrid(structural, resolution, grid_origin),
        full=OccupancyGrid(full, resolution, grid_origin),
        empty=not sliced,
        sliced_ids=sliced,
    )
    if result.empty:
        logger.warning("Cut plane z=%.3f misses all %d elements", cut_height, len(model.elements))
    else:
        logger.info(
            "Sliced %d/%d elements at z=%.3f into %dx%d grid",
            len(sliced),
            len(model.elements),
            cut_height,
            width,
            height,
        )
    return result


def add_reference_frame(model: BuildingModel, post_size: float = 0.05) -> BuildingModel:
    """Add four corner posts spanning the model's full height.

    Posts sit inside the corners of the bounding box, so repeated calls keep
    the extent unchanged.
    """
    if not model.elements:
        raise SlicerError("Building model has no elements")
    lo, hi = model_bounds(model)
    s = min(post_size, float(hi[0] - lo[0]), float(hi[1] - lo[1]))
    existing = sum(1 for e in model.elements if e.id.startswith(REFERENCE_POST_PREFIX))
    batch = existing // 4
    corners = [(lo[0], lo[1]), (hi[0] - s, lo[1]), (hi[0] - s, hi[1] - s), (lo[0], hi[1] - s)]
    posts = [
        BuildingElement(
            id=f"{REFERENCE_POST_PREFIX}_{batch}_{i}",
            element_class=ElementClass.OTHER,
            footprint=[(x, y), (x + s, y), (x + s, y + s), (x, y + s)],
            z_min=float(lo[2]),
            z_max=float(hi[2]),
        )
        for i, (x, y) in enumerate(corners)
    ]
    return model.model_copy(update={"elements": [*model.elements, *posts]})


def slice_stories(
    model: BuildingModel,
    cut_heights: list[float],
    resolution: float,
    reference_frame: bool = False,
    post_size: float | None = None,
) -> OccupancyGrid:
    """Slice each story, classify indoor/outdoor per story and merge.

    Args:
        model: Building model.
        cut_heights: One cut elevation per story.
        resolution: Cell size in meters.
        reference_frame: Add corner posts before slicing.
        post_size: Post edge length (one cell when omitted).
    """
    if not cut_heights:
        raise SlicerError("slice_stories needs at least one cut height")
    if reference_frame:
        model = add_reference_frame(model, post_size or resolution)
    stories = []
    for h in cut_heights:
        result = slice_model(model, h, resolution)
        stories.append(classify_regions(result.structural, result.full))
    return merge_stories(stories)
