"""Scan-map deviation scenarios built from a structural base map.

Level 1 leaves the world identical to the base map. Level 2 adds furniture
along the walls. Level 3 adds more furniture, blocks doorways, breaches walls
and scatters debris. Each level has a static variant and one with walking
agents; both variants share the same world and trajectory.
"""

import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..config import ScenarioSettings, SkeletonSettings
from ..coverage import STEPS, WaypointPath, default_start, wavefront_labels, wavefront_plan
from ..exceptions import ScenarioError
from ..mapio import EIGHT_CONNECTED, FOUR_CONNECTED, FREE, OCCUPIED, OccupancyGrid, exterior_mask
from ..models import Agent
from ..skeleton import skeletonize

logger = logging.getLogger(__name__)

Cell = tuple[int, int]

LEVELS = {1: "empty", 2: "reality", 3: "disaster"}
SCENARIO_NAME = re.compile(r"^([123])-(agents|static)$")
# Cells between agent path vertices
AGENT_PATH_STRIDE = 5
# Deepest wall a breach may cut through, in meters
MAX_BREACH_DEPTH = 0.3


@dataclass(frozen=True)
class Doorway:
    cell: Cell
    clearance: float


@dataclass(frozen=True, eq=False)
class Scenario:
    """A world the robot drives in and the base map the localizers get."""

    name: str
    level: int
    base_grid: OccupancyGrid
    world_grid: OccupancyGrid
    agents: list[Agent]
    trajectory: WaypointPath
    removed_cells: list[Cell] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def scenario_name(level: int, agents: bool) -> str:
    return f"{level}-{'agents' if agents else 'static'}"


def parse_scenario_name(name: str) -> tuple[int, bool]:
    """``'2-agents'`` -> ``(2, True)``."""
    m = SCENARIO_NAME.match(name)
    if not m:
        raise ScenarioError(f"Unknown scenario '{name}'; expected <1|2|3>-<agents|static>")
    return int(m.group(1)), m.group(2) == "agents"


# ========== Map analysis ==========


def clearance(grid: OccupancyGrid) -> np.ndarray:
    """Distance in meters from each Free cell to the nearest non-Free cell; 0 elsewhere."""
    return ndimage.distance_transform_edt(grid.free) * grid.resolution


def find_doorways(grid: OccupancyGrid, max_door_width: float, max_iterations: int = 10_000) -> list[Doorway]:
    """Narrow skeleton passages joining wider space on both ends.

    A doorway is a cluster of skeleton cells whose clearance is at most half of
    ``max_door_width`` and that touches wider skeleton in at least two separate
    places; dead-end spurs into corners do not qualify. Each doorway is
    reported at its narrowest cell.
    """
    skeleton = skeletonize(grid, max_iterations).bits
    clear = clearance(grid)
    narrow = skeleton & (clear <= max_door_width / 2.0)
    wide = skeleton & ~narrow
    labels, n = ndimage.label(narrow, structure=EIGHT_CONNECTED)
    doors = []
    for k in range(1, n + 1):
        cluster = labels == k
        contact = ndimage.binary_dilation(cluster, structure=EIGHT_CONNECTED) & wide
        if ndimage.label(contact, structure=EIGHT_CONNECTED)[1] < 2:
            continue
        rows, cols = np.nonzero(cluster)
        i = int(np.argmin(clear[rows, cols]))
        doors.append(Doorway((int(cols[i]), int(rows[i])), float(clear[rows[i], cols[i]])))
    doors.sort(key=lambda d: (d.cell[1], d.cell[0]))
    logger.info("Found %d doorways", len(doors))
    return doors


def _free_components(cells: np.ndarray) -> int:
    return ndimage.label(cells == FREE, structure=FOUR_CONNECTED)[1]


def _square(shape: tuple[int, int], center: Cell, half: int) -> tuple[slice, slice]:
    c, r = center
    return slice(max(r - half, 0), min(r + half + 1, shape[0])), slice(max(c - half, 0), min(c + half + 1, shape[1]))


def _shifted(mask: np.ndarray, dc: int, dr: int) -> np.ndarray:
    """``out[r, c] = mask[r - dr, c - dc]`` with False outside."""
    out = np.zeros_like(mask)
    h, w = mask.shape
    out[max(dr, 0) : h + min(dr, 0), max(dc, 0) : w + min(dc, 0)] = mask[
        max(-dr, 0) : h + min(-dr, 0), max(-dc, 0) : w + min(-dc, 0)
    ]
    return out


# ========== Deviations ==========


def _wall_anchors(cells: np.ndarray, keep_clear: np.ndarray) -> list[tuple[int, int, int, int]]:
    """Free cells with an Occupied 4-neighbor as (col, row, d_col, d_row) toward the wall."""
    free = (cells == FREE) & ~keep_clear
    occupied = cells == OCCUPIED
    anchors = []
    for dc, dr in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        # wall at (c + dc, r + dr)
        rows, cols = np.nonzero(free & _shifted(occupied, -dc, -dr))
        anchors.extend((int(c), int(r), dc, dr) for c, r in zip(cols, rows))
    anchors.sort(key=lambda a: (a[1], a[0], a[2], a[3]))
    return anchors


def _furniture_rect(anchor: tuple[int, int, int, int], w: int, h: int) -> tuple[int, int, int, int]:
    """(c0, r0, c1, r1) inclusive rectangle touching the wall and extending away from it."""
    c, r, dc, dr = anchor
    if dc:
        c0 = c if dc < 0 else c - w + 1
        r0 = r - h // 2
    else:
        r0 = r if dr < 0 else r - h + 1
        c0 = c - w // 2
    return c0, r0, c0 + w - 1, r0 + h - 1


def add_furniture(
    cells: np.ndarray,
    resolution: float,
    target: int,
    size: tuple[float, float],
    rng: np.random.Generator,
    attempts: int,
    keep_clear: np.ndarray,
) -> int:
    """Place wall-adjacent rectangles into ``cells`` until ``target`` cells are Occupied.

    Placements that would split a Free region are rejected; the last piece is
    shortened so the target is not overshot by more than one row.

    Returns:
        Cells added.
    """
    added = 0
    components = _free_components(cells)
    anchors = _wall_anchors(cells, keep_clear)
    h_max, w_max = cells.shape
    for _ in range(attempts):
        if added >= target or not anchors:
            break
        anchor = anchors[int(rng.integers(len(anchors)))]
        w = max(1, int(math.ceil(rng.uniform(*size) / resolution)))
        h = max(1, int(math.ceil(rng.uniform(*size) / resolution)))
        remaining = target - added
        if w * h > remaining:
            if anchor[2]:
                h = max(1, int(math.ceil(remaining / w)))
            else:
                w = max(1, int(math.ceil(remaining / h)))
        c0, r0, c1, r1 = _furniture_rect(anchor, w, h)
        if c0 < 0 or r0 < 0 or c1 >= w_max or r1 >= h_max:
            continue
        block = (slice(r0, r1 + 1), slice(c0, c1 + 1))
        if not np.all(cells[block] == FREE) or keep_clear[block].any():
            continue
        cells[block] = OCCUPIED
        if _free_components(cells) > components:
            cells[block] = FREE
            continue
        added += (r1 - r0 + 1) * (c1 - c0 + 1)
        anchors = _wall_anchors(cells, keep_clear)
    return added


def block_doorways(cells: np.ndarray, resolution: float, doors: list[Doorway]) -> None:
    """Fill a square around each doorway's narrowest cell."""
    for door in doors:
        half = int(math.ceil(door.clearance / resolution)) + 1
        block = _square(cells.shape, door.cell, half)
        patch = cells[block]
        patch[patch == FREE] = OCCUPIED


def breach_walls(
    cells: np.ndarray, resolution: float, count: int, width: float, rng: np.random.Generator
) -> list[Cell]:
    """Open ``count`` squares through thin walls with Free cells on both sides.

    Returns:
        Cells turned from Occupied to Free, sorted.
    """
    occupied = cells == OCCUPIED
    free = cells == FREE
    depth = max(1, int(math.ceil(MAX_BREACH_DEPTH / resolution)))
    sides = {}
    for dc, dr in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        near = np.zeros_like(free)
        for s in range(1, depth + 1):
            near |= _shifted(free, -dc * s, -dr * s)
        sides[(dc, dr)] = near
    thin = occupied & ((sides[(-1, 0)] & sides[(1, 0)]) | (sides[(0, -1)] & sides[(0, 1)]))
    rows, cols = np.nonzero(thin)
    removed: set[Cell] = set()
    if not len(rows):
        if count:
            logger.warning("No thin wall to breach")
        return []
    half = max(1, int(round(width / (2.0 * resolution))))
    for k in rng.choice(len(rows), size=min(count, len(rows)), replace=False):
        block = _square(cells.shape, (int(cols[k]), int(rows[k])), half)
        patch = cells[block]
        hit = patch == OCCUPIED
        rr, cc = np.nonzero(hit)
        removed.update((int(c + block[1].start), int(r + block[0].start)) for r, c in zip(rr, cc))
        patch[hit] = FREE
    return sorted(removed, key=lambda cell: (cell[1], cell[0]))


def add_debris(
    cells: np.ndarray,
    resolution: float,
    count: int,
    size: tuple[float, float],
    rng: np.random.Generator,
    attempts: int,
) -> int:
    """Free-standing rectangles: each piece and a one-cell margin must be Free."""
    placed = 0
    rows, cols = np.nonzero(cells == FREE)
    if not len(rows):
        return 0
    for _ in range(attempts):
        if placed >= count:
            break
        k = int(rng.integers(len(rows)))
        w = max(1, int(math.ceil(rng.uniform(*size) / resolution)))
        h = max(1, int(math.ceil(rng.uniform(*size) / resolution)))
        c0, r0 = int(cols[k]), int(rows[k])
        if c0 < 1 or r0 < 1 or c0 + w >= cells.shape[1] or r0 + h >= cells.shape[0]:
            continue
        if not np.all(cells[r0 - 1 : r0 + h + 1, c0 - 1 : c0 + w + 1] == FREE):
            continue
        cells[r0 : r0 + h, c0 : c0 + w] = OCCUPIED
        placed += 1
    if placed < count:
        logger.warning("Placed %d of %d debris pieces", placed, count)
    return placed


# ========== Trajectory and agents ==========


def scenario_trajectory(world: OccupancyGrid, stride: int, max_iterations: int = 10_000) -> WaypointPath:
    """Coverage plan over the skeleton of the world's Free space."""
    skeleton = skeletonize(world, max_iterations)
    if skeleton.count == 0:
        raise ScenarioError("Scenario world has no Free cell to drive through")
    return wavefront_plan(world, skeleton, default_start(skeleton), stride)


def _descend(labels: np.ndarray, start: Cell) -> list[Cell]:
    """Cells from ``start`` down the wavefront labels to the label-0 cell."""
    h, w = labels.shape
    path = [start]
    c, r = start
    while labels[r, c] > 0:
        for dc, dr in STEPS:
            nc, nr = c + dc, r + dr
            if 0 <= nc < w and 0 <= nr < h and labels[nr, nc] == labels[r, c] - 1:
                c, r = nc, nr
                break
        path.append((c, r))
    return path


def make_agents(
    world: OccupancyGrid,
    doors: list[Doorway],
    count: int,
    speed: float,
    radius: float,
    rng: np.random.Generator,
    attempts: int = 100,
    toward_exterior: bool = False,
) -> list[Agent]:
    """Agents walking from random starts to a doorway and back, looping.

    Each agent heads for the doorway nearest its start, or with
    ``toward_exterior`` for the doorway nearest the outside of the building.
    Without doorways agents walk to a random reachable cell.
    """
    if count == 0:
        return []
    walkable = clearance(world) >= radius
    rows, cols = np.nonzero(walkable)
    if not len(rows):
        logger.warning("No cell has %.2f m clearance; scenario gets no agents", radius)
        return []

    def nearest_walkable(cell: Cell) -> Cell:
        i = int(np.argmin((cols - cell[0]) ** 2 + (rows - cell[1]) ** 2))
        return int(cols[i]), int(rows[i])

    targets = [nearest_walkable(d.cell) for d in doors]
    if toward_exterior and doors:
        outside = exterior_mask(world)
        if outside.any():
            to_outside = ndimage.distance_transform_edt(~outside)
            best = min(range(len(doors)), key=lambda k: to_outside[doors[k].cell[1], doors[k].cell[0]])
            targets = [targets[best]]

    agents = []
    label_cache: dict[Cell, np.ndarray] = {}
    for _ in range(count * attempts):
        if len(agents) == count:
            break
        k = int(rng.integers(len(rows)))
        start = (int(cols[k]), int(rows[k]))
        if targets:
            target = min(targets, key=lambda t: ((t[0] - start[0]) ** 2 + (t[1] - start[1]) ** 2, t))
        else:
            j = int(rng.integers(len(rows)))
            target = (int(cols[j]), int(rows[j]))
        if target not in label_cache:
            label_cache[target] = wavefront_labels(walkable, target)
        labels = label_cache[target]
        if labels[start[1], start[0]] < 0:
            continue
        cells = _descend(labels, start)
        picked = cells[::AGENT_PATH_STRIDE]
        if picked[-1] != cells[-1]:
            picked.append(cells[-1])
        points = world.cells_to_world(np.array([c for c, _ in picked]), np.array([r for _, r in picked]))
        there = [(float(x), float(y)) for x, y in points]
        agents.append(Agent(path=there + there[-2::-1], speed=speed, radius=radius, loop=True))
    if len(agents) < count:
        logger.warning("Placed %d of %d agents", len(agents), count)
    return agents


# ========== Scenarios ==========


def _level_world(
    base: OccupancyGrid, level: int, params: ScenarioSettings, doors: list[Doorway], rng: np.random.Generator
) -> tuple[np.ndarray, list[Cell], dict]:
    cells = base.cells.copy()
    removed: list[Cell] = []
    meta: dict = {"level": level, "kind": LEVELS[level], "doorways": len(doors)}
    if level == 1:
        return cells, removed, meta

    res = base.resolution
    free_count = int(base.free.sum())
    fraction = params.clutter_reality if level == 2 else params.clutter_disaster
    keep_clear = np.zeros(cells.shape, dtype=bool)
    open_doors = list(doors)

    if level == 3:
        n_block = min(params.n_blocked, len(doors))
        if n_block < params.n_blocked:
            logger.warning("Only %d doorways to block, %d requested", len(doors), params.n_blocked)
        picked = sorted(int(i) for i in rng.choice(len(doors), size=n_block, replace=False)) if n_block else []
        block_doorways(cells, res, [doors[i] for i in picked])
        open_doors = [d for i, d in enumerate(doors) if i not in picked]
        removed = breach_walls(cells, res, params.n_breaches, params.breach_width, rng)
        meta["blocked_doorways"] = [list(doors[i].cell) for i in picked]
        meta["breached_cells"] = len(removed)

    door_half = int(math.ceil(params.max_door_width / res))
    for door in open_doors:
        keep_clear[_square(cells.shape, door.cell, door_half)] = True

    target = int(round(fraction * free_count))
    added = add_furniture(cells, res, target, params.furniture_size, rng, params.placement_attempts, keep_clear)
    achieved = added / free_count if free_count else 0.0
    meta.update(clutter_target=fraction, clutter_achieved=achieved)
    if added < target:
        logger.warning(
            "Clutter budget exhausted at %.1f%% of Free cells (target %.1f%%)", 100 * achieved, 100 * fraction
        )
        meta["clutter_exhausted"] = True

    if level == 3:
        meta["debris"] = add_debris(cells, res, params.n_debris, params.debris_size, rng, params.placement_attempts)
    return cells, removed, meta


def make_scenario(
    base: OccupancyGrid,
    name: str,
    params: ScenarioSettings | None = None,
    seed: int = 0,
    skeleton: SkeletonSettings | None = None,
    doors: list[Doorway] | None = None,
) -> Scenario:
    """Build one scenario, e.g. ``'2-agents'``.

    The world and trajectory of a level depend only on ``seed`` and the level,
    so the static and agent variants of a level share them.
    """
    params = params or ScenarioSettings()
    skeleton = skeleton or SkeletonSettings()
    level, with_agents = parse_scenario_name(name)
    if not base.free.any():
        raise ScenarioError("Base map has no Free cell")
    if doors is None:
        doors = find_doorways(base, params.max_door_width, skeleton.max_iterations)

    level_seed = np.random.SeedSequence(seed).spawn(3)[level - 1]
    world_seed, agent_seed = level_seed.spawn(2)
    cells, removed, meta = _level_world(base, level, params, doors, np.random.default_rng(world_seed))
    world = base.with_cells(cells)
    trajectory = scenario_trajectory(world, params.trajectory_stride, skeleton.max_iterations)

    agents: list[Agent] = []
    if with_agents:
        disaster = level == 3
        world_doors = [d for d in doors if world.free[d.cell[1], d.cell[0]]]
        agents = make_agents(
            world,
            world_doors,
            params.n_agents_disaster if disaster else params.n_agents,
            params.agent_speed * (params.disaster_speed_factor if disaster else 1.0),
            params.agent_radius,
            np.random.default_rng(agent_seed),
            toward_exterior=disaster,
        )
    meta.update(seed=seed, agents=len(agents), waypoints=len(trajectory))
    logger.info("Scenario %s: %d waypoints, %d agents", name, len(trajectory), len(agents))
    return Scenario(name, level, base, world, agents, trajectory, removed, meta)


def make_scenarios(
    base: OccupancyGrid,
    params: ScenarioSettings | None = None,
    seed: int = 0,
    skeleton: SkeletonSettings | None = None,
) -> dict[str, Scenario]:
    """All six scenarios keyed by name: levels 1-3, static and with agents."""
    params = params or ScenarioSettings()
    skeleton = skeleton or SkeletonSettings()
    if not base.free.any():
        raise ScenarioError("Base map has no Free cell")
    doors = find_doorways(base, params.max_door_width, skeleton.max_iterations)
    return {
        scenario_name(level, agents): make_scenario(
            base, scenario_name(level, agents), params, seed, skeleton, doors
        )
        for level in LEVELS
        for agents in (False, True)
    }
