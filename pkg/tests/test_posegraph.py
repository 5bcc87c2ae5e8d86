import json
import math

import numpy as np
import pytest

from src.libs.config import PoseGraphSettings
from src.libs.coverage import wavefront_plan
from src.libs.exceptions import PoseGraphError, PoseGraphFormatError, PoseGraphSchemaError
from src.libs.geometry import Pose2
from src.libs.mapio import OccupancyGrid
from src.libs.models import ScanSpec
from src.libs.posegraph import (ConstraintKind, Lattice, PoseGraphMap, Submap, build_from_sequence,
                                deserialize, is_connected, is_spd, observed_mask, occupied_iou,
                                rasterize_global, read_pgbm, serialize, write_pgbm)
from src.libs.posegraph.submap import dequantize, quantize
from src.libs.simulator import simulate_waypoint_scans
from src.libs.skeleton import CellMask

from .conftest import walled

SPEC = ScanSpec(fov=2 * math.pi, n_beams=360, range_max=10.0, noise_sigma=0.0)
PARAMS = PoseGraphSettings(nodes_per_submap=10)


@pytest.fixture(scope="module")
def source() -> OccupancyGrid:
    return OccupancyGrid(walled(40, 30), 0.1)


@pytest.fixture(scope="module")
def pgbm(source: OccupancyGrid) -> PoseGraphMap:
    path = wavefront_plan(source, CellMask(source.free, source), stride=25)
    seq = simulate_waypoint_scans(source, path, SPEC)
    return build_from_sequence(seq, Lattice.from_grid(source), PARAMS, "cfg")


def test_quantization_bounds() -> None:
    q = quantize(np.array([0.0, 0.5, 1.0]))
    assert q.tolist() == [26, 128, 230]
    assert dequantize(q)[1] == pytest.approx(128 / 255)


def test_single_scan_insert() -> None:
    lattice = Lattice(Pose2(), 0.1)
    submap = Submap(0, Pose2(), lattice)
    assert submap.is_empty
    ranges = np.array([0.95, math.inf])
    submap.insert(Pose2(0.05, 0.05, 0.0), ranges, np.array([0.0, math.pi / 2]), 0.7, 0.4)
    assert submap.offset == (0, 0)
    assert submap.shape == (1, 11)
    assert dequantize(submap.probabilities[0, 10]) == pytest.approx(0.7, abs=0.01)
    np.testing.assert_allclose(dequantize(submap.probabilities[0, :10]), 0.4, atol=0.01)
    assert submap.known.all()


def test_build_structure(pgbm: PoseGraphMap) -> None:
    n = len(pgbm.nodes)
    assert len(pgbm.submaps) == math.ceil(n / 10)
    to_submap = [c for c in pgbm.constraints if c.kind == ConstraintKind.NODE_TO_SUBMAP]
    to_node = [c for c in pgbm.constraints if c.kind == ConstraintKind.NODE_TO_NODE]
    assert len(to_submap) == n + max(0, n - 10)
    assert len(to_node) == n - 1
    assert is_connected(pgbm)
    assert pgbm.meta["config_hash"] == "cfg"
    assert pgbm.submaps[1].inserted_nodes[:10] == list(range(10, 20))


def test_constraints_are_consistent_with_poses(pgbm: PoseGraphMap) -> None:
    for c in pgbm.constraints:
        to = pgbm.node(c.to_id).pose
        base = pgbm.submap(c.from_id).origin if c.kind == ConstraintKind.NODE_TO_SUBMAP else pgbm.node(c.from_id).pose
        assert (base @ c.relative).is_close(to, 1e-9)
        assert is_spd(c.information)


def test_raster_matches_source(pgbm: PoseGraphMap, source: OccupancyGrid) -> None:
    raster = rasterize_global(pgbm, frame=source)
    assert raster.same_frame(source)
    observed = observed_mask(pgbm, source)
    assert observed[source.free].mean() > 0.9
    assert occupied_iou(raster, source, observed) > 0.95


def test_raster_default_frame(pgbm: PoseGraphMap) -> None:
    raster = rasterize_global(pgbm)
    assert raster.resolution == pgbm.lattice.resolution
    assert raster.occupied.any()
    coarse = rasterize_global(pgbm, resolution=0.2)
    assert coarse.width < raster.width


def test_empty_map_rasterizes_unknown() -> None:
    raster = rasterize_global(PoseGraphMap(Lattice(Pose2(), 0.1)))
    assert raster.shape == (1, 1)
    assert raster.unknown.all()


def test_occupied_iou_without_occupied_cells(source: OccupancyGrid) -> None:
    empty = source.with_cells(np.zeros(source.shape, dtype=np.int8))
    assert occupied_iou(empty, empty) == 1.0


def test_container_round_trip(tmp_path, pgbm: PoseGraphMap) -> None:
    path = tmp_path / "map.pgbm.json"
    write_pgbm(path, pgbm)
    assert read_pgbm(path) == pgbm
    assert serialize(deserialize(serialize(pgbm))) == serialize(pgbm)


def _document(pgbm: PoseGraphMap) -> dict:
    return json.loads(serialize(pgbm))


def test_unsupported_schema(pgbm: PoseGraphMap) -> None:
    doc = _document(pgbm)
    doc["pgbm_schema"] = 2
    with pytest.raises(PoseGraphSchemaError):
        deserialize(json.dumps(doc))


@pytest.mark.parametrize(
    "corrupt",
    [
        lambda d: d["submaps"][0].update(probabilities="***"),
        lambda d: d["submaps"][0].update(width=d["submaps"][0]["width"] + 1),
        lambda d: d["constraints"][0].update(information=[[1, 0, 0], [0, -1, 0], [0, 0, 1]]),
        lambda d: d["constraints"][0].update(to_id=10_000),
        lambda d: d["nodes"][0].update(ranges=[1.0]),
        lambda d: d.pop("lattice"),
    ],
)
def test_corrupt_container(pgbm: PoseGraphMap, corrupt) -> None:
    doc = _document(pgbm)
    corrupt(doc)
    with pytest.raises(PoseGraphFormatError):
        deserialize(json.dumps(doc))


def test_not_json() -> None:
    with pytest.raises(PoseGraphFormatError):
        deserialize(b"\x00garbage")


def test_is_spd() -> None:
    assert is_spd(np.diag([1.0, 2.0, 3.0]))
    assert not is_spd(np.diag([1.0, 0.0, 3.0]))
    assert not is_spd(np.array([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))


def test_build_rejects_empty_sequence(source: OccupancyGrid) -> None:
    path = wavefront_plan(source, CellMask(source.free, source), stride=1000)
    seq = simulate_waypoint_scans(source, path, SPEC)
    seq.scans.clear()
    with pytest.raises(PoseGraphError):
        build_from_sequence(seq, Lattice.from_grid(source))
