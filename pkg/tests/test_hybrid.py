import math

import pytest

from src.libs.config import MCLSettings, PoseGraphSettings
from src.libs.coverage import wavefront_plan
from src.libs.geometry import Pose2
from src.libs.mapio import OccupancyGrid
from src.libs.models import ScanSpec
from src.libs.orchestrator import hybrid_localize
from src.libs.orchestrator.hybrid import PHASE_GBL, PHASE_MCL
from src.libs.posegraph import Lattice, PoseGraphMap, build_from_sequence
from src.libs.simulator import Sequence, drive, simulate_sequence, simulate_waypoint_scans
from src.libs.skeleton import CellMask

from .conftest import walled

LIDAR = ScanSpec(fov=math.radians(270.0), n_beams=181, range_max=10.0, rate=10.0, noise_sigma=0.0)


@pytest.fixture(scope="module")
def source() -> OccupancyGrid:
    cells = walled(40, 30)
    cells[5:12, 5:9] = 100
    return OccupancyGrid(cells, 0.1)


@pytest.fixture(scope="module")
def pgbm(source: OccupancyGrid) -> PoseGraphMap:
    path = wavefront_plan(source, CellMask(source.free, source), stride=25)
    seq = simulate_waypoint_scans(source, path, ScanSpec(fov=2 * math.pi, n_beams=360, noise_sigma=0.0))
    return build_from_sequence(seq, Lattice.from_grid(source), PoseGraphSettings(nodes_per_submap=10))


@pytest.fixture(scope="module")
def sequence(source: OccupancyGrid) -> Sequence:
    truth = drive([Pose2(2.0, 1.5, 0.0), Pose2(3.2, 1.5, 0.0), Pose2(3.2, 2.3, 0.0)], 10.0, 1.0, math.pi)
    return simulate_sequence(source, truth, LIDAR)


def test_handover_at_gate(source: OccupancyGrid, pgbm: PoseGraphMap, sequence: Sequence) -> None:
    cfg = MCLSettings(n_global=300, converge_threshold=100.0)
    result = hybrid_localize(source, pgbm, sequence, cfg, seed=1)
    assert not result.failed
    assert result.handover_index == 0
    assert result.handover_time == 0.0
    assert result.phases == [PHASE_GBL] * len(sequence)
    assert [e.stamp for e in result.estimates] == [s.stamp for s in sequence.scans]
    assert result.gbl is not None and len(result.mcl.estimates) == 1


def test_no_handover_without_convergence(source: OccupancyGrid, pgbm: PoseGraphMap, sequence: Sequence) -> None:
    cfg = MCLSettings(n_global=300, n_max=300, converge_threshold=0.0)
    result = hybrid_localize(source, pgbm, sequence, cfg, seed=1)
    assert result.failed
    assert result.gbl is None
    assert result.handover_time is None
    assert result.phases == [PHASE_MCL] * len(sequence)
    assert len(result.estimates) == len(sequence)
