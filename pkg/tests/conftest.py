import numpy as np
import pytest

from src.libs.geometry import Pose2
from src.libs.mapio import FREE, OCCUPIED, UNKNOWN, OccupancyGrid


def walled(width: int, height: int, thickness: int = 1) -> np.ndarray:
    """Free interior enclosed by an Occupied border."""
    cells = np.full((height, width), OCCUPIED, dtype=np.int8)
    cells[thickness:-thickness, thickness:-thickness] = FREE
    return cells


@pytest.fixture
def room() -> OccupancyGrid:
    """4 m x 3 m room at 10 cm with single-cell walls."""
    return OccupancyGrid(walled(40, 30), 0.1)


@pytest.fixture
def two_rooms() -> OccupancyGrid:
    """Two 3 m x 3 m rooms joined by a 0.8 m doorway in the dividing wall."""
    cells = walled(61, 30)
    cells[:, 30] = OCCUPIED
    cells[11:19, 30] = FREE
    return OccupancyGrid(cells, 0.1)


@pytest.fixture
def l_shape() -> OccupancyGrid:
    """An L-shaped floor with no rotational or mirror symmetry, padded with Unknown."""
    cells = np.full((50, 70), UNKNOWN, dtype=np.int8)
    cells[2:48, 2:68] = walled(66, 46)
    cells[25:47, 30:67] = OCCUPIED
    cells[10:14, 10:16] = OCCUPIED
    return OccupancyGrid(cells, 0.1, Pose2(-1.0, 0.5, 0.0))


@pytest.fixture
def tiny() -> OccupancyGrid:
    cells = np.array(
        [
            [100, 100, 100, 100],
            [100, 0, 0, 100],
            [100, 0, -1, 100],
            [100, 100, 100, 100],
        ],
        dtype=np.int8,
    )
    return OccupancyGrid(cells, 0.5)
