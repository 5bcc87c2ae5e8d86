"""Sliding-window pose optimization with Levenberg-Marquardt."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..config import GBLSettings
from ..exceptions import LocalizationError
from ..geometry import Pose2, normalize_angle, normalize_angles

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class WindowConstraint:
    """Measured ``from⁻¹ ∘ to`` between two window nodes, or between a fixed
    ``anchor`` pose and a node when ``from_id`` is None.

    Matches anchor at a prior-map submap origin; priors anchor at the identity.
    """

    kind: str
    from_id: int | None
    to_id: int
    relative: Pose2
    information: np.ndarray
    anchor: Pose2 = Pose2()

    @classmethod
    def between_nodes(cls, from_id: int, to_id: int, relative: Pose2, information: np.ndarray) -> "WindowConstraint":
        return cls("odometry", from_id, to_id, relative, np.asarray(information, dtype=float))

    @classmethod
    def anchored(
        cls, anchor: Pose2, to_id: int, relative: Pose2, information: np.ndarray, kind: str = "match"
    ) -> "WindowConstraint":
        return cls(kind, None, to_id, relative, np.asarray(information, dtype=float), anchor)

    @classmethod
    def prior(cls, node_id: int, pose: Pose2, information: np.ndarray) -> "WindowConstraint":
        return cls.anchored(Pose2(), node_id, pose, information, kind="prior")


@dataclass
class WindowNode:
    id: int
    stamp: float
    pose: Pose2


@dataclass
class WindowState:
    """Recent nodes and the constraints between them and the prior map."""

    size: int = 10
    nodes: list[WindowNode] = field(default_factory=list)
    constraints: list[WindowConstraint] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def ids(self) -> set[int]:
        return {n.id for n in self.nodes}

    @property
    def newest(self) -> WindowNode:
        return self.nodes[-1]

    def add_node(self, node_id: int, stamp: float, pose: Pose2) -> None:
        if node_id in self.ids:
            raise LocalizationError(f"Node {node_id} is already in the window")
        self.nodes.append(WindowNode(node_id, stamp, pose))

    def add_constraint(self, constraint: WindowConstraint) -> None:
        ids = self.ids
        if constraint.to_id not in ids or (constraint.from_id is not None and constraint.from_id not in ids):
            raise LocalizationError(f"Constraint references a node outside the window: {constraint}")
        self.constraints.append(constraint)

    def slide(self, prior_info: np.ndarray) -> None:
        """Drop the oldest nodes beyond ``size``; each new oldest node gets a prior at its estimate."""
        while len(self.nodes) > self.size:
            dropped = self.nodes.pop(0)
            self.constraints = [
                c for c in self.constraints if c.to_id != dropped.id and c.from_id != dropped.id
            ]
            oldest = self.nodes[0]
            self.constraints.append(WindowConstraint.prior(oldest.id, oldest.pose, prior_info))

    def poses(self) -> list[Pose2]:
        return [n.pose for n in self.nodes]

    def set_poses(self, poses: list[Pose2]) -> None:
        for node, pose in zip(self.nodes, poses):
            node.pose = pose


@dataclass
class OptimizationResult:
    poses: list[Pose2]
    cost_before: float
    cost_after: float
    iterations: int
    singular: bool = False
    costs: list[float] = field(default_factory=list)


# ========== Residuals ==========


def _residual(a: np.ndarray, b: np.ndarray, meas: np.ndarray) -> np.ndarray:
    """Current ``a⁻¹ ∘ b`` minus the measurement, angle wrapped."""
    c, s = math.cos(a[2]), math.sin(a[2])
    dx, dy = b[0] - a[0], b[1] - a[1]
    return np.array(
        [
            c * dx + s * dy - meas[0],
            -s * dx + c * dy - meas[1],
            normalize_angle(b[2] - a[2] - meas[2]),
        ]
    )


def _jacobians(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of the residual with respect to ``a`` and ``b``."""
    c, s = math.cos(a[2]), math.sin(a[2])
    dx, dy = b[0] - a[0], b[1] - a[1]
    ja = np.array(
        [
            [-c, -s, -s * dx + c * dy],
            [s, -c, -c * dx - s * dy],
            [0.0, 0.0, -1.0],
        ]
    )
    jb = np.array(
        [
            [c, s, 0.0],
            [-s, c, 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    return ja, jb


class _Problem:
    def __init__(self, state: WindowState):
        self.index = {n.id: i for i, n in enumerate(state.nodes)}
        self.constraints = state.constraints
        self.measurements = [c.relative.as_array() for c in state.constraints]
        self.anchors = [c.anchor.as_array() for c in state.constraints]

    def _ends(self, x: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, int | None, int]:
        c = self.constraints[k]
        j = self.index[c.to_id]
        if c.from_id is None:
            return self.anchors[k], x[3 * j : 3 * j + 3], None, j
        i = self.index[c.from_id]
        return x[3 * i : 3 * i + 3], x[3 * j : 3 * j + 3], i, j

    def cost(self, x: np.ndarray) -> float:
        total = 0.0
        for k, c in enumerate(self.constraints):
            a, b, _, _ = self._ends(x, k)
            r = _residual(a, b, self.measurements[k])
            total += float(r @ c.information @ r)
        return total

    def normal_equations(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = len(x)
        hessian = np.zeros((n, n))
        gradient = np.zeros(n)
        for k, c in enumerate(self.constraints):
            a, b, i, j = self._ends(x, k)
            r = _residual(a, b, self.measurements[k])
            ja, jb = _jacobians(a, b)
            info = c.information
            blocks = [(j, jb)] if i is None else [(i, ja), (j, jb)]
            for p, jp in blocks:
                gradient[3 * p : 3 * p + 3] += jp.T @ info @ r
                for q, jq in blocks:
                    hessian[3 * p : 3 * p + 3, 3 * q : 3 * q + 3] += jp.T @ info @ jq
        return hessian, gradient


def _wrap(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    x[2::3] = normalize_angles(x[2::3])
    return x


# ========== Levenberg-Marquardt ==========


def optimize_window(state: WindowState, cfg: GBLSettings | None = None) -> OptimizationResult:
    """Minimize the information-weighted squared residuals of the window.

    Anchor poses (prior-map submap origins) stay fixed. Damping starts at
    ``lm_lambda0``, grows tenfold on a rejected step and shrinks tenfold on an
    accepted one; accepted steps never increase the cost. Iteration stops on a
    small relative cost change, a small step, or the iteration cap. If no step
    can be solved before the damping ceiling the current poses are returned
    with ``singular`` set.

    Args:
        state: Window nodes (initial estimates) and constraints.
        cfg: Damping and termination parameters.

    Returns:
        Refined poses in window order plus cost bookkeeping. ``state`` is not
        modified.
    """
    cfg = cfg or GBLSettings()
    if not state.constraints:
        raise LocalizationError("optimize_window needs at least one constraint")
    problem = _Problem(state)
    x = np.concatenate([p.as_array() for p in state.poses()])
    cost = problem.cost(x)
    result = OptimizationResult(poses=state.poses(), cost_before=cost, cost_after=cost, iterations=0, costs=[cost])
    lam = cfg.lm_lambda0
    eye = np.eye(len(x))

    for iteration in range(cfg.lm_max_iterations):
        if cost == 0.0:
            break
        hessian, gradient = problem.normal_equations(x)
        accepted = False
        solved = False
        while lam <= cfg.lm_lambda_max:
            try:
                dx = np.linalg.solve(hessian + lam * eye, -gradient)
            except np.linalg.LinAlgError:
                dx = None
            if dx is not None and np.all(np.isfinite(dx)):
                solved = True
                x_new = _wrap(x + dx)
                new_cost = problem.cost(x_new)
                if new_cost <= cost:
                    accepted = True
                    lam = max(lam * 0.1, 1e-12)
                    break
            lam *= 10.0
        result.iterations = iteration + 1
        if not accepted:
            if not solved:
                result.singular = True
                logger.warning("Window normal equations singular at damping %.1e", lam)
            break
        change = (cost - new_cost) / cost
        x, cost = x_new, new_cost
        result.costs.append(cost)
        logger.debug("LM iteration %d: cost %.6g, lambda %.1e", iteration + 1, cost, lam)
        if change < cfg.lm_rel_tol or float(np.max(np.abs(dx))) < cfg.lm_step_tol:
            break

    result.poses = [Pose2.from_array(x[3 * i : 3 * i + 3]) for i in range(len(state.nodes))]
    result.cost_after = cost
    return result
