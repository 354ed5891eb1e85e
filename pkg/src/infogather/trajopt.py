"""Per-robot candidate trajectories from a pruned breadth-first search over
motion primitives."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimation import OracleContext, kf_predict, update_with_gain
from .world import (
    CostField,
    MotionPrimitive,
    SensorModel,
    UnicycleState,
    UGV,
    stacked_info,
    step_unicycle,
    trajectory_energy,
)


@dataclass
class RobotSpec:
    index: int
    robot_class: str
    start: UnicycleState
    primitives: list[MotionPrimitive]
    sensor: SensorModel
    weight: float = 1.0
    tau: float = 0.5
    c_max: float | None = None
    energy_model: str = "table"  # or "lqr"


@dataclass
class CandidateTrajectory:
    id: tuple
    controls: tuple
    states: list
    info: np.ndarray  # (K, n_t, d, d), sensing at steps 1..K
    mi: float
    energy: float  # already multiplied by the robot weight
    cost: float = 0.0  # unweighted

    @property
    def robot(self) -> int:
        return self.id[0]

    @property
    def standalone_gain(self) -> float:
        return self.mi - self.energy

    @property
    def is_stop(self) -> bool:
        return all(u.is_stop for u in self.controls)


@dataclass(frozen=True)
class PruneParams:
    epsilon: float = 0.0
    delta: float = 0.0
    cap: int = 100
    max_frontier: int | None = None

    def __post_init__(self):
        if self.epsilon < 0 or self.delta < 0:
            raise ValueError("epsilon and delta must be non-negative")
        if self.cap < 1:
            raise ValueError("cap must be >= 1")


@dataclass
class _Node:
    key: tuple
    state: UnicycleState
    cov: np.ndarray
    mi: float
    infos: list = field(default_factory=list)
    states: list = field(default_factory=list)


def _expand(node, u_idx, u, robot, ctx, means, depth):
    s = step_unicycle(node.state, u, robot.tau)
    P = kf_predict(node.cov, ctx.model.A, ctx.model.W)
    M = stacked_info(s, robot.sensor, means[depth], ctx.model.pos_index)
    if np.any(M):
        cov, gain = update_with_gain(P, M)
        mi = node.mi + float(np.sum(gain))
    else:
        cov, mi = P, node.mi
    return _Node(node.key + (u_idx,), s, cov, mi, node.infos + [M], node.states + [s])


def prune_layer(nodes, epsilon: float, delta: float):
    """Order nodes best-first and drop every node that has a better-ranked
    node closer than ``delta`` whose information is at most ``epsilon``
    higher. Ranking is by information, ties by control sequence."""
    nodes = sorted(nodes, key=lambda n: (-n.mi, n.key))
    if delta <= 0 or len(nodes) < 2:
        return nodes
    pos = np.array([[n.state.x, n.state.y] for n in nodes])
    mi = np.array([n.mi for n in nodes])
    keep = []
    for i in range(len(nodes)):
        if i:
            close = np.hypot(*(pos[:i] - pos[i]).T) < delta
            similar = mi[:i] - mi[i] <= epsilon
            if np.any(close & similar):
                continue
        keep.append(nodes[i])
    return keep


def _energy(robot: RobotSpec, controls, states, field: CostField) -> float:
    """Unweighted trajectory cost."""
    if robot.energy_model == "lqr":
        from .control import reference_plan_energy

        return reference_plan_energy(states, controls, robot.tau)
    return trajectory_energy(controls, states, field, robot.robot_class, 1.0)


def _finish(node, robot, field, index):
    controls = tuple(robot.primitives[i] for i in node.key)
    states = [robot.start] + node.states
    cost = _energy(robot, controls, states, field)
    return CandidateTrajectory(
        id=(robot.index, index),
        controls=controls,
        states=states,
        info=np.array(node.infos),
        mi=node.mi,
        energy=robot.weight * cost,
        cost=cost,
    )


def generate_candidates(
    robot: RobotSpec,
    ctx: OracleContext,
    horizon: int | None = None,
    params: PruneParams = PruneParams(),
    field: CostField | None = None,
) -> list[CandidateTrajectory]:
    """Candidate ground set of one robot, sorted by descending standalone gain.

    Index ``k`` of the returned list has id ``(robot.index, k)``.
    """
    T = ctx.horizon if horizon is None else horizon
    if T < 1:
        raise ValueError("horizon must be >= 1")
    if T != ctx.horizon:
        ctx = OracleContext(ctx.prior, ctx.model, T, ctx.omega)
    field = field or CostField()
    means = ctx.predicted_means()

    frontier = [_Node((), robot.start, ctx.prior.cov, 0.0)]
    for depth in range(T):
        children = [
            _expand(n, i, u, robot, ctx, means, depth)
            for n in frontier
            for i, u in enumerate(robot.primitives)
        ]
        frontier = prune_layer(children, params.epsilon, params.delta)
        if params.max_frontier is not None:
            frontier = frontier[: params.max_frontier]

    stop_idx = next((i for i, u in enumerate(robot.primitives) if u.is_stop), None)
    if stop_idx is not None and not any(set(n.key) == {stop_idx} for n in frontier):
        stop = _Node((), robot.start, ctx.prior.cov, 0.0)
        for depth in range(T):
            stop = _expand(stop, stop_idx, robot.primitives[stop_idx], robot, ctx, means, depth)
        frontier.append(stop)

    leaves = [_finish(n, robot, field, 0) for n in frontier]
    order = sorted(range(len(leaves)), key=lambda i: (-leaves[i].standalone_gain, frontier[i].key))
    chosen = order[: params.cap]
    if params.cap >= 2 and stop_idx is not None:
        stop_pos = next(i for i in order if set(frontier[i].key) == {stop_idx})
        if stop_pos not in chosen:
            chosen[-1] = stop_pos
    out = []
    for rank, i in enumerate(chosen):
        c = leaves[i]
        c.id = (robot.index, rank)
        out.append(c)
    return out
