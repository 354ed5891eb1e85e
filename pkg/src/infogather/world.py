"""Scenario physics: unicycle robots, linear-Gaussian targets, range/bearing
sensors and the per-class energy cost field."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DegenerateGeometryError(ValueError):
    """Raised when a measurement is linearized at zero range."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


@dataclass(frozen=True)
class UnicycleState:
    x: float
    y: float
    theta: float = 0.0
    altitude: float = 0.0

    def __post_init__(self):
        if self.altitude < 0:
            raise ValueError("altitude must be non-negative")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.altitude])


@dataclass(frozen=True)
class MotionPrimitive:
    nu: float
    omega: float

    @property
    def is_stop(self) -> bool:
        return self.nu == 0.0 and self.omega == 0.0


def primitive_grid(speeds, rates) -> list[MotionPrimitive]:
    """Cross product of linear speeds and angular rates, in listed order."""
    return [MotionPrimitive(float(v), float(w)) for v in speeds for w in rates]


def step_unicycle(s: UnicycleState, u: MotionPrimitive, tau: float) -> UnicycleState:
    """Exact unicycle integration over ``tau`` seconds."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    # chord form of the arc: length nu*tau*sinc(w tau/2) along the mean
    # heading; stable as omega -> 0
    half = 0.5 * u.omega * tau
    chord = u.nu * tau * (math.sin(half) / half if half != 0.0 else 1.0)
    mid = s.theta + half
    x = s.x + chord * math.cos(mid)
    y = s.y + chord * math.sin(mid)
    return UnicycleState(x, y, s.theta + u.omega * tau, s.altitude)


def rollout(s0: UnicycleState, controls, tau: float) -> list[UnicycleState]:
    states = [s0]
    for u in controls:
        states.append(step_unicycle(states[-1], u, tau))
    return states


# --------------------------------------------------------------------------
# Targets


@dataclass
class TargetModel:
    """Linear-Gaussian motion model for one target (or a stacked joint state).

    ``pos_index`` gives the planar position entries inside the state vector.
    """

    A: np.ndarray
    W: np.ndarray
    pos_index: tuple[int, int] = (0, 1)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        if self.A.shape != self.W.shape or self.A.shape[0] != self.A.shape[1]:
            raise ValueError("A and W must be square with equal shape")
        if not np.allclose(self.W, self.W.T):
            raise ValueError("W must be symmetric")
        if np.linalg.eigvalsh(self.W).min() < -1e-12:
            raise ValueError("W must be positive semidefinite")

    @property
    def d_y(self) -> int:
        return self.A.shape[0]


def static_target(q: float = 0.0) -> TargetModel:
    return TargetModel(np.eye(2), q * np.eye(2))


def double_integrator_target(dt: float, q: float) -> TargetModel:
    """Discretized 2D double integrator, state (px, py, vx, vy), white
    acceleration noise with spectral density ``q``."""
    A = np.eye(4)
    A[0, 2] = A[1, 3] = dt
    blk = q * np.array([[dt**3 / 3, dt**2 / 2], [dt**2 / 2, dt]])
    W = np.zeros((4, 4))
    for ax in range(2):
        idx = [ax, ax + 2]
        W[np.ix_(idx, idx)] = blk
    return TargetModel(A, W)


def simulate_target_step(y, model: TargetModel, rng: np.random.Generator) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (model.d_y,):
        raise ValueError(f"state has shape {y.shape}, expected ({model.d_y},)")
    w = rng.multivariate_normal(np.zeros(model.d_y), model.W, method="eigh")
    return model.A @ y + w


# --------------------------------------------------------------------------
# Sensors

RANGE = "range"
BEARING = "bearing"
RANGE_BEARING = "range-bearing"

# std at zero distance, as a fraction of the std at max range
NOISE_FLOOR_FRACTION = 0.1


@dataclass(frozen=True)
class SensorModel:
    kind: str = RANGE_BEARING
    max_range: float = 15.0
    fov: float = 2.0 * math.pi
    range_std_max: float = 0.1
    bearing_std_max: float = math.radians(5.0)

    def __post_init__(self):
        if self.kind not in (RANGE, BEARING, RANGE_BEARING):
            raise ValueError(f"unknown sensor kind {self.kind!r}")
        if self.max_range <= 0 or self.fov <= 0:
            raise ValueError("max_range and fov must be positive")

    @property
    def d_z(self) -> int:
        return 2 if self.kind == RANGE_BEARING else 1

    def noise_std(self, dist: float) -> np.ndarray:
        scale = NOISE_FLOOR_FRACTION + (1.0 - NOISE_FLOOR_FRACTION) * min(dist / self.max_range, 1.0)
        stds = []
        if self.kind in (RANGE, RANGE_BEARING):
            stds.append(self.range_std_max * scale)
        if self.kind in (BEARING, RANGE_BEARING):
            stds.append(self.bearing_std_max * scale)
        return np.array(stds)

    def in_footprint(self, robot: UnicycleState, target_xy) -> bool:
        dx = target_xy[0] - robot.x
        dy = target_xy[1] - robot.y
        dist = math.sqrt(dx * dx + dy * dy + robot.altitude**2)
        if dist > self.max_range:
            return False
        if self.fov >= 2.0 * math.pi:
            return True
        if dx == 0.0 and dy == 0.0:
            return True
        return abs(wrap_angle(math.atan2(dy, dx) - robot.theta)) <= 0.5 * self.fov


def _geometry(robot: UnicycleState, target_xy):
    dx = float(target_xy[0]) - robot.x
    dy = float(target_xy[1]) - robot.y
    planar2 = dx * dx + dy * dy
    dist = math.sqrt(planar2 + robot.altitude**2)
    return dx, dy, planar2, dist


def measure(robot: UnicycleState, sensor: SensorModel, target_xy) -> np.ndarray:
    """Noise-free measurement of a target position."""
    dx, dy, _, dist = _geometry(robot, target_xy)
    z = []
    if sensor.kind in (RANGE, RANGE_BEARING):
        z.append(dist)
    if sensor.kind in (BEARING, RANGE_BEARING):
        z.append(math.atan2(dy, dx))
    return np.array(z)


def measurement_jacobian(robot: UnicycleState, sensor: SensorModel, target_xy) -> np.ndarray:
    """d_z x 2 Jacobian of the measurement with respect to target (px, py).

    Range is 3D (robot altitude over a ground target); bearing is planar.
    """
    dx, dy, planar2, dist = _geometry(robot, target_xy)
    rows = []
    if sensor.kind in (RANGE, RANGE_BEARING):
        if dist == 0.0:
            raise DegenerateGeometryError("target coincides with robot")
        rows.append([dx / dist, dy / dist])
    if sensor.kind in (BEARING, RANGE_BEARING):
        if planar2 == 0.0:
            raise DegenerateGeometryError("bearing undefined directly above target")
        rows.append([-dy / planar2, dx / planar2])
    return np.array(rows)


def sensor_info_matrix(
    robot: UnicycleState,
    sensor: SensorModel,
    target_mean,
    d_y: int = 2,
    pos_index: tuple[int, int] = (0, 1),
) -> np.ndarray:
    """Information matrix H^T V^-1 H of one target, linearized at ``target_mean``.

    Zero outside range or field of view.
    """
    target_mean = np.asarray(target_mean, dtype=float)
    if not np.all(np.isfinite(target_mean)):
        raise ValueError("target mean must be finite")
    xy = target_mean[list(pos_index)] if target_mean.size > 2 else target_mean
    M = np.zeros((d_y, d_y))
    if not sensor.in_footprint(robot, xy):
        return M
    Hxy = measurement_jacobian(robot, sensor, xy)
    _, _, _, dist = _geometry(robot, xy)
    inv_var = 1.0 / sensor.noise_std(dist) ** 2
    block = Hxy.T @ (inv_var[:, None] * Hxy)
    idx = list(pos_index)
    M[np.ix_(idx, idx)] = 0.5 * (block + block.T)
    return M


def stacked_info(
    robot: UnicycleState,
    sensor: SensorModel,
    means: np.ndarray,
    pos_index: tuple[int, int] = (0, 1),
) -> np.ndarray:
    """Per-target information blocks, shape (n_targets, d, d).

    Targets at degenerate geometry contribute nothing; this keeps planning
    total over arbitrary candidate states.
    """
    means = np.atleast_2d(means)
    n_t, d = means.shape
    out = np.zeros((n_t, d, d))
    for t in range(n_t):
        try:
            out[t] = sensor_info_matrix(robot, sensor, means[t], d, pos_index)
        except DegenerateGeometryError:
            pass
    return out


# --------------------------------------------------------------------------
# Energy

UGV = "ugv"
UAV = "uav"
MUD = "mud"
WIND = "wind"


@dataclass(frozen=True)
class Region:
    kind: str
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax


@dataclass(frozen=True)
class ControlCosts:
    """Control penalty by primitive type: stopped, turning in place, moving."""

    stop: float
    turn: float
    move: float

    def __call__(self, u: MotionPrimitive) -> float:
        if u.nu == 0.0:
            return self.stop if u.omega == 0.0 else self.turn
        return self.move

    @property
    def max(self) -> float:
        return max(self.stop, self.turn, self.move)


# per-class penalties for the heterogeneous ground/air team
CLASS_CONTROL_COSTS = {
    UGV: ControlCosts(stop=0.0, turn=1.0, move=2.0),
    UAV: ControlCosts(stop=2.0, turn=2.0, move=4.0),
}
CLASS_STATE_COSTS = {UGV: {MUD: 3.0}, UAV: {WIND: 3.0}}


@dataclass
class CostField:
    regions: list[Region] = field(default_factory=list)
    control_costs: dict = field(default_factory=lambda: dict(CLASS_CONTROL_COSTS))
    state_costs: dict = field(default_factory=lambda: {k: dict(v) for k, v in CLASS_STATE_COSTS.items()})

    def __post_init__(self):
        for c in self.control_costs.values():
            if min(c.stop, c.turn, c.move) < 0:
                raise ValueError("control penalties must be non-negative")
        for per in self.state_costs.values():
            if any(v < 0 for v in per.values()):
                raise ValueError("state penalties must be non-negative")

    def state_cost(self, robot_class: str, s: UnicycleState) -> float:
        table = self.state_costs.get(robot_class, {})
        cost = 0.0
        for kind, penalty in table.items():
            if any(r.kind == kind and r.contains(s.x, s.y) for r in self.regions):
                cost += penalty
        return cost

    def max_state_cost(self, robot_class: str) -> float:
        return float(sum(self.state_costs.get(robot_class, {}).values()))

    def control_cost(self, robot_class: str, u: MotionPrimitive) -> float:
        return self.control_costs[robot_class](u)

    def max_control_cost(self, robot_class: str) -> float:
        return self.control_costs[robot_class].max

    def c_max(self, robot_class: str, horizon: int) -> float:
        """Upper bound on the unweighted cost of a ``horizon``-step trajectory."""
        return horizon * (self.max_control_cost(robot_class) + self.max_state_cost(robot_class))


def trajectory_energy(
    sigma,
    states,
    field: CostField,
    robot_class: str = UGV,
    weight: float = 1.0,
) -> float:
    """Weighted energy m * sum_k (c_ctrl(u_k) + c_state(x_k)), k = 0..K-1."""
    sigma = list(sigma)
    states = list(states)[: len(sigma)]
    if len(states) != len(sigma):
        raise ValueError("need one state per control")
    total = 0.0
    for u, s in zip(sigma, states):
        total += field.control_cost(robot_class, u) + field.state_cost(robot_class, s)
    return weight * total
