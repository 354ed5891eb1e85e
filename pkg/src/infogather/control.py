"""Continuous-time tracking layer for integrator robots.

Fixed-final-state LQR between planner waypoints, exponential barrier rows
for pairwise collision avoidance split between the two robots of each pair,
and the weighted safety QP that filters the nominal control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import qp as qpsolver
from .world import MotionPrimitive, UnicycleState

HORIZON_FLOOR = 1e-3
DIM = 3


class SingularHorizonError(ValueError):
    """Gramian requested at or after the segment end."""


_I3 = np.eye(DIM)


def _kron3(M) -> np.ndarray:
    """kron(M, I3) without the generic np.kron overhead."""
    M = np.asarray(M, float)
    a, b = M.shape
    return (M[:, None, :, None] * _I3[None, :, None, :]).reshape(a * DIM, b * DIM)


@lru_cache(maxsize=8)
def _system(order: int):
    F = np.eye(order, k=1)
    G = np.zeros((order, 1))
    G[-1, 0] = 1.0
    A, B = _kron3(F), _kron3(G)
    A.flags.writeable = False
    B.flags.writeable = False
    return A, B


# --------------------------------------------------------------------------
# integrator models


@dataclass(frozen=True)
class IntegratorSpec:
    order: int = 2

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("integrator order must be >= 1")

    @property
    def state_dim(self) -> int:
        return DIM * self.order

    @property
    def F(self) -> np.ndarray:
        return np.eye(self.order, k=1)

    @property
    def G(self) -> np.ndarray:
        g = np.zeros((self.order, 1))
        g[-1, 0] = 1.0
        return g

    @property
    def A(self) -> np.ndarray:
        return _system(self.order)[0]

    @property
    def B(self) -> np.ndarray:
        return _system(self.order)[1]

    def transition(self, dt: float) -> np.ndarray:
        """exp(A dt); the series terminates because A is nilpotent."""
        r = self.order
        Phi = np.zeros((r, r))
        for a in range(r):
            for b in range(a, r):
                Phi[a, b] = dt ** (b - a) / math.factorial(b - a)
        return _kron3(Phi)

    def input_response(self, dt: float) -> np.ndarray:
        """exp(A dt) B."""
        r = self.order
        g = np.array([dt ** (r - 1 - a) / math.factorial(r - 1 - a) for a in range(r)])
        return _kron3(g[:, None])

    def step(self, x, u, dt: float) -> np.ndarray:
        """Exact zero-order-hold step (matches RK4 for polynomial flows)."""
        x = np.asarray(x, float)
        u = np.asarray(u, float)
        r = self.order
        h = np.array([dt ** (r - a) / math.factorial(r - a) for a in range(r)])
        return self.transition(dt) @ x + _kron3(h[:, None]) @ u

    def derivative(self, x, u) -> np.ndarray:
        return self.A @ x + self.B @ u


def rk4_step(spec: IntegratorSpec, x, u, dt: float) -> np.ndarray:
    """Classical RK4 under a zero-order-hold input."""
    f = lambda z: spec.derivative(z, u)  # noqa: E731
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def position(x) -> np.ndarray:
    return np.asarray(x, float)[:DIM]


def velocity(x) -> np.ndarray:
    return np.asarray(x, float)[DIM : 2 * DIM]


# --------------------------------------------------------------------------
# reference plans


def map_to_reference(state: UnicycleState, outgoing: MotionPrimitive | None, order: int = 2) -> np.ndarray:
    """Continuous reference for one planner waypoint.

    Position is (x, y, altitude). For order 2 the velocity is the forward
    speed of the primitive leaving the waypoint along the current heading;
    the last waypoint has no outgoing primitive and gets zero velocity.
    """
    if order not in (1, 2):
        raise ValueError(f"integrator order {order} not supported")
    p = np.array([state.x, state.y, state.altitude])
    if order == 1:
        return p
    nu = 0.0 if outgoing is None else outgoing.nu
    v = nu * np.array([math.cos(state.theta), math.sin(state.theta), 0.0])
    return np.concatenate([p, v])


@dataclass
class ReferencePlan:
    times: np.ndarray
    refs: np.ndarray  # (K+1, 3r)

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.refs = np.atleast_2d(np.asarray(self.refs, float))
        if len(self.times) != len(self.refs) or len(self.times) < 2:
            raise ValueError("reference plan needs matching times/refs, at least two")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("reference timestamps must be strictly increasing")

    @classmethod
    def from_trajectory(cls, states, controls, tau: float, order: int = 2, t0: float = 0.0):
        controls = list(controls)
        refs = [
            map_to_reference(s, controls[k] if k < len(controls) else None, order)
            for k, s in enumerate(states)
        ]
        return cls(t0 + tau * np.arange(len(refs)), np.array(refs))

    @property
    def order(self) -> int:
        return self.refs.shape[1] // DIM

    def index_at(self, t: float) -> int:
        """Segment index k with t_k <= t < t_{k+1}, clipped to the plan."""
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(max(k, 0), len(self.times) - 2)

    def segment(self, k: int, R=None) -> "LQRSegment":
        return LQRSegment(
            self.times[k], self.times[k + 1], self.refs[k], self.refs[k + 1],
            np.eye(DIM) if R is None else R, IntegratorSpec(self.order),
        )

    def segments(self, R=None) -> list:
        return [self.segment(k, R) for k in range(len(self.times) - 1)]


# --------------------------------------------------------------------------
# fixed-final-state LQR


@dataclass
class LQRSegment:
    t0: float
    t1: float
    x_start: np.ndarray
    x_goal: np.ndarray
    R: np.ndarray = field(default_factory=lambda: np.eye(DIM))
    spec: IntegratorSpec = IntegratorSpec(2)

    def __post_init__(self):
        self.x_start = np.asarray(self.x_start, float)
        self.x_goal = np.asarray(self.x_goal, float)
        self.R = np.asarray(self.R, float)
        if self.t1 <= self.t0:
            raise ValueError("segment must have positive duration")
        if np.linalg.eigvalsh(0.5 * (self.R + self.R.T)).min() <= 0:
            raise ValueError("R must be positive definite")
        self.Rinv = np.linalg.inv(self.R)

    def remaining(self, t: float) -> float:
        return self.t1 - t

    def drift_gap(self, x, t: float) -> np.ndarray:
        """d = x_goal - exp(A (t1 - t)) x."""
        return self.x_goal - self.spec.transition(self.t1 - t) @ np.asarray(x, float)


def gramian_closed_form(order: int, dt: float, Rinv) -> np.ndarray:
    r = order
    Gs = np.zeros((r, r))
    for a in range(r):
        for b in range(r):
            p, q = r - 1 - a, r - 1 - b
            Gs[a, b] = dt ** (p + q + 1) / ((p + q + 1) * math.factorial(p) * math.factorial(q))
    return (Gs[:, None, :, None] * np.asarray(Rinv)[None, :, None, :]).reshape(r * DIM, r * DIM)


def gramian(t: float, seg: LQRSegment) -> np.ndarray:
    dt = seg.t1 - t
    if dt <= 0:
        raise SingularHorizonError(f"gramian requested at t={t} >= segment end {seg.t1}")
    return gramian_closed_form(seg.spec.order, dt, seg.Rinv)


def lqr_control(x, t: float, seg: LQRSegment, last=None):
    """Minimum-energy control toward ``seg.x_goal``.

    Returns (u, held). Within ``HORIZON_FLOOR`` of the segment end the
    Gramian is too ill-conditioned and ``last`` (or zero) is held instead.
    """
    dt = seg.t1 - t
    if dt < HORIZON_FLOOR * (1.0 - 1e-9):  # slack for accumulated time stamps
        u = np.zeros(DIM) if last is None else np.asarray(last, float).copy()
        return u, True
    G = gramian(t, seg)
    lam = np.linalg.solve(G, seg.drift_gap(x, t))
    return seg.Rinv @ seg.spec.input_response(dt).T @ lam, False


def lqr_energy(seg: LQRSegment) -> float:
    """Closed-form optimal cost of the segment from its start waypoint."""
    return lyapunov_V(seg.x_start, seg.t0, seg)


def lyapunov_V(x, t: float, seg: LQRSegment) -> float:
    d = seg.drift_gap(x, t)
    return float(0.5 * d @ np.linalg.solve(gramian(t, seg), d))


def lyapunov_rate(x, t: float, seg: LQRSegment, u) -> float:
    """dV/dt along x' = Ax + Bu, for an arbitrary input ``u``."""
    dt = seg.t1 - t
    d = seg.drift_gap(x, t)
    lam = np.linalg.solve(gramian(t, seg), d)
    EB = seg.spec.input_response(dt)
    Phi = seg.spec.transition(dt)
    A = seg.spec.A
    x = np.asarray(x, float)
    dV_dt = lam @ (A @ Phi @ x) + 0.5 * lam @ EB @ seg.Rinv @ EB.T @ lam
    dV_dx = -lam @ Phi
    return float(dV_dt + dV_dx @ (A @ x + seg.spec.B @ np.asarray(u, float)))


def lyapunov_gradient_B(x, t: float, seg: LQRSegment) -> np.ndarray:
    """dV/dx . B, which equals -(u_lqr)^T R."""
    dt = seg.t1 - t
    lam = np.linalg.solve(gramian(t, seg), seg.drift_gap(x, t))
    return -lam @ seg.spec.transition(dt) @ seg.spec.B


def lqr_rate(x, t: float, seg: LQRSegment) -> float:
    """Optimal rate -0.5 u^T R u under the LQR input."""
    u, _ = lqr_control(x, t, seg)
    return float(-0.5 * u @ seg.R @ u)


def reference_plan_energy(states, controls, tau: float = 0.5, order: int = 2, R=None) -> float:
    """Sum of closed-form segment energies along a planner trajectory."""
    plan = ReferencePlan.from_trajectory(states, controls, tau, order)
    return float(sum(lqr_energy(s) for s in plan.segments(R)))


# --------------------------------------------------------------------------
# exponential barrier functions


def pole_place_keta(poles) -> np.ndarray:
    """Feedback row placing the spectrum of F - G K at ``poles``.

    Ordered [c0, ..., c_{r-1}] from the monic polynomial prod (s - p).
    """
    poles = np.atleast_1d(np.asarray(poles, float))
    if np.any(poles >= 0):
        raise ValueError("barrier poles must be strictly negative")
    coeffs = np.real(np.poly(poles))[1:]
    return coeffs[::-1].copy()


def closed_loop_poles(K_eta) -> np.ndarray:
    K = np.atleast_1d(np.asarray(K_eta, float))
    r = K.size
    M = np.eye(r, k=1) - np.outer(np.eye(r)[-1], K)
    return np.linalg.eigvals(M)


@dataclass(frozen=True)
class BarrierSpec:
    D_s: float = 0.5
    c: float = 1.0
    K_eta: tuple = (25.5, 10.1)

    def __post_init__(self):
        if self.D_s <= 0 or self.c <= 0:
            raise ValueError("D_s and c must be positive")
        if len(self.K_eta) < 1:
            raise ValueError("K_eta must be non-empty")
        if np.any(np.real(closed_loop_poles(self.K_eta)) >= 0):
            raise ValueError("K_eta does not give strictly negative closed-loop poles")

    @property
    def order(self) -> int:
        return len(self.K_eta)


def _rel(p_i, p_j, c):
    d = np.asarray(p_i, float)[:DIM] - np.asarray(p_j, float)[:DIM]
    return d[0], d[1], d[2] / c


def barrier_h(p_i, p_j, spec: BarrierSpec) -> float:
    a, b, z = _rel(p_i, p_j, spec.c)
    s = a * a + b * b
    return float(s * s + z**4 - spec.D_s**4)


def barrier_gradient(p_i, p_j, spec: BarrierSpec) -> np.ndarray:
    """dh/dp_i, the input row of the barrier's highest derivative."""
    a, b, z = _rel(p_i, p_j, spec.c)
    s = a * a + b * b
    return 4.0 * np.array([s * a, s * b, z**3 / spec.c])


@dataclass
class BarrierRow:
    A: np.ndarray
    b: float
    eta: np.ndarray
    drift: float  # L_f^r h


def barrier_row(x_i, x_j, spec: BarrierSpec) -> BarrierRow:
    """Pairwise row with h^(r) = A (u_i - u_j) + drift; safe iff
    A (u_i - u_j) + b >= 0 with b = K_eta . eta + drift."""
    r = spec.order
    if r not in (1, 2):
        raise ValueError(f"barrier order {r} not supported")
    A = barrier_gradient(x_i, x_j, spec)
    h = barrier_h(x_i, x_j, spec)
    K = np.asarray(spec.K_eta, float)
    if r == 1:
        return BarrierRow(A, float(K[0] * h), np.array([h]), 0.0)
    a, b, z = _rel(x_i, x_j, spec.c)
    dv = velocity(x_i) - velocity(x_j)
    ad, bd, zd = dv[0], dv[1], dv[2] / spec.c
    s = a * a + b * b
    w = a * ad + b * bd
    hdot = 4.0 * s * w + 4.0 * z**3 * zd
    drift = 8.0 * w * w + 4.0 * s * (ad * ad + bd * bd) + 12.0 * z * z * zd * zd
    eta = np.array([h, hdot])
    return BarrierRow(A, float(K @ eta + drift), eta, float(drift))


# --------------------------------------------------------------------------
# weighted safety QP


@dataclass(frozen=True)
class BoxLimits:
    """Per-axis limits; ``None`` disables a family. Velocity and position
    limits are enforced through first/second order exponential barriers."""

    u_max: float | None = None
    v_max: float | None = None
    p_min: tuple | None = None
    p_max: tuple | None = None
    k_vel: float = 5.0
    k_pos: tuple = (25.5, 10.1)


@dataclass(frozen=True)
class WeightedQPSpec:
    beta: float = 0.0
    R: tuple = ((1.0, 0, 0), (0, 1.0, 0), (0, 0, 1.0))
    box: BoxLimits = BoxLimits()

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")

    @property
    def R_mat(self) -> np.ndarray:
        return np.asarray(self.R, float)


def weight_matrix(u_lqr, R, beta: float) -> np.ndarray:
    """I + beta * R u u^T R / (u^T R^2 u); identity for zero nominal input."""
    u = np.asarray(u_lqr, float)
    R = np.asarray(R, float)
    Ru = R @ u
    nrm = float(Ru @ Ru)
    if nrm <= 1e-24:
        return np.eye(u.size)
    return np.eye(u.size) + beta * np.outer(Ru, Ru) / nrm


def box_rows(x, box: BoxLimits, order: int = 2):
    """Rows (G, h) with G u <= h for the box limits of one robot."""
    G, h = [], []
    I = np.eye(DIM)
    p = position(x)
    v = velocity(x) if order >= 2 else np.zeros(DIM)
    if box.u_max is not None:
        for k in range(DIM):
            G += [I[k], -I[k]]
            h += [box.u_max, box.u_max]
    if order >= 2 and box.v_max is not None:
        for k in range(DIM):
            G += [I[k], -I[k]]
            h += [box.k_vel * (box.v_max - v[k]), box.k_vel * (box.v_max + v[k])]
    k0, k1 = box.k_pos[0], box.k_pos[-1]
    if box.p_max is not None:
        for k in range(DIM):
            if order >= 2:
                h.append(k0 * (box.p_max[k] - p[k]) - k1 * v[k])
            else:
                h.append(k0 * (box.p_max[k] - p[k]))
            G.append(I[k])
    if box.p_min is not None:
        for k in range(DIM):
            if order >= 2:
                h.append(k0 * (p[k] - box.p_min[k]) + k1 * v[k])
            else:
                h.append(k0 * (p[k] - box.p_min[k]))
            G.append(-I[k])
    if not G:
        return np.zeros((0, DIM)), np.zeros(0)
    return np.array(G, float), np.array(h, float)


def assemble_weighted_qp(x_i, u_lqr, neighbors, barrier: BarrierSpec, spec: WeightedQPSpec,
                         share_self: float = 1.0, share_others=None, order: int = 2):
    """QP for one robot: min ||u - u_lqr||^2_W subject to its share of every
    pairwise barrier row and its box rows.

    ``neighbors`` are the other robots' states; shares default to equal
    responsibility. Returns (QPInstance, number of barrier rows).
    """
    u0 = np.asarray(u_lqr, float)
    W = weight_matrix(u0, spec.R_mat, spec.beta)
    rows, rhs = [], []
    for j, xj in enumerate(neighbors):
        a_j = 1.0 if share_others is None else share_others[j]
        br = barrier_row(x_i, xj, barrier)
        rows.append(-br.A)
        rhs.append(share_self / (share_self + a_j) * br.b)
    n_pair = len(rows)
    Gb, hb = box_rows(x_i, spec.box, order)
    G = np.vstack([np.array(rows).reshape(-1, DIM), Gb])
    h = np.concatenate([np.array(rhs), hb])
    return qpsolver.QPInstance(W, -W @ u0, G, h), n_pair


@dataclass
class SafetyStep:
    controls: np.ndarray  # (n, 3)
    nominal: np.ndarray  # (n, 3)
    status: list
    infeasible: list
    min_pair_residual: float  # min over pairs of A_ij (u_i - u_j) + b_ij
    active: list


def decentralized_safety_step(states, nominal, barrier: BarrierSpec, spec: WeightedQPSpec,
                              shares=None, warm=None, order: int = 2) -> SafetyStep:
    """Every robot filters its own nominal control against the current
    snapshot of all other robots. Infeasible QPs fall back to zero input."""
    states = [np.asarray(x, float) for x in states]
    n = len(states)
    shares = [1.0] * n if shares is None else list(shares)
    warm = warm or [None] * n
    controls, status, infeasible, active = [], [], [], []
    for i in range(n):
        others = [states[j] for j in range(n) if j != i]
        oshares = [shares[j] for j in range(n) if j != i]
        inst, _ = assemble_weighted_qp(states[i], nominal[i], others, barrier, spec,
                                       shares[i], oshares, order)
        sol = qpsolver.solve(inst, warm_start=warm[i])
        if sol.ok:
            controls.append(sol.u)
            infeasible.append(False)
        else:
            controls.append(np.zeros(DIM))
            infeasible.append(True)
        status.append(sol.status)
        active.append(sol.active)
    controls = np.array(controls)
    resid = np.inf
    for i in range(n):
        for j in range(i + 1, n):
            br = barrier_row(states[i], states[j], barrier)
            resid = min(resid, float(br.A @ (controls[i] - controls[j]) + br.b))
    return SafetyStep(controls, np.asarray(nominal, float), status, infeasible, resid, active)
