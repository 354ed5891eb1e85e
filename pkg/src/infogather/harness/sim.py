"""Closed-loop team simulation: nominal LQR, decentralized safety QPs and
RK4 integration under zero-order hold."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..control import (
    BarrierSpec,
    IntegratorSpec,
    WeightedQPSpec,
    barrier_h,
    decentralized_safety_step,
    lqr_control,
    rk4_step,
)

ACTIVE_TOL = 1e-9


@dataclass
class LoopStats:
    n: int
    effort: np.ndarray = None  # integral of 0.5 u^T R u per robot
    min_h: float = np.inf
    infeasible_steps: int = 0
    held_steps: int = 0
    active_steps: int = 0
    steps: int = 0
    max_abs_u: float = 0.0
    min_pair_residual: float = np.inf
    infeasible_robots: set = field(default_factory=set)

    def __post_init__(self):
        if self.effort is None:
            self.effort = np.zeros(self.n)


def min_pairwise_h(states, barrier: BarrierSpec) -> float:
    n = len(states)
    out = np.inf
    for i in range(n):
        for j in range(i + 1, n):
            out = min(out, barrier_h(states[i], states[j], barrier))
    return out


def run_interval(states, segments, t0: float, t1: float, dt: float, barrier: BarrierSpec,
                 qp_spec: WeightedQPSpec, stats: LoopStats, order: int = 2, shares=None,
                 last_u=None, warm=None, filtered: bool = True):
    """Advance every robot from t0 to t1 tracking its own segment.

    Returns (states, last controls, warm-start active sets). ``stats`` is
    updated in place.
    """
    spec = IntegratorSpec(order)
    n = len(states)
    states = [np.asarray(x, float).copy() for x in states]
    last_u = [np.zeros(3) for _ in range(n)] if last_u is None else [np.asarray(u, float) for u in last_u]
    warm = warm or [None] * n
    R = qp_spec.R_mat
    n_sub = max(1, int(round((t1 - t0) / dt)))
    h = (t1 - t0) / n_sub
    stats.min_h = min(stats.min_h, min_pairwise_h(states, barrier))
    for k in range(n_sub):
        t = t0 + k * h
        nominal = []
        for i in range(n):
            u, held = lqr_control(states[i], t, segments[i], last_u[i])
            stats.held_steps += int(held)
            nominal.append(u)
        if filtered and n > 1:
            step = decentralized_safety_step(states, nominal, barrier, qp_spec, shares, warm, order)
            controls = step.controls
            warm = step.active
            if any(step.infeasible):
                stats.infeasible_steps += 1
                stats.infeasible_robots.update(i for i, f in enumerate(step.infeasible) if f)
            stats.min_pair_residual = min(stats.min_pair_residual, step.min_pair_residual)
            if np.max(np.abs(controls - np.array(nominal))) > ACTIVE_TOL:
                stats.active_steps += 1
        else:
            controls = np.array(nominal)
        for i in range(n):
            u = controls[i]
            stats.effort[i] += 0.5 * float(u @ R @ u) * h
            states[i] = rk4_step(spec, states[i], u, h)
            stats.max_abs_u = max(stats.max_abs_u, float(np.max(np.abs(u))))
        last_u = [c.copy() for c in controls]
        stats.steps += 1
        stats.min_h = min(stats.min_h, min_pairwise_h(states, barrier))
    return states, last_u, warm
