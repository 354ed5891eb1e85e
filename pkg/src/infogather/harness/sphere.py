"""Antipodal-transfer benchmark for the safety-filtered LQR controller."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..control import BarrierSpec, BoxLimits, LQRSegment, WeightedQPSpec, barrier_h, pole_place_keta
from .export import MetricsRecord
from .sim import LoopStats, run_interval


@dataclass(frozen=True)
class SphereConfig:
    n_robots: int = 3
    beta: float = 0.5
    radius: float = 6.0
    duration: float = 6.0
    dt: float = 0.01
    D_s: float = 0.5
    c: float = 1.0
    poles: tuple = (-5.0, -5.1)
    u_max: float = 10.0
    pos_noise: float = 0.1
    vel_noise: float = 0.1
    min_separation: float = 1.5

    def barrier(self) -> BarrierSpec:
        return BarrierSpec(self.D_s, self.c, tuple(pole_place_keta(self.poles)))

    def qp_spec(self) -> WeightedQPSpec:
        return WeightedQPSpec(self.beta, box=BoxLimits(u_max=self.u_max))


SPHERE_COLUMNS = [
    "trial", "beta", "robots", "final_error", "effort", "min_h", "infeasible_steps",
    "active_steps", "max_abs_u",
]


def spawn(cfg: SphereConfig, rng: np.random.Generator):
    """Start and goal states: random points on the sphere, goals antipodal,
    both perturbed in position and velocity."""
    pts = []
    while len(pts) < cfg.n_robots:
        v = rng.normal(size=3)
        p = cfg.radius * v / np.linalg.norm(v)
        if all(np.linalg.norm(p - q) >= cfg.min_separation for q in pts) and all(
            np.linalg.norm(-p - q) >= cfg.min_separation for q in pts
        ):
            pts.append(p)
    starts, goals = [], []
    for p in pts:
        starts.append(np.concatenate([p + cfg.pos_noise * rng.normal(size=3), cfg.vel_noise * rng.normal(size=3)]))
        goals.append(np.concatenate([-p + cfg.pos_noise * rng.normal(size=3), cfg.vel_noise * rng.normal(size=3)]))
    return starts, goals


def run_trial(cfg: SphereConfig, seed, trial: int) -> dict:
    rng = np.random.default_rng([seed, cfg.n_robots, trial])
    starts, goals = spawn(cfg, rng)
    barrier = cfg.barrier()
    segs = [LQRSegment(0.0, cfg.duration, s, g) for s, g in zip(starts, goals)]
    stats = LoopStats(cfg.n_robots)
    h0 = min(
        (barrier_h(starts[i], starts[j], barrier) for i in range(cfg.n_robots) for j in range(i + 1, cfg.n_robots)),
        default=math.inf,
    )
    final, _, _ = run_interval(starts, segs, 0.0, cfg.duration, cfg.dt, barrier, cfg.qp_spec(), stats)
    err = [float(np.linalg.norm(x[:3] - g[:3])) for x, g in zip(final, goals)]
    return {
        "trial": trial,
        "beta": cfg.beta,
        "robots": cfg.n_robots,
        "final_error": float(np.mean(err)),
        "effort": float(np.mean(stats.effort)),
        "min_h": float(stats.min_h),
        "infeasible_steps": stats.infeasible_steps,
        "active_steps": stats.active_steps,
        "max_abs_u": stats.max_abs_u,
        "_initial_h": h0,
        "_pair_residual": stats.min_pair_residual,
    }


def run_sphere_benchmark(cfg: SphereConfig, trials: int, seed, workers: int = 1) -> MetricsRecord:
    """One row per trial. Trial ``k`` uses the same spawn for every beta so
    sweeps are paired."""
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(run_trial, [cfg] * trials, [seed] * trials, range(trials)))
    else:
        rows = [run_trial(cfg, seed, k) for k in range(trials)]
    rec = MetricsRecord(list(SPHERE_COLUMNS), meta={"seed": seed})
    extras = []
    for r in rows:
        extras.append({"initial_h": r.pop("_initial_h"), "pair_residual": r.pop("_pair_residual")})
        rec.add(**r)
    feasible = [r for r in rec.rows if r["infeasible_steps"] == 0]
    rec.summary = {
        "trials": trials,
        "infeasible_trials": trials - len(feasible),
        "mean_final_error": float(np.mean([r["final_error"] for r in feasible])) if feasible else None,
        "mean_effort": float(np.mean([r["effort"] for r in feasible])) if feasible else None,
        "min_h": float(min(r["min_h"] for r in rec.rows)) if rec.rows else None,
        "min_initial_h": float(min(e["initial_h"] for e in extras)) if extras else None,
        "min_pair_residual": float(min(e["pair_residual"] for e in extras)) if extras else None,
    }
    return rec
