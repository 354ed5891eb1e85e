"""Receding-horizon target tracking: plan, track with safety-filtered LQR,
and fuse simulated measurements into the shared belief."""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass

import numpy as np

from ..control import ReferencePlan, lyapunov_V, map_to_reference
from ..estimation import Belief, Oracle, OracleContext, kf_predict, mutual_information, offset, update_with_gain
from ..netsim import DelayModel, Network
from ..planner import cd_order, cls, coordinate_descent, dls
from ..trajopt import generate_candidates
from ..world import (
    BEARING,
    RANGE_BEARING,
    UnicycleState,
    measure,
    measurement_jacobian,
    simulate_target_step,
    wrap_angle,
)
from .export import MetricsRecord
from .scenario import build_world, config_hash, controller_specs
from .sim import LoopStats, run_interval


@dataclass
class PlanOutcome:
    selection: dict  # robot -> CandidateTrajectory (stop trajectory if unassigned)
    chosen: frozenset  # ids in the planner solution
    result: object
    oracle: Oracle
    candidates: dict  # robot -> list
    mi: float
    energy: float

    @property
    def objective(self) -> float:
        return self.mi - self.energy


def make_oracle(ctx, candidates: dict) -> Oracle:
    return Oracle(ctx, [a for lst in candidates.values() for a in lst])


def run_planner(algo, ground, oracle, weights, alpha=1.0, lazy=True, warm=True, delay_ms=0.0,
                seed=0, cd_how="index"):
    if algo == "cls":
        return cls(ground, oracle, alpha)
    if algo == "dls":
        net = Network(len(ground), DelayModel.from_mean_ms(delay_ms, seed))
        return dls(ground, oracle, alpha, net, lazy=lazy, warm_start=warm)
    if algo == "cd":
        return coordinate_descent(cd_order(ground, weights, cd_how), ground, oracle)
    raise ValueError(f"unknown algorithm {algo!r}")


def plan_step(cfg, world, belief: Belief, starts, seed, algo=None, alpha=None, lazy=None, warm=None,
              cd_how=None) -> PlanOutcome:
    pl = cfg["planner"]
    algo = algo or pl["algo"]
    ctx = OracleContext(belief, world.target_model, pl["horizon"], offset(world.weights, world.c_max))
    candidates = {}
    for r, s in zip(world.robots, starts):
        spec = dataclasses.replace(r, start=s)
        candidates[r.index] = generate_candidates(spec, ctx, pl["horizon"], world.prune, world.field)
    oracle = make_oracle(ctx, candidates)
    ground = {i: [a.id for a in lst] for i, lst in candidates.items()}
    res = run_planner(
        algo, ground, oracle, world.weights,
        pl["alpha"] if alpha is None else alpha,
        pl["lazy"] if lazy is None else lazy,
        pl["warm_start"] if warm is None else warm,
        cfg["network"]["delay_ms"], seed,
        cd_how or pl["cd_order"],
    )
    chosen = res.solution.members
    selection = {}
    for i, lst in candidates.items():
        pick = next((a for a in lst if a.id in chosen), None)
        if pick is None:
            pick = next((a for a in lst if a.is_stop), lst[0])
        selection[i] = pick
    mi = oracle.mi(chosen)
    energy = oracle.energy(chosen)
    return PlanOutcome(selection, chosen, res, oracle, candidates, mi, energy)


def ekf_update(belief: Belief, robot: UnicycleState, sensor, z, pos_index=(0, 1)) -> Belief:
    """Sequential extended Kalman update with one robot's measurements.
    ``z`` maps target index -> measurement vector."""
    mean = belief.mean.copy()
    cov = belief.cov.copy()
    idx = list(pos_index)
    d = mean.shape[1]
    for t, zt in z.items():
        xy = mean[t, idx]
        try:
            Hxy = measurement_jacobian(robot, sensor, xy)
        except ValueError:
            continue
        H = np.zeros((Hxy.shape[0], d))
        H[:, idx] = Hxy
        dist = math.sqrt((xy[0] - robot.x) ** 2 + (xy[1] - robot.y) ** 2 + robot.altitude**2)
        Vinv = np.diag(1.0 / sensor.noise_std(dist) ** 2)
        innov = zt - measure(robot, sensor, xy)
        if sensor.kind in (BEARING, RANGE_BEARING):
            innov[-1] = wrap_angle(innov[-1])
        post, _ = update_with_gain(cov[t], H.T @ Vinv @ H)
        mean[t] = mean[t] + post @ H.T @ Vinv @ innov
        cov[t] = post
    return Belief(mean, cov)


def sense(robot: UnicycleState, sensor, targets, rng, pos_index=(0, 1)) -> dict:
    out = {}
    idx = list(pos_index)
    for t, y in enumerate(targets):
        xy = y[idx]
        if not sensor.in_footprint(robot, xy):
            continue
        dist = math.sqrt((xy[0] - robot.x) ** 2 + (xy[1] - robot.y) ** 2 + robot.altitude**2)
        if dist == 0.0:
            continue
        z = measure(robot, sensor, xy) + sensor.noise_std(dist) * rng.normal(size=sensor.d_z)
        out[t] = z
    return out


TRACK_COLUMNS = [
    "step", "time", "replan", "mi", "energy", "objective", "oracle_calls", "exchanges",
    "min_h", "effort", "qp_infeasible", "qp_active", "held", "rmse", "est_rmse",
    "lqr_planned", "lqr_executed",
]


@dataclass
class TrackingRun:
    record: MetricsRecord
    plans: list  # PlanOutcome per replan
    belief: Belief


def _rmse(belief: Belief, truth, pos_index):
    if belief.n_targets == 0:
        return 0.0, 0.0
    idx = list(pos_index)
    err = truth[:, idx] - belief.mean[:, idx]
    rmse = math.sqrt(float(np.mean(np.sum(err**2, axis=1))))
    est = math.sqrt(float(np.mean([np.trace(c[np.ix_(idx, idx)]) for c in belief.cov])))
    return rmse, est


def run_tracking_sim(cfg: dict, seed: int, algo=None, alpha=None, lazy=None, warm=None) -> TrackingRun:
    """Full mission loop; one CSV row per planner time step."""
    wall0 = time.perf_counter()
    rng = np.random.default_rng([seed, 0])
    world = build_world(cfg, rng)
    noise = np.random.default_rng([seed, 1])
    pl, mission, ctrl = cfg["planner"], cfg["mission"], cfg["controller"]
    tau, order, dt = pl["tau"], ctrl["order"], ctrl["dt"]
    barrier, qp_spec = controller_specs(cfg)
    R = qp_spec.R_mat
    pos_index = world.target_model.pos_index
    shares = ctrl.get("shares")

    belief = Belief(world.prior_mean, world.prior_cov) if len(world.prior_mean) else Belief(
        np.zeros((0, world.target_model.d_y)), np.zeros((0, world.target_model.d_y, world.target_model.d_y)))
    truth = world.target_states.copy()
    poses = [r.start for r in world.robots]
    x = [map_to_reference(p, None, order) for p in poses]
    last_u = warm_sets = None
    rec = MetricsRecord(list(TRACK_COLUMNS), meta={"seed": seed, "config_hash": config_hash(cfg), "scenario": cfg["name"]})
    plans, wall = [], []
    plan = None
    k_local = 0
    for step in range(mission["steps"]):
        t0 = step * tau
        row = {"step": step, "time": t0, "replan": step % mission["replan_every"] == 0}
        if row["replan"]:
            w0 = time.perf_counter()
            plan = plan_step(cfg, world, belief, poses, seed + step, algo, alpha, lazy, warm)
            wall.append(time.perf_counter() - w0)
            plans.append(plan)
            refs = [ReferencePlan.from_trajectory(plan.selection[i].states, plan.selection[i].controls,
                                                  tau, order, t0) for i in range(len(world.robots))]
            k_local = 0
            row.update(mi=plan.mi, energy=plan.energy, objective=plan.objective,
                       oracle_calls=plan.result.oracle_calls, exchanges=plan.result.exchanges)
        segs = [ref.segment(k_local, R) for ref in refs]
        planned = float(sum(lyapunov_V(xi, t0, s) for xi, s in zip(x, segs)))
        stats = LoopStats(len(x))
        x, last_u, warm_sets = run_interval(x, segs, t0, t0 + tau, dt, barrier, qp_spec, stats, order,
                                            shares, last_u, warm_sets)
        poses = [
            UnicycleState(float(xi[0]), float(xi[1]), plan.selection[i].states[k_local + 1].theta,
                          plan.selection[i].states[k_local + 1].altitude)
            for i, xi in enumerate(x)
        ]
        k_local += 1

        # targets move, belief predicts, robots sense
        truth = np.array([simulate_target_step(y, world.target_model, noise) for y in truth]).reshape(truth.shape)
        belief = Belief(belief.mean @ world.target_model.A.T, kf_predict(belief.cov, world.target_model.A, world.target_model.W)) \
            if belief.n_targets else belief
        for r, p in zip(world.robots, poses):
            z = sense(p, r.sensor, truth, noise, pos_index)
            if z:
                belief = ekf_update(belief, p, r.sensor, z, pos_index)
        rmse, est = _rmse(belief, truth, pos_index)
        row.update(
            min_h=stats.min_h if len(x) > 1 else None,
            effort=float(stats.effort.sum()),
            qp_infeasible=stats.infeasible_steps,
            qp_active=stats.active_steps,
            held=stats.held_steps,
            rmse=rmse,
            est_rmse=est,
            lqr_planned=planned,
            lqr_executed=float(stats.effort.sum()),
        )
        rec.add(**row)
    rec.summary = {
        "scenario": cfg["name"],
        "seed": seed,
        "replans": len(plans),
        "mean_objective": float(np.mean([p.objective for p in plans])),
        "total_oracle_calls": int(sum(p.result.oracle_calls for p in plans)),
        "total_exchanges": int(sum(p.result.exchanges for p in plans)),
        "qp_infeasible_steps": int(sum(r["qp_infeasible"] for r in rec.rows)),
        "final_rmse": rec.rows[-1]["rmse"] if rec.rows else None,
        "planning_wall_time_s": float(sum(wall)),
        "wall_time_s": time.perf_counter() - wall0,
    }
    return TrackingRun(rec, plans, belief)


def recompute_objective(plan: PlanOutcome) -> float:
    """Objective of a logged plan recomputed from its candidates alone."""
    items = [plan.oracle.items[a] for a in plan.chosen]
    return mutual_information(plan.oracle.ctx, items) - sum(a.energy for a in items)


# --------------------------------------------------------------------------
# single planning round sweeps


def rescale_candidates(candidates: dict, weights) -> dict:
    """Copies of the candidates with energy = weight * unweighted cost."""
    out = {}
    for i, lst in candidates.items():
        out[i] = [dataclasses.replace(a, energy=weights[i] * a.cost) for a in lst]
    return out


SWEEP_COLUMNS = ["seed", "m", "algo", "objective", "mi", "energy", "oracle_calls", "exchanges", "handoffs"]


def run_weight_sweep(cfg: dict, m_values, seeds, algos=(("dls", "index"), ("cd", "index"), ("cd", "reverse"))):
    """One planning round per seed; every robot gets the common weight m.
    Candidates are generated once per seed and re-weighted, so all m and
    all planners see the same trajectories."""
    rec = MetricsRecord(list(SWEEP_COLUMNS), meta={"config_hash": config_hash(cfg), "scenario": cfg["name"]})
    pl = cfg["planner"]
    for seed in seeds:
        world = build_world(cfg, np.random.default_rng([seed, 0]), weight_override=1.0)
        belief = Belief(world.prior_mean, world.prior_cov)
        ctx = OracleContext(belief, world.target_model, pl["horizon"], 0.0)
        base = {r.index: generate_candidates(r, ctx, pl["horizon"], world.prune, world.field) for r in world.robots}
        for m in m_values:
            weights = [m] * len(world.robots)
            cands = rescale_candidates(base, weights)
            mctx = OracleContext(belief, world.target_model, pl["horizon"], offset(weights, world.c_max))
            ground = {i: [a.id for a in lst] for i, lst in cands.items()}
            for algo, how in algos:
                oracle = make_oracle(mctx, cands)
                res = run_planner(algo, ground, oracle, weights, pl["alpha"], pl["lazy"], pl["warm_start"],
                                  cfg["network"]["delay_ms"], seed, how)
                S = res.solution.members
                name = algo if algo != "cd" else f"cd-{how}"
                rec.add(seed=seed, m=m, algo=name, objective=oracle.objective(S), mi=oracle.mi(S),
                        energy=oracle.energy(S), oracle_calls=res.oracle_calls, exchanges=res.exchanges,
                        handoffs=res.handoffs)
    return rec
