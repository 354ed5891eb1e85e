"""Planner benchmarks on synthetic ground sets and on generated scenarios."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..estimation import Belief, Oracle, OracleContext, offset
from ..netsim import DelayModel, Network
from ..planner import PartitionMatroid, cd_order, cls, coordinate_descent, dls
from ..world import TargetModel


@dataclass
class SyntheticCandidate:
    """Ground-set element with directly sampled sensing information."""

    id: tuple
    info: np.ndarray
    energy: float

    @property
    def robot(self) -> int:
        return self.id[0]


@dataclass
class Instance:
    ground_sets: dict
    oracle: Oracle
    weights: list

    @property
    def matroid(self) -> PartitionMatroid:
        return PartitionMatroid(self.ground_sets)

    def fresh_oracle(self) -> Oracle:
        return Oracle(self.oracle.ctx, self.oracle.items.values())


def _random_psd(rng, d, scale):
    X = rng.normal(size=(d, d))
    return scale * (X @ X.T) / d


def random_instance(rng, n_robots=3, n_candidates=4, n_targets=2, dim=2, horizon=2,
                    info_scale=1.0, energy_scale=0.6, weight_range=(0.5, 1.5)) -> Instance:
    """Random partition-matroid instance.

    Targets follow a noisy random walk; each candidate carries random PSD
    information per step (zero with probability 0.3, mimicking targets
    outside the footprint) and a random energy.
    """
    A = np.eye(dim)
    W = 0.05 * np.eye(dim)
    model = TargetModel(A, W, tuple(range(min(dim, 2))))
    prior = Belief(rng.normal(size=(n_targets, dim)), np.stack([np.eye(dim)] * n_targets))
    weights = [float(rng.uniform(*weight_range)) for _ in range(n_robots)]
    items, ground, c_max = [], {}, []
    for i in range(n_robots):
        ground[i] = []
        costs = rng.uniform(0.0, energy_scale, size=n_candidates)
        for k in range(n_candidates):
            info = np.zeros((horizon, n_targets, dim, dim))
            for t in range(horizon):
                for j in range(n_targets):
                    if rng.random() > 0.3:
                        info[t, j] = _random_psd(rng, dim, info_scale)
            items.append(SyntheticCandidate((i, k), info, weights[i] * float(costs[k])))
            ground[i].append((i, k))
        c_max.append(float(costs.max()))
    ctx = OracleContext(prior, model, horizon, offset(weights, c_max))
    return Instance(ground, Oracle(ctx, items), weights)


def independent_sets(ground_sets: dict):
    """Every independent set of the partition matroid (at most one per robot)."""
    robots = sorted(ground_sets)
    for choice in itertools.product(*[[None] + list(ground_sets[i]) for i in robots]):
        yield frozenset(a for a in choice if a is not None)


def exhaustive_optimum(ground_sets: dict, oracle):
    best, best_v = frozenset(), -math.inf
    for S in independent_sets(ground_sets):
        v = oracle(S)
        if v > best_v:
            best, best_v = S, v
    return best, best_v


def run_algorithm(inst: Instance, algo: str, alpha=1.0, lazy=True, warm=True, delay_ms=0.0,
                  seed=0, cd_how="index"):
    """Run one planner on a fresh oracle so call counts are per run."""
    oracle = inst.fresh_oracle()
    if algo == "cls":
        return cls(inst.ground_sets, oracle, alpha)
    if algo == "dls":
        net = Network(len(inst.ground_sets), DelayModel.from_mean_ms(delay_ms, seed))
        return dls(inst.ground_sets, oracle, alpha, net, lazy=lazy, warm_start=warm)
    if algo == "cd":
        order = cd_order(inst.ground_sets, inst.weights, cd_how)
        return coordinate_descent(order, inst.ground_sets, oracle)
    raise ValueError(f"unknown algorithm {algo!r}")


BENCH_COLUMNS = [
    "robots", "trial", "variant", "objective", "oracle_calls", "normalized_calls",
    "exchanges", "handoffs", "net_time_s",
]

VARIANTS = [
    ("dls", True, True, "index"),
    ("dls", False, True, "index"),
    ("dls", True, False, "index"),
    ("dls", False, False, "index"),
    ("cls", False, False, "index"),
    ("cd", False, False, "index"),
    ("cd", False, False, "reverse"),
]


def variant_name(algo, lazy, warm, how):
    if algo == "dls":
        return f"dls{'+lazy' if lazy else ''}{'+warm' if warm else ''}"
    if algo == "cd":
        return f"cd-{how}"
    return algo


def run_planner_benchmark(robot_counts, trials, seed, delay_ms=5.0, n_candidates=4,
                          n_targets=None, alpha=1.0, variants=VARIANTS) -> list[dict]:
    """Sweep robot counts and planner variants on paired synthetic instances.

    ``normalized_calls`` divides oracle calls by the ground-set size.
    """
    rows = []
    for n in robot_counts:
        for trial in range(trials):
            rng = np.random.default_rng([seed, n, trial])
            inst = random_instance(rng, n, n_candidates, n_targets or n)
            N = sum(len(v) for v in inst.ground_sets.values())
            for algo, lazy, warm, how in variants:
                res = run_algorithm(inst, algo, alpha, lazy, warm, delay_ms, seed + trial, how)
                rows.append({
                    "robots": n,
                    "trial": trial,
                    "variant": variant_name(algo, lazy, warm, how),
                    "objective": res.solution.value - inst.oracle.ctx.omega,
                    "oracle_calls": res.oracle_calls,
                    "normalized_calls": res.oracle_calls / N,
                    "exchanges": res.exchanges,
                    "handoffs": res.handoffs,
                    "net_time_s": res.elapsed,
                })
    return rows


def coordination_trap() -> Instance:
    """Two robots, two scalar targets. Robot 0's only option covers one
    target cheaply; robot 1's covers both at a higher cost. Committing
    robot 0 first blocks the better solution {robot 1}."""
    gain = math.exp(4.0) - 1.0
    model = TargetModel(np.eye(1), np.zeros((1, 1)), (0, 0))
    prior = Belief(np.zeros((2, 1)), np.ones((2, 1, 1)))
    a = SyntheticCandidate((0, 0), np.array([[[[gain]], [[0.0]]]]), 1.0)
    b = SyntheticCandidate((1, 0), np.array([[[[gain]], [[gain]]]]), 2.5)
    ctx = OracleContext(prior, model, 1, 3.5)
    return Instance({0: [(0, 0)], 1: [(1, 0)]}, Oracle(ctx, [a, b]), [1.0, 1.0])
