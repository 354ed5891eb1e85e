"""Local search over a partition matroid of robot trajectories: centralized
(CLS), distributed with proposal exchange (DLS), and the sequential
coordinate-descent baseline (CD)."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .netsim import INIT, PROPOSAL, DelayModel, Network, resolve_round

NOP = None


class PlannerError(RuntimeError):
    pass


@dataclass(frozen=True)
class Proposal:
    delete: tuple | None
    add: tuple | None
    proposer: int
    new_value: float = 0.0

    @property
    def is_sentinel(self) -> bool:
        return self.delete is NOP and self.add is NOP

    def apply(self, S: frozenset) -> frozenset:
        out = set(S)
        if self.delete is not NOP:
            out.discard(self.delete)
        if self.add is not NOP:
            out.add(self.add)
        return frozenset(out)


def sentinel(robot: int) -> Proposal:
    return Proposal(NOP, NOP, robot, 0.0)


class PartitionMatroid:
    def __init__(self, ground_sets: dict):
        self.ground_sets = {i: list(v) for i, v in ground_sets.items()}
        self._owner = {a: i for i, ids in self.ground_sets.items() for a in ids}

    @property
    def robots(self) -> list:
        return sorted(self.ground_sets)

    @property
    def size(self) -> int:
        return len(self._owner)

    def robot_of(self, a) -> int:
        try:
            return self._owner[a]
        except KeyError:
            raise KeyError(f"unknown trajectory {a!r}") from None

    def is_independent(self, S) -> bool:
        owners = [self.robot_of(a) for a in S]
        return len(owners) == len(set(owners))


def is_independent(matroid: PartitionMatroid, S) -> bool:
    return matroid.is_independent(S)


@dataclass
class SolutionSet:
    members: frozenset
    round: int
    value: float

    def hash(self) -> str:
        return hashlib.sha1(repr(sorted(self.members)).encode()).hexdigest()


@dataclass
class PlanResult:
    solution: SolutionSet
    candidates: list  # per-round SolutionSets
    accepted: int = 0
    oracle_calls: int = 0
    exchanges: int = 0
    handoffs: int = 0
    elapsed: float = 0.0  # logical network time, seconds
    values: list = field(default_factory=list)  # per round: g at start, then after each accepted op
    round_times: list = field(default_factory=list)


def threshold(alpha: float, N: int) -> float:
    return 1.0 + alpha / N**4


def _sorted_ground(ground_sets, standalone) -> dict:
    """Each robot's ids sorted by descending standalone gain, ties by id."""
    return {i: sorted(ids, key=lambda a: (-standalone[a], a)) for i, ids in ground_sets.items()}


def _standalone(ground_sets, oracle, standalone):
    if standalone is not None:
        return dict(standalone)
    g0 = oracle(())
    return {a: oracle((a,)) - g0 for ids in ground_sets.values() for a in ids}


def _op_cap(g_start: float, g_empty: float, ground, standalone, thr: float) -> int:
    """Accepted operations per round cannot exceed log_thr(g_upper / g_start),
    with g_upper = g(empty) + sum_i max(0, best standalone gain of robot i)
    by submodularity."""
    upper = g_empty + sum(max([0.0] + [standalone[a] for a in ids]) for ids in ground.values())
    g_start = max(g_start, 1e-12)
    if upper <= g_start:
        return 2
    return int(math.ceil(math.log(upper / g_start) / math.log(thr))) + 2


def best_singleton(ground: dict, oracle):
    """argmax g({a}) over all robots, ties to the lower (robot, index)."""
    best, best_v = None, -math.inf
    for i in sorted(ground):
        for a in sorted(ground[i]):
            v = oracle((a,))
            if v > best_v:
                best, best_v = a, v
    return best, best_v


def _robot_first_op(S, i, own, owner, oracle, thr):
    """First improving Delete/Add/Swap available to robot ``i``, scanning
    deletions in id order then no deletion, additions in ``own`` order."""
    gS = oracle(S)
    for d in sorted(S) + [NOP]:
        Sm = S if d is NOP else S - {d}
        g_minus = oracle(Sm)
        deficiency = thr * gS - g_minus
        if deficiency <= 0:
            return Proposal(d, NOP, i, g_minus)
        if any(owner(b) == i for b in Sm):
            continue
        for a in own:
            v = oracle(Sm | {a})
            if v - g_minus >= deficiency:
                return Proposal(d, a, i, v)
    return None


def cls(ground_sets: dict, oracle, alpha: float = 1.0, standalone=None) -> PlanResult:
    """Centralized local search, two rounds, best-of-two.

    Every iteration collects each robot's first improving operation and
    applies the one with the highest resulting value (lower robot index on
    ties), so the result is reproducible and comparable with :func:`dls`.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    calls0 = oracle.calls if hasattr(oracle, "calls") else 0
    matroid = PartitionMatroid(ground_sets)
    N = max(matroid.size, 1)
    thr = threshold(alpha, N)
    standalone = _standalone(ground_sets, oracle, standalone)
    remaining = _sorted_ground(ground_sets, standalone)
    g_empty = oracle(())
    rounds, values, accepted = [], [], 0
    for kappa in (1, 2):
        a0, _ = best_singleton(remaining, oracle)
        S = frozenset() if a0 is None else frozenset([a0])
        g_start = oracle(S)
        cap = _op_cap(g_start, g_empty, remaining, standalone, thr)
        values.append([g_start])
        steps = 0
        while True:
            ops = [_robot_first_op(S, i, remaining[i], matroid.robot_of, oracle, thr) for i in sorted(remaining)]
            ops = [p for p in ops if p is not None]
            if not ops:
                break
            op = resolve_round(ops)
            S = op.apply(S)
            if not matroid.is_independent(S):
                raise PlannerError("local operation broke independence")
            steps += 1
            accepted += 1
            values[-1].append(oracle(S))
            if steps > cap:
                raise PlannerError(f"round {kappa} exceeded {cap} accepted operations")
        rounds.append(SolutionSet(S, kappa, oracle(S)))
        remaining = {i: [a for a in ids if a not in S] for i, ids in remaining.items()}
    best = max(rounds, key=lambda s: (s.value, -s.round))
    calls = (oracle.calls - calls0) if hasattr(oracle, "calls") else 0
    return PlanResult(best, rounds, accepted, calls, values=values)


def find_proposal(S, own, standalone, alpha, N, oracle, robot, owner, lazy=True) -> Proposal:
    """One robot's proposal against the team solution ``S``.

    ``own`` must be sorted by descending standalone gain. With ``lazy`` the
    scan over additions stops at the first candidate whose standalone gain
    is below the deficiency; by submodularity no later one can qualify.
    """
    S = frozenset(S)
    thr = threshold(alpha, N)
    gS = oracle(S)
    for d in sorted(S) + [NOP]:
        Sm = S if d is NOP else S - {d}
        g_minus = oracle(Sm)
        deficiency = thr * gS - g_minus
        if deficiency <= 0:
            return Proposal(d, NOP, robot, g_minus)
        if any(owner(b) == robot for b in Sm):
            continue
        for a in own:
            if lazy and standalone[a] < deficiency:
                break
            v = oracle(Sm | {a})
            if v - g_minus >= deficiency:
                return Proposal(d, a, robot, v)
    return sentinel(robot)


def greedy_warm_start(S, own, standalone, alpha, N, oracle, robot, owner, lazy=True) -> Proposal:
    """Addition-only proposal: this robot's best addition if it clears the
    improvement threshold, else the sentinel."""
    S = frozenset(S)
    if not own or any(owner(b) == robot for b in S):
        return sentinel(robot)
    gS = oracle(S)
    deficiency = threshold(alpha, N) * gS - gS
    best, best_gain = None, -math.inf
    for a in own:
        if lazy and (standalone[a] < deficiency or standalone[a] < best_gain):
            break
        gain = oracle(S | {a}) - gS
        if gain >= deficiency and gain > best_gain:
            best, best_gain = a, gain
    if best is None:
        return sentinel(robot)
    return Proposal(NOP, best, robot, gS + best_gain)


@dataclass
class _Agent:
    robot: int
    own: list
    oracle: object
    S: frozenset = frozenset()
    clock: float = 0.0
    N: int = 1
    init: tuple = ()
    proposal: Proposal | None = None


def _split_oracles(oracle, robots, per_agent):
    if not per_agent:
        return {i: oracle for i in robots}
    from .estimation import Oracle

    if not isinstance(oracle, Oracle):
        raise TypeError("per-agent oracles need an estimation.Oracle")
    return {i: Oracle(oracle.ctx, oracle.items.values()) for i in robots}


def dls(
    ground_sets: dict,
    oracle,
    alpha: float = 1.0,
    network: Network | None = None,
    lazy: bool = True,
    warm_start: bool = True,
    standalone=None,
    per_agent_oracles: bool = False,
) -> PlanResult:
    """Distributed local search over a simulated network.

    Each robot keeps its own copy of the team solution. Every exchange round
    all robots broadcast one proposal (possibly the sentinel), wait for the
    whole team, and apply the common winner from :func:`resolve_round`.
    The improvement threshold uses N from the initial ground-set sizes in
    both rounds.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    robots = sorted(ground_sets)
    n = len(robots)
    if robots != list(range(n)):
        raise ValueError("robots must be indexed 0..n-1")
    network = network or Network(n, DelayModel())
    oracles = _split_oracles(oracle, robots, per_agent_oracles)
    calls0 = {id(o): o.calls for o in oracles.values() if hasattr(o, "calls")}
    matroid = PartitionMatroid(ground_sets)
    owner = matroid.robot_of
    if standalone is None:
        standalone = {}
        for i in robots:
            standalone.update(_standalone({i: ground_sets[i]}, oracles[i], None))
    ordered = _sorted_ground(ground_sets, standalone)
    agents = [_Agent(i, list(ordered[i]), oracles[i]) for i in robots]

    N = None
    rounds, values, round_times = [], [], []
    accepted = exchanges = 0
    for kappa in (1, 2):
        # Initialization: share |M_i| and the best singleton.
        for ag in agents:
            if ag.own:
                a_star, _ = best_singleton({ag.robot: ag.own}, ag.oracle)
                payload = (len(ag.own), a_star, ag.oracle((a_star,)))
            else:
                payload = (0, None, -math.inf)
            ag.init = payload
            network.broadcast(ag.robot, INIT, payload, ag.clock)
        inbox = network.gather(INIT, n - 1)
        for ag in agents:
            offers = {m.sender: m.payload for m in inbox[ag.robot]}
            offers[ag.robot] = ag.init
            if kappa == 1:
                ag.N = max(sum(p[0] for p in offers.values()), 1)
            best = None
            for i in sorted(offers):
                size, a, v = offers[i]
                if a is not None and (best is None or v > best[1]):
                    best = (a, v)
            ag.S = frozenset() if best is None else frozenset([best[0]])
            ag.clock = max([ag.clock] + [m.deliver_time for m in inbox[ag.robot]])
        N = agents[0].N
        _check_agreement(agents)

        g_start = agents[0].oracle(agents[0].S)
        cap = _op_cap(g_start, agents[0].oracle(()), {ag.robot: ag.own for ag in agents}, standalone, threshold(alpha, N))
        values.append([g_start])
        warm = warm_start
        steps = 0
        while True:
            for ag in agents:
                # During warm start a robot with no addition also attaches its
                # regular proposal, so leaving the warm phase costs no extra
                # exchange.
                if warm:
                    p = greedy_warm_start(ag.S, ag.own, standalone, alpha, ag.N, ag.oracle, ag.robot, owner, lazy)
                    fb = find_proposal(ag.S, ag.own, standalone, alpha, ag.N, ag.oracle, ag.robot, owner,
                                       lazy) if p.is_sentinel else None
                else:
                    p = find_proposal(ag.S, ag.own, standalone, alpha, ag.N, ag.oracle, ag.robot, owner, lazy)
                    fb = None
                ag.proposal = (p, fb)
                network.broadcast(ag.robot, PROPOSAL, ag.proposal, ag.clock)
            inbox = network.gather(PROPOSAL, n - 1)
            t_round = 0.0
            winners = []
            for ag in agents:
                msgs = [m.payload for m in inbox[ag.robot]] + [ag.proposal]
                win = resolve_round([m[0] for m in msgs], n)
                if warm and win.is_sentinel:
                    win = resolve_round([m[1] for m in msgs], n)
                winners.append(win)
                t_end = max([ag.clock] + [m.deliver_time for m in inbox[ag.robot]])
                t_round = max(t_round, t_end - ag.clock)
                ag.clock = t_end
                if not win.is_sentinel:
                    ag.S = win.apply(ag.S)
            exchanges += 1
            round_times.append(t_round)
            win = winners[0]
            _check_agreement(agents)
            if warm and all(m[0].is_sentinel for m in msgs):
                warm = False
            if win.is_sentinel:
                break
            if not matroid.is_independent(agents[0].S):
                raise PlannerError("accepted proposal broke independence")
            steps += 1
            accepted += 1
            values[-1].append(win.new_value)
            if steps > cap:
                raise PlannerError(f"round {kappa} exceeded {cap} accepted operations")
        S = agents[0].S
        rounds.append(SolutionSet(S, kappa, agents[0].oracle(S)))
        for ag in agents:
            ag.own = [a for a in ag.own if a not in S]

    best = max(rounds, key=lambda s: (s.value, -s.round))
    calls = sum(o.calls - calls0[id(o)] for o in {id(o): o for o in oracles.values()}.values() if hasattr(o, "calls"))
    elapsed = max(ag.clock for ag in agents)
    return PlanResult(best, rounds, accepted, calls, exchanges, elapsed=elapsed, values=values, round_times=round_times)


def _check_agreement(agents):
    h = {SolutionSet(ag.S, 0, 0.0).hash() for ag in agents}
    if len(h) != 1:
        raise PlannerError("robots disagree on the team solution")


def cd_order(robots, weights=None, how: str = "index") -> list:
    robots = sorted(robots)
    if how == "index":
        return robots
    if how == "reverse":
        return robots[::-1]
    if weights is None:
        raise ValueError("weight orderings need robot weights")
    if how == "weight-asc":
        return sorted(robots, key=lambda i: (weights[i], i))
    if how == "weight-desc":
        return sorted(robots, key=lambda i: (-weights[i], i))
    raise ValueError(f"unknown ordering {how!r}")


def coordinate_descent(order, ground_sets: dict, oracle) -> PlanResult:
    """Sequential greedy: each robot in ``order`` adds its best trajectory
    given its predecessors, or nothing if every option lowers g."""
    calls0 = oracle.calls if hasattr(oracle, "calls") else 0
    S = frozenset()
    values = []
    for i in order:
        gS = oracle(S)
        best, best_v = None, -math.inf
        for a in sorted(ground_sets[i]):
            v = oracle(S | {a})
            if v > best_v:
                best, best_v = a, v
        if best is not None and best_v >= gS:
            S = S | {best}
            values.append(best_v)
    calls = (oracle.calls - calls0) if hasattr(oracle, "calls") else 0
    sol = SolutionSet(S, 1, oracle(S))
    return PlanResult(sol, [sol], len(values), calls, handoffs=max(len(order) - 1, 0), values=values)
