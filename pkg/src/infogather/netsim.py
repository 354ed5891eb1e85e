"""Deterministic discrete-event message passing with sampled link delays,
plus the full-team proposal resolution used by distributed local search."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

INIT = "init"
PROPOSAL = "proposal"
PHASE = "phase-ctrl"


class NetworkError(RuntimeError):
    pass


class DeadlockError(NetworkError):
    """A synchronization barrier never completed."""


@dataclass(frozen=True)
class NetMessage:
    sender: int
    receiver: int
    kind: str
    payload: object
    send_time: float
    deliver_time: float


@dataclass
class DelayModel:
    """Per-message link delay in seconds."""

    distribution: str = "constant"
    value: float = 0.0
    lo: float = 0.0
    hi: float = 0.0
    mu: float = 0.0
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.distribution not in ("constant", "uniform", "normal"):
            raise ValueError(f"unknown delay distribution {self.distribution!r}")
        if self.distribution == "constant" and self.value < 0:
            raise ValueError("constant delay must be non-negative")
        if self.distribution == "uniform" and not (0 <= self.lo <= self.hi):
            raise ValueError("uniform delay needs 0 <= lo <= hi")
        self._rng = np.random.default_rng(self.seed)

    @classmethod
    def from_mean_ms(cls, mean_ms: float, seed: int = 0) -> "DelayModel":
        """Uniform delay on [0.2, 1.8] x mean."""
        m = mean_ms * 1e-3
        if m <= 0:
            return cls("constant", 0.0, seed=seed)
        return cls("uniform", lo=0.2 * m, hi=1.8 * m, seed=seed)

    @property
    def mean(self) -> float:
        if self.distribution == "constant":
            return self.value
        if self.distribution == "uniform":
            return 0.5 * (self.lo + self.hi)
        return self.mu

    def sample(self) -> float:
        if self.distribution == "constant":
            return self.value
        if self.distribution == "uniform":
            return float(self._rng.uniform(self.lo, self.hi))
        return max(0.0, float(self._rng.normal(self.mu, self.sigma)))


class Network:
    """All-to-all network among ``n`` robots.

    Delivery is FIFO per (sender, receiver) pair: a message never overtakes an
    earlier one on the same link.
    """

    def __init__(self, n: int, delay: DelayModel | None = None):
        self.n = n
        self.delay = delay or DelayModel()
        self._queue: list = []
        self._seq = itertools.count()
        self._last: dict = {}
        self.sent = 0
        self.delivered = 0
        self.now = 0.0

    def broadcast(self, sender: int, kind: str, payload, send_time: float) -> list[NetMessage]:
        if not 0 <= sender < self.n:
            raise NetworkError(f"unregistered sender {sender}")
        out = []
        for r in range(self.n):
            if r == sender:
                continue
            t = send_time + self.delay.sample()
            t = max(t, self._last.get((sender, r), t))
            self._last[(sender, r)] = t
            msg = NetMessage(sender, r, kind, payload, send_time, t)
            heapq.heappush(self._queue, (t, next(self._seq), msg))
            out.append(msg)
        self.sent += len(out)
        return out

    def pending(self) -> int:
        return len(self._queue)

    def pop(self) -> NetMessage:
        t, _, msg = heapq.heappop(self._queue)
        self.now = max(self.now, t)
        self.delivered += 1
        return msg

    def gather(self, kind: str, expected: int, timeout: float = float("inf")) -> dict:
        """Deliver messages until every robot holds ``expected`` messages of
        ``kind``. Returns {receiver: [messages]}; raises DeadlockError if the
        queue drains or the logical ``timeout`` passes first."""
        inbox = {r: [] for r in range(self.n)}
        start = self.now
        while any(len(v) < expected for v in inbox.values()):
            if not self._queue:
                raise DeadlockError(f"barrier on {kind!r} incomplete: queue empty")
            if self._queue[0][0] - start > timeout:
                raise DeadlockError(f"barrier on {kind!r} timed out")
            msg = self.pop()
            if msg.kind != kind:
                raise NetworkError(f"unexpected {msg.kind!r} message during {kind!r} barrier")
            inbox[msg.receiver].append(msg)
        return inbox


def resolve_round(proposals, n_robots: int | None = None):
    """Pick the common proposal from one proposal per robot.

    Highest ``new_value`` among non-sentinels wins; the lower proposer index
    breaks ties. Returns a sentinel only when every proposal is one.
    """
    proposals = list(proposals)
    if n_robots is not None:
        seen = sorted(p.proposer for p in proposals)
        if seen != list(range(n_robots)):
            missing = sorted(set(range(n_robots)) - set(seen))
            raise DeadlockError(f"no proposal from robots {missing}")
    best = None
    for p in sorted(proposals, key=lambda p: p.proposer):
        if p.is_sentinel:
            continue
        if best is None or p.new_value > best.new_value:
            best = p
    if best is None:
        return min(proposals, key=lambda p: p.proposer)
    return best


@dataclass
class ExchangeLog:
    rounds: int = 0
    round_times: list = field(default_factory=list)
