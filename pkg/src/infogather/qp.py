"""Dense strictly convex QP solver for the per-robot safety filter.

Solves  min 0.5 u^T P u + q^T u  s.t.  G u <= h  with the dual active-set
method of Goldfarb and Idnani: start at the unconstrained minimizer and add
violated constraints one at a time while keeping the multipliers
non-negative. Problems here have n = 3 and a handful of rows, so the
reduced Hessian is rebuilt from scratch at every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max-iter"

FEAS_TOL = 1e-8
KKT_TOL = 1e-8
DUAL_TOL = 1e-10
_PIVOT_TOL = 1e-12


@dataclass
class QPInstance:
    P: np.ndarray
    q: np.ndarray
    G: np.ndarray = None
    h: np.ndarray = None

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        self.q = np.asarray(self.q, dtype=float).ravel()
        n = self.q.size
        if self.G is None:
            self.G = np.zeros((0, n))
            self.h = np.zeros(0)
        self.G = np.asarray(self.G, dtype=float).reshape(-1, n)
        self.h = np.asarray(self.h, dtype=float).ravel()
        if self.P.shape != (n, n) or self.G.shape[0] != self.h.size:
            raise ValueError("inconsistent QP dimensions")
        if np.linalg.eigvalsh(0.5 * (self.P + self.P.T)).min() <= 1e-12:
            raise ValueError("P must be positive definite")

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def m(self) -> int:
        return self.h.size

    def objective(self, u) -> float:
        return float(0.5 * u @ self.P @ u + self.q @ u)


@dataclass
class QPSolution:
    u: np.ndarray
    status: str
    active: list = field(default_factory=list)
    multipliers: np.ndarray = None
    kkt_residual: float = np.inf
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def kkt_residual(qp: QPInstance, u, lam) -> float:
    """max of stationarity, primal infeasibility, dual infeasibility and
    complementarity violations (constraint rows scaled to unit norm)."""
    norms = np.linalg.norm(qp.G, axis=1) if qp.m else np.zeros(0)
    norms = np.where(norms > 0, norms, 1.0)
    stat = qp.P @ u + qp.q + (qp.G.T @ lam if qp.m else 0.0)
    if not qp.m:
        return float(np.abs(stat).max(initial=0.0))
    slack = (qp.h - qp.G @ u) / norms
    terms = [
        np.abs(stat).max(initial=0.0),
        np.maximum(-slack, 0).max(initial=0.0),
        np.maximum(-lam * norms, 0).max(initial=0.0),
        np.abs(lam * norms * slack).max(initial=0.0),
    ]
    return float(max(terms))


def solve(qp: QPInstance, warm_start=None, max_iter: int | None = None) -> QPSolution:
    """Solve ``qp``. ``warm_start`` is an iterable of row indices tried first
    when choosing violated constraints; it changes only the path."""
    n, m = qp.n, qp.m
    max_iter = max_iter or 100 * (n + m)
    Pinv = np.linalg.inv(0.5 * (qp.P + qp.P.T))
    Pinv = 0.5 * (Pinv + Pinv.T)
    u = -Pinv @ qp.q
    if m == 0:
        return QPSolution(u, OPTIMAL, [], np.zeros(0), kkt_residual(qp, u, np.zeros(0)), 0)

    # Row-normalize so tolerances are scale free: N_j^T u >= b_j.
    scale = np.linalg.norm(qp.G, axis=1)
    scale = np.where(scale > 0, scale, 1.0)
    N = -(qp.G / scale[:, None]).T
    b = -qp.h / scale
    preferred = [j for j in (warm_start or []) if 0 <= j < m]

    active: list[int] = []
    lam: list[float] = []
    it = 0
    while True:
        s = N.T @ u - b
        cand = [j for j in range(m) if j not in active and s[j] < -FEAS_TOL]
        if not cand:
            break
        warm = [j for j in preferred if j in cand]
        p = warm[0] if warm else min(cand, key=lambda j: (s[j], j))
        lam_plus = lam + [0.0]
        while True:
            it += 1
            if it > max_iter:
                return _finish(qp, u, active, lam, scale, MAX_ITER, it)
            np_ = N[:, p]
            if active:
                NA = N[:, active]
                Minv_rhs = np.linalg.solve(NA.T @ Pinv @ NA, NA.T @ Pinv)
                H = Pinv - Pinv @ NA @ Minv_rhs
                r = Minv_rhs @ np_
            else:
                H = Pinv
                r = np.zeros(0)
            z = H @ np_
            t1, k = np.inf, None
            for j, rj in enumerate(r):
                if rj > _PIVOT_TOL:
                    ratio = lam_plus[j] / rj
                    if ratio < t1:
                        t1, k = ratio, j
            zn = float(z @ np_)
            t2 = np.inf if zn <= _PIVOT_TOL * max(1.0, np.linalg.norm(z)) else -(np_ @ u - b[p]) / zn
            if not np.isfinite(t1) and not np.isfinite(t2):
                return _finish(qp, u, active, lam, scale, INFEASIBLE, it)
            if not np.isfinite(t2):
                for j in range(len(r)):
                    lam_plus[j] -= t1 * r[j]
                lam_plus[-1] += t1
                del active[k]
                del lam_plus[k]
                continue
            t = min(t1, t2)
            u = u + t * z
            for j in range(len(r)):
                lam_plus[j] -= t * r[j]
            lam_plus[-1] += t
            if t2 <= t1:
                active.append(p)
                lam = [max(v, 0.0) for v in lam_plus]
                break
            del active[k]
            del lam_plus[k]
    return _finish(qp, u, active, lam, scale, OPTIMAL, it)


def _finish(qp, u, active, lam, scale, status, it):
    full = np.zeros(qp.m)
    for j, v in zip(active, lam):
        full[j] = v / scale[j]
    res = kkt_residual(qp, u, full)
    if status == OPTIMAL and res > KKT_TOL:
        # polish: re-solve the equality-constrained problem on the active set
        u, full = _polish(qp, active, u, full)
        res = kkt_residual(qp, u, full)
    return QPSolution(u, status, sorted(active), full, res, it)


def _polish(qp, active, u, lam):
    if not active:
        return -np.linalg.solve(qp.P, qp.q), lam
    A = qp.G[active]
    n, k = qp.n, len(active)
    K = np.block([[qp.P, A.T], [A, np.zeros((k, k))]])
    rhs = np.concatenate([-qp.q, qp.h[active]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return u, lam
    full = np.zeros(qp.m)
    full[active] = sol[n:]
    return sol[:n], full
