"""Kalman filtering over stacked independent targets and the offset
information-minus-energy set function used by every planner."""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .world import TargetModel

EIG_FLOOR = 1e-9


class NumericalError(ArithmeticError):
    """A covariance lost positive definiteness."""


@dataclass
class Belief:
    """Gaussian belief over ``n_t`` independent targets of dimension ``d``.

    ``mean`` has shape (n_t, d) and ``cov`` (n_t, d, d).
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_2d(np.asarray(self.mean, dtype=float))
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 2:
            cov = cov[None]
        self.cov = cov
        if self.cov.shape != self.mean.shape + (self.mean.shape[1],):
            raise ValueError("mean/cov shape mismatch")

    @property
    def n_targets(self) -> int:
        return self.mean.shape[0]

    def copy(self) -> "Belief":
        return Belief(self.mean.copy(), self.cov.copy())


def _check_square(cov, A):
    if cov.shape[-1] != A.shape[0] or cov.shape[-2] != A.shape[1]:
        raise ValueError(f"dimension mismatch: cov {cov.shape} vs A {A.shape}")


def kf_predict(cov, A, W) -> np.ndarray:
    """A cov A^T + W; works on a single matrix or a stack."""
    cov = np.asarray(cov, dtype=float)
    A = np.atleast_2d(A)
    _check_square(cov, A)
    out = A @ cov @ A.T + W
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def sqrt_factor(P) -> np.ndarray:
    """L with P = L L^T. Falls back to an eigenvalue-clamped factor for
    nearly singular P; genuinely indefinite P raises NumericalError."""
    P = np.asarray(P, dtype=float)
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        pass
    lam, U = np.linalg.eigh(P)
    scale = max(1.0, float(np.abs(lam).max()))
    if lam.min() < -1e-8 * scale:
        raise NumericalError(f"covariance not PSD (eigmin {lam.min():.3e})")
    lam = np.maximum(lam, EIG_FLOOR)
    return U * np.sqrt(lam)[..., None, :]


def update_with_gain(P, M):
    """Information-form update in square-root coordinates.

    Returns (posterior covariance, 0.5*logdet(P) - 0.5*logdet(posterior)).
    Only I + L^T M L (eigenvalues >= 1) is inverted.
    """
    L = sqrt_factor(P)
    d = P.shape[-1]
    S = np.eye(d) + np.swapaxes(L, -1, -2) @ M @ L
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    C = np.linalg.cholesky(S)
    X = np.linalg.solve(C, np.swapaxes(L, -1, -2))  # C^-1 L^T
    post = np.swapaxes(X, -1, -2) @ X
    gain = np.sum(np.log(np.diagonal(C, axis1=-2, axis2=-1)), axis=-1)
    return 0.5 * (post + np.swapaxes(post, -1, -2)), gain


def kf_update(cov, info_matrices) -> np.ndarray:
    """(cov^-1 + sum M)^-1 without inverting cov directly."""
    cov = np.asarray(cov, dtype=float)
    info_matrices = list(info_matrices)
    if not info_matrices:
        return cov.copy()
    M = np.sum(info_matrices, axis=0)
    if M.shape != cov.shape:
        raise ValueError("information matrix shape mismatch")
    if cov.ndim == 2:
        lam = np.linalg.eigvalsh(cov)
        if lam.min() <= 0:
            raise np.linalg.LinAlgError("covariance is singular")
    post, _ = update_with_gain(cov, M)
    return post


def logdet(cov) -> np.ndarray:
    lam = np.linalg.eigvalsh(cov)
    return np.sum(np.log(np.maximum(lam, EIG_FLOOR)), axis=-1)


@dataclass
class OracleContext:
    prior: Belief
    model: TargetModel
    horizon: int
    omega: float = 0.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.omega < 0:
            raise ValueError("offset must be non-negative")

    def predicted_means(self) -> np.ndarray:
        """Open-loop mean prediction, shape (K, n_t, d) for steps 1..K."""
        out = []
        mu = self.prior.mean
        for _ in range(self.horizon):
            mu = mu @ self.model.A.T
            out.append(mu)
        return np.array(out)

    def empty_info(self) -> np.ndarray:
        n_t, d = self.prior.mean.shape
        return np.zeros((self.horizon, n_t, d, d))


def offset(weights, c_max) -> float:
    """Non-negativity offset sum_i m_i c_max_i."""
    return float(np.sum(np.asarray(weights, float) * np.asarray(c_max, float)))


def rollout_information(ctx: OracleContext, info_seq) -> float:
    """MI in nats of a summed per-step information sequence (K, n_t, d, d)."""
    cov = ctx.prior.cov
    A, W = ctx.model.A, ctx.model.W
    total = 0.0
    for k in range(ctx.horizon):
        P = kf_predict(cov, A, W)
        M = info_seq[k]
        if not np.any(M):
            cov = P
            continue
        cov, gain = update_with_gain(P, M)
        total += float(np.sum(gain))
    return total


def mutual_information(ctx: OracleContext, S) -> float:
    """MI between target states and the measurements of trajectories ``S``.

    Each element of ``S`` carries ``info`` of shape (K, n_t, d, d): its
    sensor information at steps 1..K, linearized at the predicted means.
    """
    S = list(S)
    if not S:
        return 0.0
    info = np.sum([a.info for a in S], axis=0)
    return max(0.0, rollout_information(ctx, info))


def oracle_g(ctx: OracleContext, S) -> float:
    S = list(S)
    return mutual_information(ctx, S) - sum(a.energy for a in S) + ctx.omega


class Oracle:
    """Memoized g(S) = MI(S) - C(S) + offset over a fixed ground set.

    ``calls`` counts every query (the planner cost metric); ``evaluations``
    counts cache misses. The cache is insert-only and shared safely between
    threads.
    """

    def __init__(self, ctx: OracleContext, candidates):
        self.ctx = ctx
        self.items = {a.id: a for a in candidates}
        self.calls = 0
        self.evaluations = 0
        self._cache: dict = {}
        self._lock = threading.Lock()

    @staticmethod
    def key(S) -> tuple:
        return tuple(sorted(S))

    def robot_of(self, a) -> int:
        return self.items[a].robot

    def mi(self, S) -> float:
        return mutual_information(self.ctx, [self.items[a] for a in S])

    def energy(self, S) -> float:
        return float(sum(self.items[a].energy for a in S))

    def objective(self, S) -> float:
        return self(S) - self.ctx.omega

    def __call__(self, S) -> float:
        key = self.key(S)
        with self._lock:
            self.calls += 1
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        for a in key:
            if a not in self.items:
                raise KeyError(f"unknown trajectory {a!r}")
        value = oracle_g(self.ctx, [self.items[a] for a in key])
        with self._lock:
            self.evaluations += 1
            self._cache.setdefault(key, value)
        return value

    def marginal(self, a, S) -> float:
        S = set(S)
        return self(S | {a}) - self(S)

    def standalone_gain(self, a) -> float:
        return self({a}) - self(())

    def reset_counters(self):
        self.calls = 0
        self.evaluations = 0
