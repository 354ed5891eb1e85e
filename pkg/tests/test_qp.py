import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infogather.qp import INFEASIBLE, MAX_ITER, OPTIMAL, QPInstance, kkt_residual, solve


def fista_dual(qp, iters=200_000, tol=1e-14):
    """Reference solver: accelerated projected gradient on the dual with
    adaptive restart, u(lam) = -P^{-1} (q + G^T lam)."""
    Pinv = np.linalg.inv(qp.P)
    Q = qp.G @ Pinv @ qp.G.T
    c = qp.G @ Pinv @ qp.q + qp.h
    L = max(np.linalg.eigvalsh(Q).max(), 1e-12)
    lam = np.zeros(qp.m)
    y, t = lam.copy(), 1.0
    for _ in range(iters):
        new = np.maximum(y - (Q @ y + c) / L, 0.0)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        if (new - lam) @ (Q @ new + c) > 0:  # restart when the dual stops improving
            y, t = new.copy(), 1.0
        else:
            y = new + (t - 1) / t_new * (new - lam)
            t = t_new
        step = np.abs(new - lam).max()
        lam = new
        if step < tol:
            break
    return -Pinv @ (qp.q + qp.G.T @ lam), lam


def random_qp(rng, n=3, m=None):
    m = rng.integers(1, 9) if m is None else m
    X = rng.normal(size=(n, n))
    P = X @ X.T + 0.5 * np.eye(n)
    q = rng.normal(size=n) * 3
    G = rng.normal(size=(m, n))
    u_feas = rng.normal(size=n)
    h = G @ u_feas + rng.uniform(0.0, 1.0, size=m)
    return QPInstance(P, q, G, h)


def test_unconstrained():
    sol = solve(QPInstance(np.diag([2.0, 4.0]), [-2.0, -4.0]))
    assert sol.ok and np.allclose(sol.u, [1.0, 1.0])


def test_halfspace_example():
    qp = QPInstance(np.eye(2), [-1.0, -1.0], [[1.0, 1.0]], [0.0])
    sol = solve(qp)
    assert sol.status == OPTIMAL
    assert np.allclose(sol.u, [0.0, 0.0], atol=1e-12)
    assert np.allclose(sol.multipliers, [1.0])
    assert sol.active == [0]


def test_inactive_constraint_has_zero_multiplier():
    qp = QPInstance(np.eye(2), [-1.0, 0.0], [[1.0, 0.0]], [5.0])
    sol = solve(qp)
    assert np.allclose(sol.u, [1.0, 0.0]) and sol.active == [] and np.allclose(sol.multipliers, 0)


def test_infeasible_detected():
    qp = QPInstance(np.eye(1), [0.0], [[1.0], [-1.0]], [-1.0, -1.0])
    assert solve(qp).status == INFEASIBLE


def test_redundant_rows():
    qp = QPInstance(np.eye(2), [-2.0, -2.0], [[1.0, 0], [2.0, 0], [1.0, 0]], [1.0, 2.0, 1.0])
    sol = solve(qp)
    assert sol.ok and np.allclose(sol.u, [1.0, 2.0])
    assert sol.kkt_residual <= 1e-8


def test_badly_scaled_rows():
    qp = QPInstance(np.eye(2), [-1.0, -1.0], [[1e6, 1e6], [1e-6, 0.0]], [0.0, 1e-6])
    sol = solve(qp)
    assert sol.ok and np.allclose(sol.u, [0.0, 0.0], atol=1e-10)


def test_rejects_indefinite():
    with pytest.raises(ValueError):
        QPInstance(np.diag([1.0, -1.0]), [0.0, 0.0])
    with pytest.raises(ValueError):
        QPInstance(np.eye(2), [0.0, 0.0], [[1.0, 0.0]], [1.0, 2.0])


def test_iteration_limit():
    rng = np.random.default_rng(0)
    qp = random_qp(rng, 3, 8)
    sol = solve(qp, max_iter=1)
    assert sol.status in (MAX_ITER, OPTIMAL)


def test_matches_reference_on_500_instances():
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for _ in range(500):
        qp = random_qp(rng)
        sol = solve(qp)
        assert sol.ok
        ref, _ = fista_dual(qp)
        err = np.linalg.norm(sol.u - ref) / max(1.0, np.linalg.norm(ref))
        worst = max(worst, err)
        assert err <= 1e-6
        assert sol.kkt_residual <= 1e-8
    assert worst <= 1e-6


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_kkt_at_solution(seed):
    qp = random_qp(np.random.default_rng(seed))
    sol = solve(qp)
    assert sol.ok
    assert kkt_residual(qp, sol.u, sol.multipliers) <= 1e-8
    assert np.all(sol.multipliers >= 0)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_deterministic_and_warm_start_invariant(seed):
    rng = np.random.default_rng(seed)
    qp = random_qp(rng)
    a, b = solve(qp), solve(qp)
    assert np.array_equal(a.u, b.u) and a.active == b.active
    warm = list(rng.permutation(qp.m)[: rng.integers(0, qp.m + 1)])
    c = solve(qp, warm_start=warm)
    assert c.ok
    assert np.allclose(c.u, a.u, atol=1e-9, rtol=1e-9)


def test_warm_start_from_previous_active_set():
    rng = np.random.default_rng(5)
    qp = random_qp(rng, 3, 6)
    first = solve(qp)
    again = solve(qp, warm_start=first.active)
    assert np.allclose(again.u, first.u, atol=1e-10)
    assert again.iterations <= first.iterations
