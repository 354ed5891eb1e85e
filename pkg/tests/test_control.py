import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad_vec
from scipy.linalg import expm

from infogather.control import (
    HORIZON_FLOOR,
    BarrierSpec,
    BoxLimits,
    IntegratorSpec,
    LQRSegment,
    ReferencePlan,
    SingularHorizonError,
    WeightedQPSpec,
    assemble_weighted_qp,
    barrier_gradient,
    barrier_h,
    barrier_row,
    box_rows,
    closed_loop_poles,
    decentralized_safety_step,
    gramian,
    gramian_closed_form,
    lqr_control,
    lqr_energy,
    lqr_rate,
    lyapunov_gradient_B,
    lyapunov_rate,
    lyapunov_V,
    map_to_reference,
    pole_place_keta,
    reference_plan_energy,
    rk4_step,
    weight_matrix,
)
from infogather.harness.sim import LoopStats, run_interval
from infogather.qp import solve
from infogather.world import MotionPrimitive, UnicycleState, rollout

vec3 = st.lists(st.floats(-3, 3), min_size=3, max_size=3).map(np.array)


def gramian_quadrature(spec, dt, Rinv):
    A, B = spec.A, spec.B
    f = lambda s: expm(A * s) @ B @ Rinv @ B.T @ expm(A.T * s)  # noqa: E731
    return quad_vec(f, 0.0, dt, epsabs=1e-13, epsrel=1e-12)[0]


@pytest.mark.parametrize("order", [1, 2, 3])
@pytest.mark.parametrize("dt", [0.1, 0.5, 2.0])
def test_gramian_matches_quadrature(order, dt):
    Rinv = np.linalg.inv(np.diag([1.0, 2.0, 0.5]))
    spec = IntegratorSpec(order)
    G = gramian_closed_form(order, dt, Rinv)
    assert np.allclose(G, gramian_quadrature(spec, dt, Rinv), atol=1e-8, rtol=1e-8)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_transition_is_matrix_exponential(order):
    spec = IntegratorSpec(order)
    assert np.allclose(spec.transition(0.7), expm(spec.A * 0.7), atol=1e-12)
    assert np.allclose(spec.input_response(0.7), expm(spec.A * 0.7) @ spec.B, atol=1e-12)


@given(vec3, vec3)
def test_rk4_exact_for_polynomial_flow(p, u):
    spec = IntegratorSpec(2)
    x = np.concatenate([p, -p])
    assert np.allclose(rk4_step(spec, x, u, 0.01), spec.step(x, u, 0.01), atol=1e-12)


def test_gramian_singular_at_end():
    seg = LQRSegment(0.0, 1.0, np.zeros(6), np.ones(6))
    with pytest.raises(SingularHorizonError):
        gramian(1.0, seg)


def test_first_order_control_is_gap_over_horizon():
    seg = LQRSegment(0.0, 2.0, np.zeros(3), np.array([1.0, -2.0, 0.5]), spec=IntegratorSpec(1))
    x = np.array([0.2, 0.1, 0.0])
    u, held = lqr_control(x, 0.5, seg)
    assert not held
    assert np.allclose(u, (seg.x_goal - x) / 1.5)


def test_first_order_energy_example():
    seg = LQRSegment(0.0, 1.0, np.zeros(3), np.array([1.0, 0.0, 0.0]), spec=IntegratorSpec(1))
    assert lqr_energy(seg) == pytest.approx(0.5)


def test_rest_to_rest_energy_example():
    seg = LQRSegment(0.0, 1.0, np.zeros(6), np.array([1.0, 0, 0, 0, 0, 0]))
    assert lqr_energy(seg) == pytest.approx(6.0)


def test_lqr_reaches_goal_and_matches_energy():
    seg = LQRSegment(0.0, 1.0, np.array([0, 0, 0, 0.3, 0, 0.0]), np.array([1.0, 2.0, -1.0, 0, 0.5, 0]))
    spec = seg.spec
    x, effort, dt = seg.x_start.copy(), 0.0, 1e-3
    for k in range(1000):
        u, _ = lqr_control(x, k * dt, seg)
        effort += 0.5 * u @ u * dt
        x = rk4_step(spec, x, u, dt)
    assert np.allclose(x, seg.x_goal, atol=1e-6)
    assert effort == pytest.approx(lqr_energy(seg), rel=1e-3)


def test_control_held_near_end():
    seg = LQRSegment(0.0, 1.0, np.zeros(6), np.ones(6))
    u, held = lqr_control(np.zeros(6), 1.0 - HORIZON_FLOOR / 2, seg, last=[1.0, 2.0, 3.0])
    assert held and np.allclose(u, [1, 2, 3])
    u, held = lqr_control(np.zeros(6), 1.0, seg)
    assert held and np.allclose(u, 0)


@settings(max_examples=40)
@given(vec3, vec3, st.floats(0.0, 0.9))
def test_gradient_identity(p, v, t):
    R = np.diag([1.0, 2.0, 3.0])
    seg = LQRSegment(0.0, 1.0, np.zeros(6), np.array([1.0, 0, 2, 0, 0, 0]), R)
    x = np.concatenate([p, v])
    u, _ = lqr_control(x, t, seg)
    assert np.allclose(lyapunov_gradient_B(x, t, seg), -u @ R, atol=1e-9)


@settings(max_examples=40)
@given(vec3, vec3, vec3, st.floats(0.05, 0.8))
def test_lyapunov_rate_matches_finite_difference(p, v, u, t):
    seg = LQRSegment(0.0, 1.0, np.zeros(6), np.array([1.0, 0, 2, 0.5, 0, 0]))
    x = np.concatenate([p, v])
    h = 1e-5
    xdot = seg.spec.derivative(x, u)
    fd = (lyapunov_V(x + h * xdot, t + h, seg) - lyapunov_V(x - h * xdot, t - h, seg)) / (2 * h)
    assert lyapunov_rate(x, t, seg, u) == pytest.approx(fd, rel=1e-5, abs=1e-5)


@settings(max_examples=40)
@given(vec3, vec3, st.floats(0.0, 0.9))
def test_lqr_rate_is_negative_half_effort(p, v, t):
    seg = LQRSegment(0.0, 1.0, np.zeros(6), np.array([1.0, 0, 2, 0, 0, 0]))
    x = np.concatenate([p, v])
    u, _ = lqr_control(x, t, seg)
    assert lqr_rate(x, t, seg) == pytest.approx(lyapunov_rate(x, t, seg, u), rel=1e-7, abs=1e-9)
    assert lqr_rate(x, t, seg) <= 0


def test_map_to_reference_uses_outgoing_speed():
    s = UnicycleState(1.0, 2.0, math.pi / 2, 3.0)
    ref = map_to_reference(s, MotionPrimitive(2.0, 0.3))
    assert np.allclose(ref, [1, 2, 3, 0, 2, 0], atol=1e-12)
    assert np.allclose(map_to_reference(s, None)[3:], 0)
    assert np.allclose(map_to_reference(s, None, order=1), [1, 2, 3])
    with pytest.raises(ValueError):
        map_to_reference(s, None, order=3)


def test_reference_plan_segments():
    controls = [MotionPrimitive(1.0, 0.0), MotionPrimitive(1.0, 0.5)]
    states = rollout(UnicycleState(0.0, 0.0), controls, 0.5)
    plan = ReferencePlan.from_trajectory(states, controls, 0.5, t0=10.0)
    assert np.allclose(plan.times, [10.0, 10.5, 11.0])
    assert plan.index_at(10.7) == 1 and plan.index_at(99.0) == 1 and plan.index_at(0.0) == 0
    segs = plan.segments()
    assert segs[1].t0 == 10.5 and np.allclose(segs[0].x_goal, segs[1].x_start)
    assert reference_plan_energy(states, controls) == pytest.approx(sum(lqr_energy(s) for s in segs))
    with pytest.raises(ValueError):
        ReferencePlan([0.0, 0.0], np.zeros((2, 6)))


def test_stop_plan_costs_nothing():
    stop = [MotionPrimitive(0.0, 0.0)] * 3
    states = rollout(UnicycleState(1.0, 1.0), stop, 0.5)
    assert reference_plan_energy(states, stop) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("poles,expected", [((-5.0, -5.1), [25.5, 10.1]), ((-3.0, -3.1), [9.3, 6.1])])
def test_pole_placement_examples(poles, expected):
    K = pole_place_keta(poles)
    assert np.allclose(K, expected)
    assert np.allclose(np.sort(closed_loop_poles(K).real), np.sort(poles))


def test_pole_placement_rejects_unstable():
    with pytest.raises(ValueError):
        pole_place_keta([-1.0, 0.5])
    with pytest.raises(ValueError):
        BarrierSpec(K_eta=(-1.0, 1.0))


def test_barrier_example():
    spec = BarrierSpec(0.5, 1.0)
    xi, xj = np.array([1.0, 0, 0]), np.zeros(3)
    assert barrier_h(xi, xj, spec) == pytest.approx(0.9375)
    assert np.allclose(barrier_gradient(xi, xj, spec), [4.0, 0.0, 0.0])


def test_barrier_vertical_scaling():
    spec = BarrierSpec(0.5, 2.0)
    assert barrier_h(np.array([0, 0, 2.0]), np.zeros(3), spec) == pytest.approx(1 - 0.0625)


@settings(max_examples=40)
@given(vec3, vec3)
def test_barrier_gradient_finite_difference(p, q):
    spec = BarrierSpec(0.5, 1.5)
    g = barrier_gradient(p, q, spec)
    e = 1e-6
    fd = [(barrier_h(p + e * d, q, spec) - barrier_h(p - e * d, q, spec)) / (2 * e) for d in np.eye(3)]
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-5)


@settings(max_examples=40)
@given(vec3, vec3, vec3, vec3)
def test_barrier_derivatives_finite_difference(p, q, v, w):
    spec = BarrierSpec(0.5, 1.5)
    xi, xj = np.concatenate([p, v]), np.concatenate([q, w])
    row = barrier_row(xi, xj, spec)
    e = 1e-5
    h = lambda t: barrier_h(p + t * v, q + t * w, spec)  # noqa: E731
    hdot = (h(e) - h(-e)) / (2 * e)
    hddot = (h(e) - 2 * h(0) + h(-e)) / e**2
    assert row.eta[0] == pytest.approx(h(0))
    assert row.eta[1] == pytest.approx(hdot, rel=1e-5, abs=1e-4)
    assert row.drift == pytest.approx(hddot, rel=1e-3, abs=1e-2)
    assert row.b == pytest.approx(25.5 * row.eta[0] + 10.1 * row.eta[1] + row.drift)


def test_first_order_barrier_row():
    spec = BarrierSpec(0.5, 1.0, (4.0,))
    row = barrier_row(np.array([1.0, 0, 0]), np.zeros(3), spec)
    assert row.b == pytest.approx(4.0 * 0.9375) and row.drift == 0.0


@given(vec3.filter(lambda u: np.linalg.norm(u) > 1e-3), st.floats(0.0, 5.0))
def test_weight_matrix_spectrum(u, beta):
    W = weight_matrix(u, np.eye(3), beta)
    assert np.allclose(np.sort(np.linalg.eigvalsh(W)), [1.0, 1.0, 1.0 + beta])
    assert np.allclose(W @ u, (1 + beta) * u)


def test_weight_matrix_zero_nominal():
    assert np.array_equal(weight_matrix(np.zeros(3), np.eye(3), 2.0), np.eye(3))


def test_identity_weight_gives_projection():
    # one halfspace u_x >= 1 from nominal 0: projection is (1, 0, 0)
    spec = WeightedQPSpec(0.0)
    barrier = BarrierSpec(0.5, 1.0, (4.0,))
    xi, xj = np.array([0.6, 0, 0]), np.zeros(3)
    row = barrier_row(xi, xj, barrier)
    qp, n_pair = assemble_weighted_qp(xi, np.array([-10.0, 0.0, 0.0]), [xj], barrier, spec, order=1)
    assert n_pair == 1
    sol = solve(qp)
    need = -0.5 * row.b / row.A[0]
    assert np.allclose(sol.u, [need, 0, 0], atol=1e-9)


def test_box_rows_bound_acceleration():
    G, h = box_rows(np.zeros(6), BoxLimits(u_max=2.0))
    assert G.shape == (6, 3) and np.allclose(h, 2.0)
    G, h = box_rows(np.zeros(6), BoxLimits())
    assert G.shape == (0, 3)


def test_box_rows_position_and_velocity():
    box = BoxLimits(v_max=1.0, p_min=(-1, -1, 0), p_max=(1, 1, 2))
    x = np.array([0.5, 0, 1, 0.2, 0, 0])
    G, h = box_rows(x, box)
    assert G.shape == (12, 3)
    assert h[0] == pytest.approx(5.0 * 0.8)
    assert h[6] == pytest.approx(25.5 * 0.5 - 10.1 * 0.2)


def head_on(beta):
    barrier = BarrierSpec(0.5, 1.0)
    spec = WeightedQPSpec(beta, box=BoxLimits(u_max=20.0))
    a = np.array([-3.0, 0.01, 0, 0, 0, 0])
    b = np.array([3.0, -0.01, 0, 0, 0, 0])
    segs = [LQRSegment(0, 4, a, b.copy()), LQRSegment(0, 4, b, a.copy())]
    stats = LoopStats(2)
    final, _, _ = run_interval([a, b], segs, 0.0, 4.0, 0.01, barrier, spec, stats)
    return final, stats


@pytest.mark.parametrize("beta", [0.0, 1.0])
def test_head_on_swap_stays_safe(beta):
    final, stats = head_on(beta)
    assert stats.min_h >= 0
    assert stats.infeasible_steps == 0
    assert stats.active_steps > 0


def test_unfiltered_head_on_collides():
    barrier = BarrierSpec(0.5, 1.0)
    a = np.array([-3.0, 0, 0, 0, 0, 0])
    b = np.array([3.0, 0, 0, 0, 0, 0])
    segs = [LQRSegment(0, 4, a, b.copy()), LQRSegment(0, 4, b, a.copy())]
    stats = LoopStats(2)
    run_interval([a, b], segs, 0.0, 4.0, 0.01, barrier, WeightedQPSpec(), stats, filtered=False)
    assert stats.min_h < 0


def test_safety_step_infeasible_falls_back_to_zero():
    barrier = BarrierSpec(0.5, 1.0)
    spec = WeightedQPSpec(0.0, box=BoxLimits(u_max=0.1))
    xi = np.array([0.0, 0, 0, 1.0, 0, 0])
    xj = np.array([1.0, 0, 0, -1.0, 0, 0])
    assert barrier_row(xi, xj, barrier).b < -8
    step = decentralized_safety_step([xi, xj], np.zeros((2, 3)), barrier, spec)
    assert all(step.infeasible)
    assert np.allclose(step.controls, 0)


def test_safety_step_passes_nominal_when_inactive():
    barrier = BarrierSpec(0.5, 1.0)
    xs = [np.array([0.0, 0, 0, 0, 0, 0]), np.array([10.0, 0, 0, 0, 0, 0])]
    nominal = np.array([[0.3, 0.1, 0.0], [-0.2, 0.0, 0.1]])
    step = decentralized_safety_step(xs, nominal, barrier, WeightedQPSpec(1.0))
    assert np.allclose(step.controls, nominal, atol=1e-12)
    assert step.min_pair_residual > 0
