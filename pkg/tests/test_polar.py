import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import angle_gap, bounded_d, grid_alpha, grid_beta

from priest import _backend
from priest.basis import State, build_basis, build_boundary_system, evaluate, fit_waypoints
from priest.polar import (
    Limits,
    Obstacle,
    PolarVariables,
    build_constraint_system,
    compute_e,
    residual,
    stack_obstacles,
    update_alpha,
    update_beta,
    update_d,
)

LIMITS = Limits(2.0, 3.0, np.full(3, -50.0), np.full(3, 50.0))


def _rest_to_rest(basis, start, goal):
    """Quintic rest-to-rest profile, exactly representable in the basis."""
    bc = build_boundary_system(basis, State.at_rest(start), goal)
    s = np.linspace(0, 1, basis.n_p)[:, None]
    h = 10 * s**3 - 15 * s**4 + 6 * s**5
    return fit_waypoints(basis, bc, (1 - h) * start + h * goal)


def _instance(rng, n_p=1):
    pos = rng.normal(scale=2.0, size=(n_p, 3))
    vel = rng.normal(scale=2.0, size=(n_p, 3))
    acc = rng.normal(scale=3.0, size=(n_p, 3))
    center = rng.normal(scale=2.0, size=3)
    a, b = rng.uniform(0.3, 2.0, size=2)
    return pos, vel, acc, Obstacle.static(center, a, b, n_p)


def _solve_all(pos, vel, acc, obs, limits=LIMITS):
    polar = update_alpha(pos, vel, acc, [obs])
    update_beta(pos, vel, acc, [obs], polar)
    update_d(pos, vel, acc, [obs], limits, polar)
    return polar


def test_limits_and_obstacle_validation():
    with pytest.raises(ValueError):
        Limits(0.0, 1.0, np.zeros(3), np.ones(3))
    with pytest.raises(ValueError):
        Limits(1.0, 1.0, np.ones(3), np.ones(3))
    with pytest.raises(ValueError):
        Obstacle.static([0, 0, 0], 0.0, 1.0, 5)
    with pytest.raises(ValueError):
        Obstacle(np.zeros((5, 2)), 1.0, 1.0)


def test_stack_obstacles_shapes_and_mismatch():
    obs = [Obstacle.static([1, 2, 3], 0.5, 0.7, 10), Obstacle.static([0, 0, 0], 1.0, 1.0, 10)]
    centers, a, b = stack_obstacles(obs, 10)
    assert centers.shape == (2, 10, 3)
    assert np.array_equal(a, [0.5, 1.0]) and np.array_equal(b, [0.7, 1.0])
    assert stack_obstacles([], 10)[0].shape == (0, 10, 3)
    with pytest.raises(ValueError):
        stack_obstacles(obs, 11)


def test_moving_obstacle_follows_velocity():
    t = np.linspace(0, 2, 5)
    o = Obstacle.moving([1.0, 0.0, 0.0], [0.5, -1.0, 0.0], 0.3, 0.3, t)
    assert np.allclose(o.center[-1], [2.0, -2.0, 0.0])


def test_alpha_matches_grid_search_per_block():
    rng = np.random.default_rng(0)
    for _ in range(100):
        pos, vel, acc, obs = _instance(rng)
        polar = _solve_all(pos, vel, acc, obs)
        beta, d = rng.uniform(0.2, np.pi - 0.2), rng.uniform(0.5, 3.0)
        for got, u in (
            (polar.alpha_o[0, 0], pos[0] - obs.center[0]),
            (polar.alpha_v[0], vel[0]),
            (polar.alpha_a[0], acc[0]),
        ):
            ref, step = grid_alpha(u, beta, d)
            assert angle_gap(got, ref) <= 2 * step


def test_beta_matches_grid_search_in_scaled_metric():
    rng = np.random.default_rng(1)
    for _ in range(100):
        pos, vel, acc, obs = _instance(rng)
        polar = _solve_all(pos, vel, acc, obs)
        d = rng.uniform(0.5, 3.0)
        cases = (
            (polar.beta_o[0, 0], polar.alpha_o[0, 0], pos[0] - obs.center[0], (obs.a, obs.a, obs.b)),
            (polar.beta_v[0], polar.alpha_v[0], vel[0], (1.0, 1.0, 1.0)),
            (polar.beta_a[0], polar.alpha_a[0], acc[0], (1.0, 1.0, 1.0)),
        )
        for got, alpha, u, scale in cases:
            ref, step = grid_beta(u, alpha, d, scale)
            assert abs(got - ref) <= 2 * step


def test_beta_of_sphere_matches_unscaled_grid_search():
    rng = np.random.default_rng(2)
    for _ in range(50):
        pos = rng.normal(size=(1, 3))
        obs = Obstacle.static(rng.normal(size=3), 0.8, 0.8, 1)
        polar = _solve_all(pos, pos, pos, obs)
        ref, step = grid_beta(pos[0] - obs.center[0], polar.alpha_o[0, 0], rng.uniform(0.5, 2.0))
        assert abs(polar.beta_o[0, 0] - ref) <= 2 * step


def test_d_matches_bounded_search_per_block():
    rng = np.random.default_rng(3)
    for _ in range(100):
        pos, vel, acc, obs = _instance(rng)
        polar = _solve_all(pos, vel, acc, obs)
        u = np.array([np.cos(polar.alpha_o[0, 0]) * np.sin(polar.beta_o[0, 0]), np.sin(polar.alpha_o[0, 0]) * np.sin(polar.beta_o[0, 0]), np.cos(polar.beta_o[0, 0])])
        m = np.array([obs.a, obs.a, obs.b]) * u
        ref = bounded_d(pos[0] - obs.center[0], m, 1.0, 1e3)
        assert abs(polar.d_o[0, 0] - ref) <= 1e-6
        for d, alpha, beta, x, bound in (
            (polar.d_v[0], polar.alpha_v[0], polar.beta_v[0], vel[0], LIMITS.v_max),
            (polar.d_a[0], polar.alpha_a[0], polar.beta_a[0], acc[0], LIMITS.a_max),
        ):
            m = bound * np.array([np.cos(alpha) * np.sin(beta), np.sin(alpha) * np.sin(beta), np.cos(beta)])
            assert abs(d - bounded_d(x, m, 0.0, 1.0)) <= 1e-6


def test_zero_offsets_give_defined_angles():
    pos = np.zeros((2, 3))
    obs = Obstacle.static([0, 0, 0], 1.0, 1.0, 2)
    polar = _solve_all(pos, pos, pos, obs)
    for arr in (polar.alpha_o, polar.beta_o, polar.alpha_v, polar.beta_v):
        assert np.all(arr == 0.0)
    # a point at the centre is pushed to the boundary along +z
    assert np.all(polar.d_o == 1.0)
    assert np.all(polar.d_v == 0.0)


def test_inside_point_targets_boundary_and_outside_point_is_fixed():
    n_p = 2
    obs = Obstacle.static([0, 0, 0], 1.0, 2.0, n_p)
    pos = np.array([[0.3, 0.0, 0.4], [3.0, 1.0, -2.0]])
    zeros = np.zeros((n_p, 3))
    polar = _solve_all(pos, zeros, zeros, obs)
    e = compute_e(polar, [obs], LIMITS, np.zeros(0), np.zeros(0))
    # per-axis layout: obstacle rows (n_p), velocity rows, acceleration rows
    target = e.reshape(3, 3 * n_p)[:, :n_p].T
    assert np.allclose(target[1], pos[1])
    q = target[0] / np.array([1.0, 1.0, 2.0])
    assert np.isclose(np.linalg.norm(q), 1.0)
    assert np.allclose(np.cross(q, pos[0] / np.array([1.0, 1.0, 2.0])), 0.0)


def test_velocity_targets_clip_to_limit():
    v = np.array([[3.0, 4.0, 0.0], [0.5, 0.0, 0.0]])
    obs = Obstacle.static([50, 50, 50], 1.0, 1.0, 2)
    polar = _solve_all(v, v, v, obs, Limits(2.0, 10.0, np.full(3, -100.0), np.full(3, 100.0)))
    assert np.isclose(polar.d_v[0], 1.0)
    assert np.isclose(polar.d_v[1], 0.25)
    assert np.allclose(polar.d_a, [0.5, 0.05])


def test_residual_zero_for_feasible_and_positive_inside():
    basis = build_basis(0.0, 5.0, n_p=30)
    xi = _rest_to_rest(basis, np.zeros(3), np.array([4.0, 0.0, 0.0]))
    far = build_constraint_system(basis, [Obstacle.static([2.0, 5.0, 0.0], 0.5, 0.5, 30)], LIMITS)
    assert residual(xi, far) <= 1e-9
    near = build_constraint_system(basis, [Obstacle.static([2.0, 0.1, 0.0], 0.5, 0.5, 30)], LIMITS)
    assert residual(xi, near) > 0.1


def test_residual_counts_bound_violation():
    basis = build_basis(0.0, 5.0, n_p=20)
    xi = _rest_to_rest(basis, np.zeros(3), np.array([4.0, 0.0, 0.0]))
    lim = Limits(2.0, 3.0, np.array([-1.0, -1.0, -1.0]), np.array([3.0, 1.0, 1.0]))
    assert np.max(np.abs(evaluate(xi, basis)[2])) < 3.0
    sysm = build_constraint_system(basis, [], lim)
    pos, _, _ = evaluate(xi, basis)
    over = np.maximum(0.0, pos[:, 0] - 3.0)
    assert np.isclose(residual(xi, sysm), np.linalg.norm(over))


def test_constraint_system_shapes_and_tau():
    basis = build_basis(0.0, 1.0, n_p=10, degree=5)
    obs = [Obstacle.static([0, 0, 0], 1.0, 1.0, 10) for _ in range(3)]
    lim = Limits(1.0, 1.0, np.array([-1.0, -2.0, -3.0]), np.array([1.0, 2.0, 3.0]))
    sysm = build_constraint_system(basis, obs, lim)
    assert sysm.F_tilde.shape == (3 * (3 + 2) * 10, 18)
    assert sysm.G.shape == (60, 18)
    assert sysm.F.shape == (210, 18)
    assert np.allclose(sysm.tau.reshape(3, 2, 10)[:, 0, 0], [1, 2, 3])
    assert np.allclose(sysm.tau.reshape(3, 2, 10)[:, 1, 0], [1, 2, 3])
    tuple_sys = build_constraint_system(basis, stack_obstacles(obs, 10), lim)
    assert np.array_equal(tuple_sys.F, sysm.F)


def test_polar_variables_broadcast_over_batch():
    rng = np.random.default_rng(4)
    pos, vel, acc = rng.normal(size=(3, 7, 5, 3))
    obs = [Obstacle.static(rng.normal(size=3), 0.5, 0.5, 5) for _ in range(2)]
    polar = update_alpha(pos, vel, acc, obs)
    update_beta(pos, vel, acc, obs, polar)
    update_d(pos, vel, acc, obs, LIMITS, polar)
    assert polar.alpha_o.shape == (7, 2, 5)
    single = PolarVariables(*update_alpha(pos[3], vel[3], acc[3], obs).__dict__.values())
    assert np.array_equal(single.alpha_o, polar.alpha_o[3])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_o=st.integers(0, 4))
def test_kernel_backends_agree(seed, n_o):
    rng = np.random.default_rng(seed)
    N, n_p = 4, 9
    pos, vel, acc = (np.ascontiguousarray(rng.normal(scale=2.0, size=(N, 3, n_p))) for _ in range(3))
    centers = np.ascontiguousarray(rng.normal(size=(n_o, 3, n_p)))
    a, b = rng.uniform(0.3, 2.0, size=(2, n_o))
    outs = [
        _backend.get(name).polar_targets(pos, vel, acc, centers, a, b, 1.5, 2.5, 1)
        for name in sorted(_backend.BACKENDS)
    ]
    for other in outs[1:]:
        for x, y in zip(outs[0], other):
            assert np.allclose(x, y, rtol=1e-12, atol=1e-12)


def test_unknown_backend_is_rejected():
    with pytest.raises(ValueError):
        _backend.get("fortran")
