import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from priest.basis import build_basis, evaluate
from priest.costs import (
    CostWeights,
    augmented_cost,
    curvature_cost,
    path_error_cost,
    segment_distance,
    smoothness_cost,
)


def _circle(basis, R=2.0, v=1.5):
    w = v / R
    t = basis.t
    pos = np.stack([R * np.cos(w * t), R * np.sin(w * t), np.zeros_like(t)], axis=1)
    vel = np.stack([-v * np.sin(w * t), v * np.cos(w * t), np.zeros_like(t)], axis=1)
    acc = np.stack([-v * w * np.cos(w * t), -v * w * np.sin(w * t), np.zeros_like(t)], axis=1)
    return pos, vel, acc


def test_weights_reject_negative():
    with pytest.raises(ValueError):
        CostWeights(w_smooth=-1.0)
    assert CostWeights.point_to_point().w_path == 0.0
    assert CostWeights.mpc().w_path > 0.0


def test_smoothness_matches_loop():
    basis = build_basis(0.0, 4.0, n_p=25)
    rng = np.random.default_rng(0)
    xi = rng.normal(size=basis.n_v)
    _, _, acc = evaluate(xi, basis)
    ref = 0.0
    for t in range(basis.n_p):
        for k in range(3):
            ref += acc[t, k] ** 2 * basis.dt
    assert np.isclose(smoothness_cost(xi, basis), ref, rtol=1e-12)


def test_smoothness_of_straight_constant_speed_is_zero():
    basis = build_basis(0.0, 3.0, n_p=10, degree=3)
    xi = np.zeros(basis.n_v)
    xi[1] = 3.0
    assert smoothness_cost(xi, basis) == 0.0


def test_curvature_of_circle():
    basis = build_basis(0.0, 5.0, n_p=40)
    R = 2.0
    got = curvature_cost(_circle(basis, R), basis)
    assert np.isclose(got, basis.n_p * basis.dt / R**2, rtol=1e-12)


def test_curvature_with_zero_speed_is_finite():
    basis = build_basis(0.0, 1.0, n_p=5, degree=3)
    zeros = np.zeros((5, 3))
    acc = np.ones((5, 3))
    assert curvature_cost((zeros, zeros, acc), basis) == 0.0


def test_segment_distance_brute_force():
    rng = np.random.default_rng(1)
    start, goal = np.array([0.0, 0.0, 0.0]), np.array([3.0, 1.0, -1.0])
    pts = rng.normal(scale=3.0, size=(50, 3))
    u = np.linspace(0, 1, 200_001)[:, None]
    seg = start + u * (goal - start)
    for p in pts:
        ref = np.min(np.linalg.norm(seg - p, axis=1))
        assert abs(segment_distance(p, start, goal) - ref) <= 1e-4


def test_segment_distance_rejects_degenerate_segment():
    with pytest.raises(ValueError):
        segment_distance(np.zeros(3), np.ones(3), np.ones(3))


def test_path_error_zero_on_segment():
    basis = build_basis(0.0, 1.0, n_p=10, degree=5)
    s = np.linspace(0, 1, 10)[:, None]
    start, goal = np.zeros(3), np.array([1.0, 2.0, 0.0])
    pos = start + s * (goal - start)
    assert path_error_cost((pos, pos, pos), start, goal) <= 1e-15


@settings(max_examples=30, deadline=None)
@given(
    w=st.tuples(*[st.floats(0, 10)] * 4),
    r=st.floats(0, 5),
    seed=st.integers(0, 2**32 - 1),
)
def test_augmented_cost_is_weighted_sum(w, r, seed):
    basis = build_basis(0.0, 4.0, n_p=20)
    xi = np.random.default_rng(seed).normal(size=basis.n_v)
    start, goal = np.zeros(3), np.array([4.0, 0.0, 0.0])
    weights = CostWeights(*w)
    got = augmented_cost(xi, r, weights, basis, start, goal)
    ref = (
        w[0] * smoothness_cost(xi, basis)
        + w[1] * curvature_cost(xi, basis)
        + w[2] * path_error_cost(xi, start, goal, basis)
        + w[3] * r
    )
    assert np.isclose(got, ref, rtol=1e-12, atol=1e-12)


def test_augmented_cost_batches():
    basis = build_basis(0.0, 4.0, n_p=20)
    xi = np.random.default_rng(2).normal(size=(6, basis.n_v))
    r = np.arange(6.0)
    batch = augmented_cost(xi, r, CostWeights.mpc(), basis, np.zeros(3), np.ones(3))
    single = [augmented_cost(x, ri, CostWeights.mpc(), basis, np.zeros(3), np.ones(3)) for x, ri in zip(xi, r)]
    assert np.allclose(batch, single, rtol=1e-12)
