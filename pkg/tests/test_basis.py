import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from priest.basis import (
    State,
    Trajectory,
    build_basis,
    build_boundary_system,
    evaluate,
    fit_min_norm,
    fit_waypoints,
)


def _elimination_rank(M, tol=1e-9):
    """Row-echelon rank by Gaussian elimination with partial pivoting."""
    A = np.array(M, dtype=float)
    rank = 0
    rows, cols = A.shape
    for c in range(cols):
        if rank == rows:
            break
        p = rank + np.argmax(np.abs(A[rank:, c]))
        if abs(A[p, c]) <= tol * max(1.0, np.abs(A).max()):
            continue
        A[[rank, p]] = A[[p, rank]]
        A[rank + 1 :] -= np.outer(A[rank + 1 :, c] / A[rank, c], A[rank])
        rank += 1
    return rank


def test_constant_basis():
    b = build_basis(0.0, 1.0, n_p=10, degree=0)
    assert b.P.shape == (10, 1)
    assert np.all(b.P == 1.0)
    assert np.all(b.Pdot == 0.0)


def test_linear_basis_rows():
    b = build_basis(0.0, 1.0, n_p=5, degree=1)
    assert np.allclose(b.P, np.column_stack([np.ones(5), b.t]))
    assert np.allclose(b.Pdot, np.column_stack([np.zeros(5), np.ones(5)]))


def test_derivatives_match_finite_differences():
    b = build_basis(0.0, 10.0, n_p=50, degree=10)
    h = b.dt
    fd = (b.P[2:] - b.P[:-2]) / (2 * h)
    # the truncation error of a central difference shrinks with h^2, so
    # compare against rows evaluated at a much finer step
    P_plus, _, _ = b.rows(b.t[1:-1] + 1e-5)
    P_minus, _, _ = b.rows(b.t[1:-1] - 1e-5)
    fine = (P_plus - P_minus) / 2e-5
    assert np.max(np.abs(b.Pdot[1:-1] - fine)) <= 1e-5
    assert fd.shape == b.Pdot[1:-1].shape


def test_second_derivative_matches_finite_differences():
    b = build_basis(0.0, 3.0, n_p=30, degree=10)
    _, Pd_plus, _ = b.rows(b.t[1:-1] + 1e-6)
    _, Pd_minus, _ = b.rows(b.t[1:-1] - 1e-6)
    assert np.max(np.abs(b.Pddot[1:-1] - (Pd_plus - Pd_minus) / 2e-6)) <= 1e-4


def test_grid_strictly_increasing_and_full_rank():
    b = build_basis(2.0, 7.0, n_p=50, degree=10)
    assert np.all(np.diff(b.t) > 0)
    assert b.t[0] == 2.0 and b.t[-1] == 7.0
    assert np.linalg.matrix_rank(b.P) == 11
    assert b.n_v == 33


@pytest.mark.parametrize(
    "kwargs",
    [
        {"t0": 1.0, "tf": 1.0},
        {"t0": 2.0, "tf": 1.0},
        {"t0": 0.0, "tf": 1.0, "n_p": 5, "degree": 5},
        {"t0": 0.0, "tf": 1.0, "n_p": 1},
        {"t0": 0.0, "tf": 1.0, "degree": -1},
    ],
)
def test_build_basis_rejects_bad_input(kwargs):
    with pytest.raises(ValueError):
        build_basis(**kwargs)


def test_basis_is_immutable():
    b = build_basis(0.0, 1.0)
    with pytest.raises(ValueError):
        b.P[0, 0] = 2.0


def test_boundary_degree_three_is_square_full_rank():
    b = build_basis(0.0, 1.0, n_p=10, degree=3)
    bc = build_boundary_system(b, State.at_rest([0, 0, 0]), [1, 2, 3])
    assert bc.A.shape == (12, 12)
    assert np.linalg.matrix_rank(bc.A) == 12


def test_boundary_rank_by_elimination():
    b = build_basis(0.0, 4.0, n_p=50, degree=10)
    rng = np.random.default_rng(3)
    start = State(rng.normal(size=3), rng.normal(size=3), rng.normal(size=3))
    bc = build_boundary_system(b, start, rng.normal(size=3))
    assert _elimination_rank(bc.A) == 12


def test_boundary_rejects_low_degree():
    b = build_basis(0.0, 1.0, n_p=10, degree=2)
    with pytest.raises(ValueError):
        build_boundary_system(b, State.at_rest([0, 0, 0]), [1, 1, 1])


def test_boundary_row_order():
    b = build_basis(0.0, 2.0, n_p=20, degree=5)
    start = State(np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0]), np.array([7.0, 8.0, 9.0]))
    bc = build_boundary_system(b, start, [10.0, 11.0, 12.0])
    assert np.array_equal(bc.b_eq, [1, 4, 7, 10, 2, 5, 8, 11, 3, 6, 9, 12])
    assert bc.q_levels == (0, 1, 2)


def test_straight_line_violates_velocity_row_by_slope():
    b = build_basis(0.0, 1.0, n_p=10, degree=3)
    start, goal = np.zeros(3), np.array([2.0, -1.0, 0.5])
    bc = build_boundary_system(b, State.at_rest(start), goal)
    # p(s) = start + s (goal - start): coefficients [start, goal - start, 0, 0]
    coeffs = np.concatenate([[start[k], goal[k] - start[k], 0.0, 0.0] for k in range(3)])
    r = coeffs @ bc.A.T - bc.b_eq
    slope = goal - start
    assert np.allclose(r.reshape(3, 4)[:, 1], slope)
    assert np.allclose(r.reshape(3, 4)[:, [0, 2, 3]], 0.0)


def test_evaluate_constant_and_linear():
    b = build_basis(0.0, 2.0, n_p=11, degree=4)
    c = np.zeros(b.n_v)
    c[0], c[5], c[10] = 1.0, 2.0, 3.0
    pos, vel, acc = evaluate(c, b)
    assert np.allclose(pos, [1.0, 2.0, 3.0])
    assert np.all(vel == 0) and np.all(acc == 0)
    c[1] = 4.0  # x = 1 + 4 s with s = t / 2, so dx/dt = 2
    _, vel, acc = evaluate(c, b)
    assert np.allclose(vel[:, 0], 2.0)
    assert np.allclose(acc, 0.0)


def test_evaluate_matches_naive_loop():
    b = build_basis(0.0, 3.0, n_p=12, degree=6)
    rng = np.random.default_rng(0)
    xi = rng.normal(size=b.n_v)
    pos, vel, acc = evaluate(Trajectory(xi, b))
    for out, M in ((pos, b.P), (vel, b.Pdot), (acc, b.Pddot)):
        for t in range(b.n_p):
            for k in range(3):
                ref = sum(M[t, j] * xi[k * b.n_c + j] for j in range(b.n_c))
                assert abs(out[t, k] - ref) <= 1e-12 * max(1.0, abs(ref))


def test_evaluate_rejects_dimension_mismatch():
    b = build_basis(0.0, 1.0)
    with pytest.raises(ValueError):
        evaluate(np.zeros(b.n_v + 1), b)
    with pytest.raises(ValueError):
        evaluate(np.zeros(b.n_v))


@settings(max_examples=50, deadline=None)
@given(
    a=st.floats(-5, 5),
    c=st.floats(-5, 5),
    seed=st.integers(0, 2**32 - 1),
)
def test_evaluate_is_linear(a, c, seed):
    b = build_basis(0.0, 5.0, n_p=20, degree=8)
    rng = np.random.default_rng(seed)
    x1, x2 = rng.normal(size=(2, b.n_v))
    lhs = evaluate(a * x1 + c * x2, b)
    e1, e2 = evaluate(x1, b), evaluate(x2, b)
    for L, u, v in zip(lhs, e1, e2):
        assert np.max(np.abs(L - (a * u + c * v))) <= 1e-10 * max(1.0, np.abs(L).max())


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), tf=st.floats(0.5, 20.0))
def test_min_norm_solve_satisfies_boundary(seed, tf):
    b = build_basis(0.0, tf, n_p=50, degree=10)
    rng = np.random.default_rng(seed)
    start = State(rng.uniform(-10, 10, 3), rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3))
    bc = build_boundary_system(b, start, rng.uniform(-10, 10, 3))
    xi = fit_min_norm(bc)
    assert np.max(np.abs(bc.A @ xi - bc.b_eq)) <= 1e-8


def test_fit_waypoints_keeps_boundary_and_tracks_line():
    b = build_basis(0.0, 10.0)
    start, goal = np.array([0.0, 0.0, 1.0]), np.array([5.0, 3.0, 1.0])
    bc = build_boundary_system(b, State.at_rest(start), goal)
    s = np.linspace(0, 1, b.n_p)[:, None]
    xi = fit_waypoints(b, bc, (1 - s) * start + s * goal)
    assert bc.violation(xi) <= 1e-8
    pos, _, _ = evaluate(xi, b)
    assert np.max(np.abs(pos - ((1 - s) * start + s * goal))) < 0.5
