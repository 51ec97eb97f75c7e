"""Polynomial trajectory basis and boundary-condition system."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BasisSet",
    "BoundaryConstraints",
    "State",
    "Trajectory",
    "build_basis",
    "build_boundary_system",
    "evaluate",
    "fit_waypoints",
    "fit_min_accel",
    "fit_min_norm",
]


@dataclass(frozen=True)
class State:
    """Position, velocity and acceleration of a point robot."""

    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray

    @classmethod
    def at_rest(cls, pos) -> "State":
        pos = np.asarray(pos, dtype=float)
        return cls(pos, np.zeros(3), np.zeros(3))


@dataclass(frozen=True)
class BasisSet:
    """Monomial basis sampled on a uniform time grid.

    Attributes
    ----------
    P, Pdot, Pddot : ndarray, shape (n_p, degree + 1)
        Basis values and their exact time derivatives.
    t : ndarray, shape (n_p,)
        Sample times.
    """

    degree: int
    n_p: int
    t0: float
    tf: float
    t: np.ndarray
    P: np.ndarray
    Pdot: np.ndarray
    Pddot: np.ndarray

    @property
    def n_c(self) -> int:
        """Coefficients per axis."""
        return self.degree + 1

    @property
    def n_v(self) -> int:
        """Total number of decision variables (three axes)."""
        return 3 * self.n_c

    @property
    def duration(self) -> float:
        return self.tf - self.t0

    @property
    def dt(self) -> float:
        return self.duration / (self.n_p - 1)

    def rows(self, times) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Basis rows and derivatives at arbitrary times."""
        return _monomial_rows(np.atleast_1d(np.asarray(times, float)), self.degree, self.t0, self.tf)


def _monomial_rows(t, degree, t0, tf):
    T = tf - t0
    s = (t - t0) / T
    k = np.arange(degree + 1)
    P = s[:, None] ** k
    Pdot = np.zeros_like(P)
    Pddot = np.zeros_like(P)
    Pdot[:, 1:] = k[1:] * s[:, None] ** (k[1:] - 1) / T
    Pddot[:, 2:] = k[2:] * (k[2:] - 1) * s[:, None] ** (k[2:] - 2) / T**2
    return P, Pdot, Pddot


def build_basis(t0: float, tf: float, n_p: int = 50, degree: int = 10) -> BasisSet:
    """Build a monomial basis on ``n_p`` uniformly spaced samples of ``[t0, tf]``.

    Raises
    ------
    ValueError
        If the horizon is empty or the grid/degree are too small.
    """
    if not tf > t0:
        raise ValueError(f"tf must exceed t0, got t0={t0}, tf={tf}")
    if n_p < 2:
        raise ValueError(f"n_p must be at least 2, got {n_p}")
    if degree < 0:
        raise ValueError(f"degree must be non-negative, got {degree}")
    if degree + 1 > n_p:
        raise ValueError(f"degree {degree} needs at least {degree + 1} samples, got n_p={n_p}")
    t = np.linspace(t0, tf, n_p)
    P, Pdot, Pddot = _monomial_rows(t, degree, t0, tf)
    for arr in (t, P, Pdot, Pddot):
        arr.setflags(write=False)
    return BasisSet(degree, n_p, float(t0), float(tf), t, P, Pdot, Pddot)


@dataclass(frozen=True)
class BoundaryConstraints:
    """Linear system ``A xi = b_eq`` pinning start state and goal position.

    Per axis the rows are initial position, velocity, acceleration and final
    position, and axes are stacked x, y, z. ``q_levels`` lists the
    derivative orders pinned at the start.
    """

    A: np.ndarray
    b_eq: np.ndarray
    q_levels: tuple = (0, 1, 2)

    def violation(self, coeffs: np.ndarray) -> np.ndarray:
        """Max-norm of ``A xi - b_eq`` for one or many coefficient vectors."""
        return np.max(np.abs(np.asarray(coeffs) @ self.A.T - self.b_eq), axis=-1)


def build_boundary_system(basis: BasisSet, start: State, goal) -> BoundaryConstraints:
    """Assemble the equality constraints for a start state and goal position.

    Raises
    ------
    ValueError
        If the polynomial degree cannot satisfy four conditions per axis.
    """
    if basis.degree < 3:
        raise ValueError(
            f"degree {basis.degree} is too low: four boundary conditions per axis need degree >= 3"
        )
    goal = np.asarray(goal, dtype=float)
    P0, Pd0, Pdd0 = basis.rows(basis.t0)
    Pf, _, _ = basis.rows(basis.tf)
    block = np.vstack([P0, Pd0, Pdd0, Pf])
    n_c = basis.n_c
    A = np.zeros((12, basis.n_v))
    b = np.zeros(12)
    for k in range(3):
        A[4 * k : 4 * k + 4, k * n_c : (k + 1) * n_c] = block
        b[4 * k : 4 * k + 4] = (start.pos[k], start.vel[k], start.acc[k], goal[k])
    if np.linalg.matrix_rank(A) < 12:
        raise ValueError("boundary system is rank deficient")
    return BoundaryConstraints(A, b)


@dataclass(frozen=True)
class Trajectory:
    """Coefficient vector ``[c_x; c_y; c_z]`` bound to a basis."""

    coeffs: np.ndarray
    basis: BasisSet


def evaluate(traj, basis: BasisSet | None = None):
    """Positions, velocities and accelerations on the basis grid.

    ``traj`` is a :class:`Trajectory` or an array of coefficients with shape
    ``(..., n_v)``. Each output has shape ``(..., n_p, 3)``.
    """
    if isinstance(traj, Trajectory):
        basis = traj.basis if basis is None else basis
        coeffs = traj.coeffs
    else:
        coeffs = np.asarray(traj, dtype=float)
    if basis is None:
        raise ValueError("a basis is required for raw coefficient arrays")
    if coeffs.shape[-1] != basis.n_v:
        raise ValueError(f"expected {basis.n_v} coefficients, got {coeffs.shape[-1]}")
    C = coeffs.reshape(coeffs.shape[:-1] + (3, basis.n_c))
    out = []
    for M in (basis.P, basis.Pdot, basis.Pddot):
        out.append(np.swapaxes(C @ M.T, -1, -2))
    return tuple(out)


def _axis_kkt(bc: BoundaryConstraints, H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Minimise ``x H x / 2 - g x`` per axis subject to the boundary rows.

    ``H`` is one axis block and ``g`` has one column per axis.
    """
    n_c = H.shape[0]
    m = bc.A.shape[0] // 3
    out = np.zeros(3 * n_c)
    # the boundary rows are block diagonal, so each axis is solved on its own
    for k in range(3):
        cols = slice(k * n_c, (k + 1) * n_c)
        rows = slice(k * m, (k + 1) * m)
        A = bc.A[rows, cols]
        K = np.block([[H, A.T], [A, np.zeros((m, m))]])
        rhs = np.concatenate([g[:, k], bc.b_eq[rows]])
        out[cols] = np.linalg.lstsq(K, rhs, rcond=None)[0][:n_c]
    return out


def fit_waypoints(basis: BasisSet, bc: BoundaryConstraints, waypoints) -> np.ndarray:
    """Least-squares fit to per-sample positions subject to the boundary system.

    ``waypoints`` has shape ``(n_p, 3)``. Returns the coefficient vector.
    """
    W = np.asarray(waypoints, dtype=float)
    return _axis_kkt(bc, basis.P.T @ basis.P, basis.P.T @ W)


def fit_min_accel(basis: BasisSet, bc: BoundaryConstraints) -> np.ndarray:
    """Coefficients minimising the summed squared acceleration under the boundary system."""
    H = basis.dt * basis.Pddot.T @ basis.Pddot
    return _axis_kkt(bc, H, np.zeros((basis.n_c, 3)))


def fit_min_norm(bc: BoundaryConstraints) -> np.ndarray:
    """Minimum-norm coefficient vector satisfying ``A xi = b_eq``."""
    return np.linalg.lstsq(bc.A, bc.b_eq, rcond=None)[0]
