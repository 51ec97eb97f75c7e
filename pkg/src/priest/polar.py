"""Polar reformulation of collision, velocity and acceleration constraints.

Every constraint is written as ``F xi = e(alpha, beta, d)`` where the
right-hand side is parameterised by spherical angles and a scale bounded
to a box. For a fixed trajectory each polar block has a closed-form
minimiser, computed by the ``update_*`` functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .basis import BasisSet, evaluate

__all__ = [
    "Limits",
    "Obstacle",
    "PolarConstraintSystem",
    "PolarVariables",
    "build_constraint_system",
    "compute_e",
    "residual",
    "stack_obstacles",
    "update_alpha",
    "update_beta",
    "update_d",
]


@dataclass(frozen=True)
class Limits:
    """Kinematic limits and axis-aligned workspace bounds."""

    v_max: float
    a_max: float
    s_min: np.ndarray
    s_max: np.ndarray

    def __post_init__(self):
        if not (self.v_max > 0 and self.a_max > 0):
            raise ValueError("v_max and a_max must be positive")
        s_min = np.asarray(self.s_min, dtype=float).reshape(3)
        s_max = np.asarray(self.s_max, dtype=float).reshape(3)
        if np.any(s_min >= s_max):
            raise ValueError(f"workspace bounds are empty: {s_min} vs {s_max}")
        object.__setattr__(self, "s_min", s_min)
        object.__setattr__(self, "s_max", s_max)


@dataclass(frozen=True)
class Obstacle:
    """Axis-aligned ellipsoid with in-plane semi-axis ``a`` and vertical ``b``.

    ``center`` holds the (possibly moving) centre at each grid sample,
    shape ``(n_p, 3)``.
    """

    center: np.ndarray
    a: float
    b: float
    velocity: np.ndarray | None = None

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"semi-axes must be positive, got a={self.a}, b={self.b}")
        c = np.asarray(self.center, dtype=float)
        if c.ndim != 2 or c.shape[1] != 3:
            raise ValueError(f"center must have shape (n_p, 3), got {c.shape}")
        object.__setattr__(self, "center", c)

    @classmethod
    def static(cls, pos, a: float, b: float, n_p: int) -> "Obstacle":
        pos = np.asarray(pos, dtype=float)
        return cls(np.tile(pos, (n_p, 1)), a, b, np.zeros(3))

    @classmethod
    def moving(cls, pos, velocity, a: float, b: float, times) -> "Obstacle":
        """Constant-velocity obstacle at ``pos`` when ``times`` is zero."""
        pos = np.asarray(pos, dtype=float)
        velocity = np.asarray(velocity, dtype=float)
        t = np.asarray(times, dtype=float)
        return cls(pos + t[:, None] * velocity, a, b, velocity)


def stack_obstacles(obstacles: Sequence[Obstacle], n_p: int):
    """Stack obstacles into ``centers (n_o, n_p, 3)``, ``a (n_o,)``, ``b (n_o,)``."""
    if len(obstacles) == 0:
        return np.zeros((0, n_p, 3)), np.zeros(0), np.zeros(0)
    centers = np.stack([o.center for o in obstacles])
    if centers.shape[1] != n_p:
        raise ValueError(f"obstacle centers have {centers.shape[1]} samples, expected {n_p}")
    a = np.array([o.a for o in obstacles], dtype=float)
    b = np.array([o.b for o in obstacles], dtype=float)
    return centers, a, b


@dataclass
class PolarVariables:
    """Angles and scales for the obstacle, velocity and acceleration blocks.

    Obstacle arrays have shape ``(..., n_o, n_p)``, the others ``(..., n_p)``.
    """

    alpha_o: np.ndarray
    alpha_v: np.ndarray
    alpha_a: np.ndarray
    beta_o: np.ndarray | None = None
    beta_v: np.ndarray | None = None
    beta_a: np.ndarray | None = None
    d_o: np.ndarray | None = None
    d_v: np.ndarray | None = None
    d_a: np.ndarray | None = None


def _atan2(y, x):
    # atan2(0, 0) is defined as 0 regardless of the signs of the zeros.
    out = np.arctan2(y, x)
    return np.where((y == 0) & (x == 0), 0.0, out)


def _as_obstacle_arrays(obstacles, n_p):
    if isinstance(obstacles, tuple) and len(obstacles) == 3 and isinstance(obstacles[0], np.ndarray):
        return obstacles
    return stack_obstacles(obstacles, n_p)


def _offsets(pos, centers):
    # pos (..., n_p, 3), centers (n_o, n_p, 3) -> (..., n_o, n_p, 3)
    return pos[..., None, :, :] - centers


def update_alpha(pos, vel, acc, obstacles) -> PolarVariables:
    """Closed-form azimuth for every block."""
    pos = np.asarray(pos, dtype=float)
    centers, _, _ = _as_obstacle_arrays(obstacles, pos.shape[-2])
    delta = _offsets(pos, centers)
    return PolarVariables(
        alpha_o=_atan2(delta[..., 1], delta[..., 0]),
        alpha_v=_atan2(vel[..., 1], vel[..., 0]),
        alpha_a=_atan2(acc[..., 1], acc[..., 0]),
    )


def update_beta(pos, vel, acc, obstacles, polar: PolarVariables) -> PolarVariables:
    """Closed-form elevation given the current azimuths.

    For obstacles the in-plane and vertical offsets are normalised by the
    ellipsoid semi-axes so the resulting direction is aligned with the
    offset vector.
    """
    pos = np.asarray(pos, dtype=float)
    centers, a, b = _as_obstacle_arrays(obstacles, pos.shape[-2])
    delta = _offsets(pos, centers)
    ca, sa = np.cos(polar.alpha_o), np.sin(polar.alpha_o)
    horiz = (delta[..., 0] * ca + delta[..., 1] * sa) / a[:, None]
    polar.beta_o = _atan2(horiz, delta[..., 2] / b[:, None])

    def _kin(u, alpha):
        h = u[..., 0] * np.cos(alpha) + u[..., 1] * np.sin(alpha)
        return _atan2(h, u[..., 2])

    polar.beta_v = _kin(np.asarray(vel, float), polar.alpha_v)
    polar.beta_a = _kin(np.asarray(acc, float), polar.alpha_a)
    return polar


def _scale(num, den, lo, hi):
    # Degenerate model directions snap to the nearest admissible bound.
    safe = np.where(den > 0, den, 1.0)
    d = np.where(den > 0, num / safe, lo)
    return np.clip(d, lo, hi)


def _unit(alpha, beta):
    sb = np.sin(beta)
    return np.cos(alpha) * sb, np.sin(alpha) * sb, np.cos(beta)


def update_d(pos, vel, acc, obstacles, limits: Limits, polar: PolarVariables) -> PolarVariables:
    """Closed-form bounded scales given the current angles."""
    pos = np.asarray(pos, dtype=float)
    centers, a, b = _as_obstacle_arrays(obstacles, pos.shape[-2])
    delta = _offsets(pos, centers)
    ux, uy, uz = _unit(polar.alpha_o, polar.beta_o)
    a_ = a[:, None]
    b_ = b[:, None]
    mx, my, mz = a_ * ux, a_ * uy, b_ * uz
    num = delta[..., 0] * mx + delta[..., 1] * my + delta[..., 2] * mz
    den = mx * mx + my * my + mz * mz
    polar.d_o = _scale(num, den, 1.0, np.inf)

    def _kin(u, alpha, beta, bound):
        vx, vy, vz = _unit(alpha, beta)
        mx, my, mz = bound * vx, bound * vy, bound * vz
        num = u[..., 0] * mx + u[..., 1] * my + u[..., 2] * mz
        den = mx * mx + my * my + mz * mz
        return _scale(num, den, 0.0, 1.0)

    polar.d_v = _kin(np.asarray(vel, float), polar.alpha_v, polar.beta_v, limits.v_max)
    polar.d_a = _kin(np.asarray(acc, float), polar.alpha_a, polar.beta_a, limits.a_max)
    return polar


def compute_e(polar: PolarVariables, obstacles, limits: Limits, s, tau) -> np.ndarray:
    """Assemble the right-hand side ``e`` in the row order of ``F``.

    Per axis the rows are the obstacle targets (obstacle-major), then the
    velocity and acceleration targets. The bound rows ``tau - s`` follow.
    """
    n_p = polar.alpha_v.shape[-1]
    centers, a, b = _as_obstacle_arrays(obstacles, n_p)
    ox, oy, oz = _unit(polar.alpha_o, polar.beta_o)
    vx, vy, vz = _unit(polar.alpha_v, polar.beta_v)
    ax, ay, az = _unit(polar.alpha_a, polar.beta_a)
    a_ = a[:, None]
    b_ = b[:, None]
    obs = (
        centers[..., 0] + a_ * polar.d_o * ox,
        centers[..., 1] + a_ * polar.d_o * oy,
        centers[..., 2] + b_ * polar.d_o * oz,
    )
    vt = (polar.d_v * limits.v_max * vx, polar.d_v * limits.v_max * vy, polar.d_v * limits.v_max * vz)
    at = (polar.d_a * limits.a_max * ax, polar.d_a * limits.a_max * ay, polar.d_a * limits.a_max * az)
    batch = polar.alpha_v.shape[:-1]
    parts = []
    for k in range(3):
        parts.append(np.broadcast_to(obs[k], batch + obs[k].shape[-2:]).reshape(batch + (-1,)))
        parts.append(vt[k])
        parts.append(at[k])
    parts.append(np.broadcast_to(np.asarray(tau) - s, batch + (np.shape(tau)[-1],)))
    return np.concatenate(parts, axis=-1)


@dataclass
class PolarConstraintSystem:
    """Constraint matrices together with the obstacles and limits they encode.

    ``F_tilde`` holds the equality rows, ``G`` the workspace-bound rows
    ``G xi <= tau`` and ``F`` their vertical stack.
    """

    F_tilde: np.ndarray
    G: np.ndarray
    tau: np.ndarray
    basis: BasisSet
    limits: Limits
    centers: np.ndarray
    a: np.ndarray
    b: np.ndarray
    F: np.ndarray = field(init=False)

    def __post_init__(self):
        self.F = np.vstack([self.F_tilde, self.G])

    @property
    def n_o(self) -> int:
        return self.centers.shape[0]

    @property
    def n_tilde(self) -> int:
        return self.F_tilde.shape[0]

    @property
    def obstacle_arrays(self):
        return self.centers, self.a, self.b


def build_constraint_system(
    basis: BasisSet, obstacles: Sequence[Obstacle], limits: Limits
) -> PolarConstraintSystem:
    """Build ``F``, ``G`` and ``tau`` for the given obstacles and limits.

    ``obstacles`` is a list of :class:`Obstacle` or a stacked
    ``(centers, a, b)`` tuple.
    """
    centers, a, b = _as_obstacle_arrays(obstacles, basis.n_p)
    n_o, n_p, n_c = len(a), basis.n_p, basis.n_c
    per_axis = np.vstack([np.tile(basis.P, (n_o, 1)), basis.Pdot, basis.Pddot])
    rows = per_axis.shape[0]
    F_tilde = np.zeros((3 * rows, basis.n_v))
    G = np.zeros((6 * n_p, basis.n_v))
    tau = np.zeros(6 * n_p)
    g_block = np.vstack([-basis.P, basis.P])
    for k in range(3):
        cols = slice(k * n_c, (k + 1) * n_c)
        F_tilde[k * rows : (k + 1) * rows, cols] = per_axis
        G[2 * k * n_p : 2 * (k + 1) * n_p, cols] = g_block
        tau[2 * k * n_p : (2 * k + 1) * n_p] = -limits.s_min[k]
        tau[(2 * k + 1) * n_p : 2 * (k + 1) * n_p] = limits.s_max[k]
    return PolarConstraintSystem(F_tilde, G, tau, basis, limits, centers, a, b)


def sweep(coeffs, system: PolarConstraintSystem) -> PolarVariables:
    """One alternating pass of the closed-form updates against ``coeffs``."""
    pos, vel, acc = evaluate(coeffs, system.basis)
    obs = system.obstacle_arrays
    polar = update_alpha(pos, vel, acc, obs)
    update_beta(pos, vel, acc, obs, polar)
    update_d(pos, vel, acc, obs, system.limits, polar)
    return polar


def residual(coeffs, system: PolarConstraintSystem) -> np.ndarray:
    """Constraint residual after a best-fit polar sweep.

    Sum of the equality-row misfit norm and the norm of the bound
    violation. Zero exactly when the trajectory satisfies every constraint.
    """
    coeffs = np.asarray(getattr(coeffs, "coeffs", coeffs), dtype=float)
    polar = sweep(coeffs, system)
    zeros = np.zeros(system.G.shape[0])
    e = compute_e(polar, system.obstacle_arrays, system.limits, zeros, system.tau)
    n = system.n_tilde
    eq = np.linalg.norm(coeffs @ system.F_tilde.T - e[..., :n], axis=-1)
    viol = np.maximum(0.0, coeffs @ system.G.T - system.tau)
    return eq + np.linalg.norm(viol, axis=-1)
