"""Trajectory costs. All functions take arrays of shape ``(..., n_p, 3)``
(or coefficient vectors with a basis) and return one value per trajectory.
None of them needs derivatives of its inputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSet, evaluate

__all__ = [
    "CostWeights",
    "augmented_cost",
    "curvature_cost",
    "path_error_cost",
    "smoothness_cost",
]

SPEED_FLOOR = 1e-3


@dataclass(frozen=True)
class CostWeights:
    """Non-negative weights of the augmented cost."""

    w_smooth: float = 1.0
    w_curv: float = 0.0
    w_path: float = 0.0
    w_resid: float = 10.0

    def __post_init__(self):
        for name in ("w_smooth", "w_curv", "w_path", "w_resid"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def point_to_point(cls) -> "CostWeights":
        return cls(1.0, 0.0, 0.0, 10.0)

    @classmethod
    def mpc(cls) -> "CostWeights":
        return cls(1.0, 0.0, 1.0, 10.0)


def _kinematics(traj, basis):
    # Accept coefficients or an already evaluated (pos, vel, acc) tuple.
    if isinstance(traj, tuple):
        return traj
    return evaluate(traj, basis)


def smoothness_cost(traj, basis: BasisSet):
    """Integrated squared acceleration, ``sum_t |acc(t)|^2 dt``.

    ``traj`` is a coefficient array or an evaluated ``(pos, vel, acc)``
    tuple; ``basis`` supplies the grid step.
    """
    _, _, acc = _kinematics(traj, basis)
    return np.sum(acc * acc, axis=(-1, -2)) * basis.dt


def curvature_cost(traj, basis: BasisSet, eps: float = SPEED_FLOOR):
    """Integrated squared curvature with speed floored at ``eps``."""
    _, vel, acc = _kinematics(traj, basis)
    cross = np.linalg.norm(np.cross(vel, acc), axis=-1)
    speed = np.linalg.norm(vel, axis=-1)
    kappa = cross / np.maximum(speed, eps) ** 3
    return np.sum(kappa * kappa, axis=-1) * basis.dt


def segment_distance(points, start, goal):
    """Distance from each point to the segment ``start -> goal``."""
    start = np.asarray(start, dtype=float)
    seg = np.asarray(goal, dtype=float) - start
    L2 = float(seg @ seg)
    if L2 == 0.0:
        raise ValueError("start and goal coincide")
    rel = np.asarray(points) - start
    u = np.clip(rel @ seg / L2, 0.0, 1.0)
    return np.linalg.norm(rel - u[..., None] * seg, axis=-1)


def path_error_cost(traj, start, goal, basis: BasisSet | None = None):
    """Mean distance of the waypoints to the straight start-goal segment."""
    pos = traj[0] if isinstance(traj, tuple) else evaluate(traj, basis)[0]
    return np.mean(segment_distance(pos, start, goal), axis=-1)


def augmented_cost(traj, r, weights: CostWeights, basis: BasisSet, start=None, goal=None):
    """Weighted sum of the primary cost terms and the residual ``r``.

    Terms with zero weight are skipped, so ``start`` and ``goal`` are only
    required when ``w_path`` is positive.
    """
    kin = _kinematics(traj, basis)
    total = weights.w_resid * np.asarray(r, dtype=float)
    if weights.w_smooth:
        total = total + weights.w_smooth * smoothness_cost(kin, basis)
    if weights.w_curv:
        total = total + weights.w_curv * curvature_cost(kin, basis)
    if weights.w_path:
        total = total + weights.w_path * path_error_cost(kin, start, goal)
    return total
