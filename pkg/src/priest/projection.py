"""Batched projection of sampled trajectories onto the feasible set.

Each sample is driven toward feasibility by alternating closed-form polar
updates with an equality-constrained quadratic step whose KKT matrix is
shared by the whole batch, so its inverse is computed once.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .basis import BoundaryConstraints, evaluate
from .polar import PolarConstraintSystem, compute_e, update_alpha, update_beta, update_d

__all__ = [
    "ProjectionConfig",
    "ProjectionResult",
    "ProjectionWorkspace",
    "SingularKKTError",
    "precompute_workspace",
    "project_batch",
    "qp_step",
    "with_boundary",
]


class SingularKKTError(np.linalg.LinAlgError):
    """Raised when the projection KKT matrix cannot be inverted."""


@dataclass(frozen=True)
class ProjectionConfig:
    """Projection settings.

    ``feas_tol`` is the residual below which a sample counts as feasible.
    ``method`` is ``"fused"`` (kernel-backed) or ``"reference"`` (explicit
    composition of the public polar updates with dense ``F``). ``threads``
    of 0 uses every available core.
    """

    rho: float = 100.0
    max_iters: int = 15
    feas_tol: float = 1e-3
    method: str = "fused"
    backend: str | None = None
    threads: int = 0
    record_trace: bool = False

    def __post_init__(self):
        if not self.rho >= 0:
            raise ValueError(f"rho must be non-negative, got {self.rho}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be positive, got {self.max_iters}")
        if self.method not in ("fused", "reference"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class ProjectionWorkspace:
    """Inverse KKT matrix and the data it was built from."""

    M: np.ndarray
    F: np.ndarray
    FtF: np.ndarray
    A: np.ndarray
    b_eq: np.ndarray
    rho: float
    fingerprint: str

    @property
    def n_v(self) -> int:
        return self.FtF.shape[0]


def precompute_workspace(
    system: PolarConstraintSystem, bc: BoundaryConstraints, cfg: ProjectionConfig | None = None
) -> ProjectionWorkspace:
    """Invert the KKT matrix ``[[I + rho F'F, A'], [A, 0]]``.

    Raises
    ------
    SingularKKTError
        If the matrix is rank deficient.
    """
    cfg = cfg or ProjectionConfig()
    F = system.F
    FtF = F.T @ F
    n_v, m = FtF.shape[0], bc.A.shape[0]
    K = np.block([[np.eye(n_v) + cfg.rho * FtF, bc.A.T], [bc.A, np.zeros((m, m))]])
    # symmetric diagonal equilibration keeps the inverse accurate for large rho
    scale = np.abs(K).max(axis=1)
    if np.any(scale == 0):
        raise SingularKKTError(f"KKT matrix has {int(np.sum(scale == 0))} zero rows")
    dsc = 1.0 / np.sqrt(scale)
    try:
        M = np.linalg.inv(K * dsc[:, None] * dsc[None, :]) * dsc[:, None] * dsc[None, :]
    except np.linalg.LinAlgError:
        M = None
    if M is None or not np.all(np.isfinite(M)) or np.abs(M @ K - np.eye(K.shape[0])).max() > 1e-6:
        rank = np.linalg.matrix_rank(K)
        raise SingularKKTError(f"KKT matrix of size {K.shape[0]} is singular to working precision (rank {rank})")
    digest = hashlib.sha256(M.tobytes()).hexdigest()
    return ProjectionWorkspace(M, F, FtF, bc.A, bc.b_eq.copy(), cfg.rho, digest)


def with_boundary(ws: ProjectionWorkspace, bc: BoundaryConstraints) -> ProjectionWorkspace:
    """Reuse an inverse with new boundary values (same ``A``)."""
    if not np.array_equal(ws.A, bc.A):
        raise ValueError("boundary matrix differs from the workspace")
    return ProjectionWorkspace(ws.M, ws.F, ws.FtF, ws.A, bc.b_eq.copy(), ws.rho, ws.fingerprint)


def _rowwise(X, B):
    """``X @ B`` computed one row at a time.

    A single 2-D product lets BLAS pick a summation order that depends on
    the batch size; stacking keeps every row's arithmetic identical.
    """
    X = np.asarray(X)
    if X.ndim == 1:
        return X @ B
    return np.matmul(X[:, None, :], B)[:, 0, :]


def _solve(ws: ProjectionWorkspace, rhs):
    n_v = ws.n_v
    # M @ [rhs; b_eq] without forming the concatenation
    xi_bar = _rowwise(rhs, ws.M[:n_v, :n_v].T) + ws.M[:n_v, n_v:] @ ws.b_eq
    nu = _rowwise(rhs, ws.M[n_v:, :n_v].T) + ws.M[n_v:, n_v:] @ ws.b_eq
    return xi_bar, nu


def qp_step(ws: ProjectionWorkspace, xi, e, lam):
    """One equality-constrained quadratic step.

    Solves ``(I + rho F'F) xi_bar + A' nu = xi + lam + rho F'e`` with
    ``A xi_bar = b_eq``. Inputs may carry a leading batch dimension.
    """
    rhs = xi + lam + ws.rho * _rowwise(e, ws.F)
    return _solve(ws, rhs)


@dataclass
class ProjectionResult:
    """Projected samples with per-sample residuals and diagnostics."""

    xi_bar: np.ndarray
    residuals: np.ndarray
    feasible: np.ndarray
    failed: np.ndarray
    residual_trace: np.ndarray | None = None
    eq_error_trace: np.ndarray | None = None
    diagnostics: list = field(default_factory=list)


def _threads(cfg):
    return cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)


class _Fused:
    """Kernel-backed sweep producing ``F'e`` without forming ``e``."""

    def __init__(self, system, cfg):
        self.system = system
        basis = system.basis
        self.kernel = _backend.get(cfg.backend)
        self.threads = _threads(cfg)
        self.P, self.Pd, self.Pdd = basis.P, basis.Pdot, basis.Pddot
        self.n_c = basis.n_c
        self.centers = np.ascontiguousarray(np.transpose(system.centers, (0, 2, 1)))
        self.s_min = system.limits.s_min[None, :, None]
        self.s_max = system.limits.s_max[None, :, None]

    def __call__(self, xi_bar):
        N = xi_bar.shape[0]
        C = xi_bar.reshape(N, 3, self.n_c)
        pos = np.ascontiguousarray(C @ self.P.T)
        vel = np.ascontiguousarray(C @ self.Pd.T)
        acc = np.ascontiguousarray(C @ self.Pdd.T)
        lim = self.system.limits
        obs, vt, at, sq = self.kernel.polar_targets(
            pos, vel, acc, self.centers, self.system.a, self.system.b, lim.v_max, lim.a_max, self.threads
        )
        lo = np.maximum(self.s_min, pos)
        hi = np.minimum(self.s_max, pos)
        fte = (obs + lo + hi) @ self.P + vt @ self.Pd + at @ self.Pdd
        viol = np.maximum(0.0, self.s_min - pos) ** 2 + np.maximum(0.0, pos - self.s_max) ** 2
        r = np.sqrt(sq) + np.sqrt(viol.sum(axis=(1, 2)))
        return fte.reshape(N, -1), r


class _Reference:
    """Explicit composition of the public polar updates with dense ``F``."""

    def __init__(self, system, cfg):
        self.system = system

    def __call__(self, xi_bar):
        sysm = self.system
        pos, vel, acc = evaluate(xi_bar, sysm.basis)
        obs = sysm.obstacle_arrays
        polar = update_alpha(pos, vel, acc, obs)
        update_beta(pos, vel, acc, obs, polar)
        update_d(pos, vel, acc, obs, sysm.limits, polar)
        s = np.maximum(0.0, sysm.tau - xi_bar @ sysm.G.T)
        e = compute_e(polar, obs, sysm.limits, s, sysm.tau)
        n = sysm.n_tilde
        eq = np.linalg.norm(xi_bar @ sysm.F_tilde.T - e[..., :n], axis=-1)
        viol = np.maximum(0.0, xi_bar @ sysm.G.T - sysm.tau)
        r = eq + np.linalg.norm(viol, axis=-1)
        return _rowwise(e, sysm.F), r


def project_batch(
    samples,
    system: PolarConstraintSystem,
    bc: BoundaryConstraints,
    cfg: ProjectionConfig | None = None,
    workspace: ProjectionWorkspace | None = None,
) -> ProjectionResult:
    """Project every row of ``samples`` (shape ``(N, n_v)``).

    Runs exactly ``max_iters`` iterations per sample. Samples are processed
    independently; a sample whose iterate becomes non-finite is frozen at
    its last finite value with an infinite residual and reported in
    ``diagnostics``.
    """
    cfg = cfg or ProjectionConfig()
    xi = np.atleast_2d(np.asarray(samples, dtype=float))
    if xi.shape[1] != system.F.shape[1]:
        raise ValueError(f"samples have {xi.shape[1]} columns, expected {system.F.shape[1]}")
    ws = workspace if workspace is not None else precompute_workspace(system, bc, cfg)
    sweep = _Fused(system, cfg) if cfg.method == "fused" else _Reference(system, cfg)
    N = xi.shape[0]
    rho = ws.rho
    xi_bar = xi.copy()
    lam = np.zeros_like(xi)
    failed = np.zeros(N, dtype=bool)
    diagnostics = []
    res_trace = np.full((N, cfg.max_iters), np.nan) if cfg.record_trace else None
    eq_trace = np.full((N, cfg.max_iters), np.nan) if cfg.record_trace else None

    fte, r = sweep(xi_bar)
    for k in range(cfg.max_iters):
        new, _ = _solve(ws, xi + lam + rho * fte)
        # dual step against the targets that produced this iterate
        lam = lam - rho * (_rowwise(new, ws.FtF) - fte)
        bad = ~np.all(np.isfinite(new), axis=1) & ~failed
        for i in np.nonzero(bad)[0]:
            diagnostics.append({"sample": int(i), "iteration": k, "event": "non-finite iterate"})
        failed |= bad
        if failed.any():
            # frozen samples keep their last finite state
            keep = failed[:, None]
            new = np.where(keep, xi_bar, new)
            lam = np.where(keep, 0.0, lam)
        xi_bar = new
        fte, r = sweep(xi_bar)
        if cfg.record_trace:
            res_trace[:, k] = r
            eq_trace[:, k] = np.max(np.abs(_rowwise(xi_bar, ws.A.T) - ws.b_eq), axis=1)
    r = np.where(failed, np.inf, r)
    return ProjectionResult(xi_bar, r, r <= cfg.feas_tol, failed, res_trace, eq_trace, diagnostics)
