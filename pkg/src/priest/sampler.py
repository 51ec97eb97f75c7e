"""Projection-guided sampling optimizer and its variants.

The outer loop draws coefficient samples from a Gaussian, projects them
toward feasibility, keeps the lowest-residual and then lowest-cost
samples, and refits the Gaussian with exponentiated-cost weights.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .basis import BasisSet, BoundaryConstraints, State, build_boundary_system, fit_min_accel, fit_waypoints
from .costs import CostWeights, augmented_cost
from .polar import Limits, Obstacle, build_constraint_system, residual
from .projection import (
    ProjectionConfig,
    ProjectionWorkspace,
    precompute_workspace,
    project_batch,
)

__all__ = [
    "OptimizeResult",
    "Problem",
    "SamplerConfig",
    "SamplerState",
    "cem_baseline_optimize",
    "compute_weights",
    "dpriest_optimize",
    "initial_state",
    "priest_optimize",
    "sample_batch",
    "select_lowest",
    "update_distribution",
]

log = logging.getLogger(__name__)

PSD_TOL = 1e-10


@dataclass(frozen=True)
class SamplerConfig:
    """Outer-loop settings.

    ``cov_scale`` sets the initial per-coefficient standard deviation as a
    fraction of the workspace extent on each axis. ``cov_length``, when
    set, replaces it with an absolute standard deviation in meters, which
    suits local plans in long workspaces. ``include_mean`` replaces the
    last draw of each distribution with its current mean, so the mean is
    always among the evaluated candidates.
    """

    N: int = 13
    N_b: int = 110
    N_proj: int = 80
    N_elite: int = 20
    sigma: float = 0.8
    gamma: float = 1.0
    M_dists: int = 1
    seed: int = 0
    cov_scale: float = 0.2
    init_cov: str = "smooth"
    spread: float = 0.5
    cov_length: float | None = None
    include_mean: bool = True

    def __post_init__(self):
        if not (1 <= self.N_elite <= self.N_proj <= self.N_b):
            raise ValueError(
                f"need 1 <= N_elite <= N_proj <= N_b, got {self.N_elite}, {self.N_proj}, {self.N_b}"
            )
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError(f"sigma must lie in [0, 1], got {self.sigma}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.M_dists < 1 or self.N_b % self.M_dists:
            raise ValueError(f"M_dists={self.M_dists} must divide N_b={self.N_b}")
        if self.N < 1:
            raise ValueError("N must be positive")
        if self.cov_length is not None and not self.cov_length > 0:
            raise ValueError(f"cov_length must be positive, got {self.cov_length}")
        if self.init_cov not in ("diagonal", "smooth"):
            raise ValueError(f"unknown init_cov {self.init_cov!r}")


@dataclass
class SamplerState:
    """Gaussian over coefficient vectors."""

    mu: np.ndarray
    cov: np.ndarray


@dataclass
class Problem:
    """Everything a single planning query needs.

    ``planar`` freezes the z coefficients at their boundary fit.
    ``init_mean`` overrides the minimum-acceleration initial mean.
    """

    start: State
    goal: np.ndarray
    obstacles: Sequence[Obstacle]
    limits: Limits
    basis: BasisSet
    weights: CostWeights = field(default_factory=CostWeights.point_to_point)
    planar: bool = False
    init_mean: np.ndarray | None = None
    init_means: Sequence[np.ndarray] | None = None

    def __post_init__(self):
        self.goal = np.asarray(self.goal, dtype=float)


@dataclass
class OptimizeResult:
    """Outcome of one optimisation run.

    ``best_cost`` is the lowest augmented cost seen in any elite set and
    ``best`` the matching coefficient vector.
    """

    best: np.ndarray
    best_cost: float
    best_residual: float
    feasible: bool
    diagnostics: list
    wall_time: float
    projection_time: float
    states: list
    distribution: int = 0
    eq_error_max: float = 0.0
    audited_iterates: int = 0


def sample_batch(state: SamplerState, N_b: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``N_b`` coefficient vectors from ``N(mu, cov)``.

    Raises
    ------
    np.linalg.LinAlgError
        If the covariance is not positive semidefinite even after jitter.
    """
    L = _factor(state.cov)
    z = rng.standard_normal((N_b, state.mu.size))
    return state.mu + z @ L.T


def _factor(cov):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh((cov + cov.T) / 2)
    scale = max(1.0, float(np.max(np.abs(w), initial=0.0)))
    if w.min() < -1e-8 * scale:
        raise np.linalg.LinAlgError(f"covariance is indefinite (min eigenvalue {w.min():.3e})")
    return V * np.sqrt(np.clip(w, 0.0, None))


def select_lowest(values, K: int) -> np.ndarray:
    """Indices of the ``K`` smallest values, ties broken by smaller index."""
    values = np.asarray(values)
    if K > values.size:
        raise ValueError(f"cannot select {K} of {values.size} values")
    return np.argsort(values, kind="stable")[:K]


def compute_weights(costs, gamma: float) -> np.ndarray:
    """Exponentiated-cost weights ``exp(-(c - min c) / gamma)``; the best is 1."""
    c = np.asarray(costs, dtype=float)
    if c.size == 0:
        raise ValueError("no elite costs")
    return np.exp(-(c - c.min()) / gamma)


def update_distribution(state: SamplerState, elites, weights, sigma: float) -> SamplerState:
    """Blend the weighted elite mean and covariance into ``state``.

    The covariance is taken about the new mean. A zero total weight leaves
    the state unchanged with a warning.
    """
    elites = np.asarray(elites, dtype=float)
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0:
        warnings.warn("elite weights sum to zero; distribution left unchanged", RuntimeWarning)
        return state
    mean = w @ elites / total
    mu = (1.0 - sigma) * state.mu + sigma * mean
    dev = elites - mu
    cov_e = (dev * w[:, None]).T @ dev / total
    cov = (1.0 - sigma) * state.cov + sigma * cov_e
    cov = (cov + cov.T) / 2
    w_min = np.linalg.eigvalsh(cov).min() if cov.size else 0.0
    if w_min < -PSD_TOL:
        cov = cov + (-w_min) * np.eye(cov.shape[0])
    return SamplerState(mu, cov)


def _axis_mask(basis: BasisSet, planar: bool) -> np.ndarray:
    mask = np.ones(basis.n_v)
    if planar:
        mask[2 * basis.n_c :] = 0.0
    return mask


def initial_state(problem: Problem, bc: BoundaryConstraints, cfg: SamplerConfig, offset=None) -> SamplerState:
    """Minimum-acceleration mean and a covariance scaled by workspace extent.

    Without obstacles the mean is the exact smoothness optimum. Its path is
    the straight start-goal segment. ``offset`` shifts the path midpoint
    laterally (perpendicular to the start-goal direction in the horizontal
    plane) with a tent profile.
    """
    basis = problem.basis
    if problem.init_mean is not None and offset is None:
        mu = np.asarray(problem.init_mean, dtype=float).copy()
    else:
        mu = fit_min_accel(basis, bc)
        if offset:
            s = np.linspace(0.0, 1.0, basis.n_p)[:, None]
            d = problem.goal - problem.start.pos
            lateral = np.array([-d[1], d[0], 0.0])
            n = np.linalg.norm(lateral)
            lateral = lateral / n if n > 0 else np.array([0.0, 1.0, 0.0])
            path = (basis.P @ mu.reshape(3, -1).T) + offset * np.minimum(s, 1 - s) * 2 * lateral
            mu = fit_waypoints(basis, bc, path)
    if cfg.cov_length is not None:
        extent = np.full(3, cfg.cov_length)
    else:
        extent = cfg.cov_scale * (problem.limits.s_max - problem.limits.s_min)
    scale = np.repeat(extent, basis.n_c) * _axis_mask(basis, problem.planar)
    if cfg.init_cov == "diagonal":
        cov = np.diag(scale**2)
    else:
        cov = _smooth_cov(basis) * np.outer(scale, scale)
    return SamplerState(mu, cov)


def _smooth_cov(basis: BasisSet) -> np.ndarray:
    """Coefficient covariance induced by a second-difference waypoint prior.

    Normalised so each axis block has unit peak waypoint variance.
    """
    n = basis.n_p
    D = np.diff(np.eye(n), 2, axis=0)
    R = D.T @ D
    # pin both ends so the prior is proper
    R[0, 0] += 1.0
    R[-1, -1] += 1.0
    K = np.linalg.inv(R)
    K /= K.diagonal().max()
    W = np.linalg.pinv(basis.P)
    block = W @ K @ W.T
    n_c = basis.n_c
    cov = np.zeros((3 * n_c, 3 * n_c))
    for k in range(3):
        cov[k * n_c : (k + 1) * n_c, k * n_c : (k + 1) * n_c] = block
    return cov


def _lateral_offsets(problem: Problem, M: int, spread: float):
    if M == 1:
        return [None]
    extent = float(np.max((problem.limits.s_max - problem.limits.s_min)[:2]))
    return list(np.linspace(-spread, spread, M) * extent)


def dpriest_optimize(
    problem: Problem,
    cfg: SamplerConfig | None = None,
    proj_cfg: ProjectionConfig | None = None,
    *,
    workspace: ProjectionWorkspace | None = None,
    states: Sequence[SamplerState] | None = None,
    on_iteration=None,
) -> OptimizeResult:
    """Run ``M_dists`` distributions that share one projection batch.

    Returns the lowest-cost solution over all distributions.
    """
    return _optimize(problem, cfg or SamplerConfig(), proj_cfg or ProjectionConfig(), workspace, states, on_iteration, False)


def priest_optimize(
    problem: Problem,
    cfg: SamplerConfig | None = None,
    proj_cfg: ProjectionConfig | None = None,
    *,
    workspace: ProjectionWorkspace | None = None,
    states: Sequence[SamplerState] | None = None,
    on_iteration=None,
) -> OptimizeResult:
    """Projection-guided sampling optimisation with a single distribution."""
    cfg = cfg or SamplerConfig()
    if cfg.M_dists != 1:
        cfg = replace(cfg, M_dists=1)
    return _optimize(problem, cfg, proj_cfg or ProjectionConfig(), workspace, states, on_iteration, False)


def cem_baseline_optimize(
    problem: Problem,
    cfg: SamplerConfig | None = None,
    proj_cfg: ProjectionConfig | None = None,
    *,
    states: Sequence[SamplerState] | None = None,
    on_iteration=None,
) -> OptimizeResult:
    """Same loop with a boundary-only projection and penalty-based selection."""
    cfg = cfg or SamplerConfig()
    proj_cfg = replace(proj_cfg or ProjectionConfig(), rho=0.0, max_iters=1)
    return _optimize(problem, cfg, proj_cfg, None, states, on_iteration, True)


def _split(total, M):
    return max(1, int(round(total / M)))


def _optimize(problem, cfg, proj_cfg, workspace, states, on_iteration, penalty_only):
    t_start = time.perf_counter()
    basis = problem.basis
    bc = build_boundary_system(basis, problem.start, problem.goal)
    system = build_constraint_system(basis, problem.obstacles, problem.limits)
    ws = workspace if workspace is not None else precompute_workspace(system, bc, proj_cfg)
    if not np.array_equal(ws.b_eq, bc.b_eq):
        ws = replace(ws, b_eq=bc.b_eq.copy())
    M = cfg.M_dists
    n_per = cfg.N_b // M
    n_proj = min(_split(cfg.N_proj, M), n_per)
    n_elite = min(_split(cfg.N_elite, M), n_proj)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(M)]
    if states is None:
        if problem.init_means is not None:
            states = [initial_state(replace(problem, init_mean=m), bc, cfg) for m in problem.init_means]
        else:
            states = [initial_state(problem, bc, cfg, off) for off in _lateral_offsets(problem, M, cfg.spread)]
    states = list(states)
    if len(states) != M:
        raise ValueError(f"expected {M} initial states, got {len(states)}")
    mask = _axis_mask(basis, problem.planar)

    best = [None] * M
    best_cost = np.full(M, np.inf)
    best_res = np.full(M, np.inf)
    diagnostics = []
    proj_time = 0.0
    eq_max = 0.0
    audited = 0
    for it in range(cfg.N):
        t_it = time.perf_counter()
        parts = []
        for j in range(M):
            draw = sample_batch(states[j], n_per, rngs[j])
            if cfg.include_mean:
                draw[-1] = states[j].mu
            if problem.planar:
                draw = draw * mask + states[j].mu * (1 - mask)
            parts.append(draw)
        batch = np.vstack(parts)
        t_p = time.perf_counter()
        proj = project_batch(batch, system, bc, proj_cfg, ws)
        proj_time += time.perf_counter() - t_p
        if proj_cfg.record_trace:
            eq_max = max(eq_max, float(np.nanmax(proj.eq_error_trace)))
            audited += int(np.isfinite(proj.eq_error_trace).sum())
        xi_bar = proj.xi_bar
        r = proj.residuals
        if not np.all(np.isfinite(r)) and np.all(~np.isfinite(r)):
            raise FloatingPointError(f"every sample diverged at iteration {it}: {proj.diagnostics[:3]}")
        entry = {"iteration": it, "distributions": []}
        for j in range(M):
            sl = slice(j * n_per, (j + 1) * n_per)
            xj, rj = xi_bar[sl], r[sl]
            if penalty_only:
                cand = np.arange(n_per)
            else:
                cand = select_lowest(rj, n_proj)
            c = augmented_cost(xj[cand], rj[cand], problem.weights, basis, problem.start.pos, problem.goal)
            c = np.where(np.isfinite(c), c, np.inf)
            elite = cand[select_lowest(c, n_elite)]
            ce = c[select_lowest(c, n_elite)]
            if not np.all(np.isfinite(ce)):
                raise FloatingPointError(f"non-finite elite cost at iteration {it}")
            if ce[0] < best_cost[j]:
                best_cost[j] = ce[0]
                best[j] = xj[elite[0]].copy()
                best_res[j] = rj[elite[0]]
            w = compute_weights(ce, cfg.gamma)
            states[j] = update_distribution(states[j], xj[elite], w, cfg.sigma)
            entry["distributions"].append(
                {
                    "min_cost": float(ce[0]),
                    "mean_cost": float(np.mean(c[np.isfinite(c)])),
                    "mean_residual": float(np.mean(rj[np.isfinite(rj)])),
                    "min_residual": float(np.min(rj)),
                    "elite_count": int(len(elite)),
                    "best_cost": float(best_cost[j]),
                }
            )
        entry["elapsed_ms"] = 1e3 * (time.perf_counter() - t_it)
        diagnostics.append(entry)
        if on_iteration is not None:
            on_iteration(entry)
        log.debug("iteration %d: best cost %.4g", it, float(best_cost.min()))

    j = int(np.argmin(best_cost))
    if penalty_only:
        final_r = float(best_res[j])
    else:
        final_r = float(residual(best[j], system))
    return OptimizeResult(
        best=best[j],
        best_cost=float(best_cost[j]),
        best_residual=final_r,
        feasible=bool(final_r <= proj_cfg.feas_tol),
        diagnostics=diagnostics,
        wall_time=time.perf_counter() - t_start,
        projection_time=proj_time,
        states=states,
        distribution=j,
        eq_error_max=eq_max,
        audited_iterates=audited,
    )
