"""Benchmark suites, success checks, aggregate metrics and timing studies."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..basis import State, build_basis, build_boundary_system
from ..costs import CostWeights
from ..polar import Limits, build_constraint_system
from ..projection import ProjectionConfig, precompute_workspace, project_batch
from ..sampler import (
    Problem,
    SamplerConfig,
    cem_baseline_optimize,
    dpriest_optimize,
    priest_optimize,
)
from .environments import EnvConfig, Environment, generate_env_2d, generate_env_3d, generate_env_dynamic
from .mpc import MPCConfig, run_mpc_episode

__all__ = [
    "PLANNERS",
    "SUITES",
    "MetricsTable",
    "PlannerSettings",
    "TrialRecord",
    "check_trajectory",
    "dpriest_scaling",
    "linear_fit",
    "make_problem",
    "plan_static",
    "run_benchmark",
    "scaling_bench",
]

PLANNERS = ("priest", "dpriest", "cem")
SUITES = ("static2d", "static3d", "dynamic", "point2point")


@dataclass(frozen=True)
class PlannerSettings:
    """Planner configuration shared by the static and receding-horizon suites.

    ``margin`` inflates obstacles during planning only; success is judged
    against the true obstacles. ``dpriest_dists`` is the number of
    distributions used when the planner is ``"dpriest"``.
    """

    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    weights: CostWeights = field(default_factory=CostWeights.point_to_point)
    margin: float = 0.1
    n_p: int = 50
    dpriest_dists: int = 2
    check_points: int = 1000
    limit_tol: float = 0.02
    mpc: MPCConfig = field(default_factory=MPCConfig)

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be non-negative")


@dataclass
class TrialRecord:
    """One trial: static plan or receding-horizon episode."""

    seed: int
    success: bool
    travel_time: float
    compute_times: list
    cause: str = ""

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "success": self.success,
            "travel_time": self.travel_time,
            "compute_times": list(map(float, self.compute_times)),
            "cause": self.cause,
        }


def _stats(values):
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return float("nan"), float("nan"), float("nan")
    return float(v.mean()), float(v.min()), float(v.max())


@dataclass
class MetricsTable:
    """Aggregates over a list of trials.

    Travel-time statistics use successful trials only. Compute-time
    statistics pool every planning call.
    """

    planner: str
    suite: str
    trials: list

    @property
    def n_trials(self) -> int:
        return len(self.trials)

    @property
    def success_rate(self) -> float:
        return float(np.mean([t.success for t in self.trials])) if self.trials else float("nan")

    @property
    def travel_time(self):
        return _stats([t.travel_time for t in self.trials if t.success])

    @property
    def compute_time(self):
        return _stats([c for t in self.trials for c in t.compute_times])

    COLUMNS = (
        "planner",
        "suite",
        "trials",
        "success_rate",
        "travel_time_mean",
        "travel_time_min",
        "travel_time_max",
        "compute_time_mean",
        "compute_time_min",
        "compute_time_max",
    )

    def to_row(self) -> dict:
        tt, ct = self.travel_time, self.compute_time
        return dict(zip(self.COLUMNS, (self.planner, self.suite, self.n_trials, self.success_rate, *tt, *ct)))


def make_problem(env: Environment, settings: PlannerSettings) -> Problem:
    """Planning problem over ``[0, env.horizon]`` with inflated obstacles."""
    basis = build_basis(0.0, env.horizon, settings.n_p)
    obstacles = [o.to_polar(basis.t, settings.margin) for o in env.obstacles]
    return Problem(
        State.at_rest(env.start),
        env.goal,
        obstacles,
        env.limits,
        basis,
        settings.weights,
        planar=env.planar,
    )


def _planner_fn(planner: str) -> Callable:
    if planner == "priest":
        return priest_optimize
    if planner == "dpriest":
        return dpriest_optimize
    if planner == "cem":
        return cem_baseline_optimize
    raise ValueError(f"unknown planner {planner!r}; expected one of {PLANNERS}")


def _sampler_for(planner: str, settings: PlannerSettings, seed: int) -> SamplerConfig:
    cfg = replace(settings.sampler, seed=seed)
    if planner == "dpriest" and cfg.M_dists == 1:
        cfg = replace(cfg, M_dists=settings.dpriest_dists)
    return cfg


def plan_static(env: Environment, planner: str, settings: PlannerSettings, seed: int):
    """Single-shot plan for a point-to-point environment.

    Returns the optimiser result and the problem it solved.
    """
    fn = _planner_fn(planner)
    problem = make_problem(env, settings)
    res = fn(problem, _sampler_for(planner, settings, seed), settings.projection)
    return res, problem


def check_trajectory(env: Environment, coeffs, basis, n: int = 1000, tol: float = 0.02, goal_tol: float = 0.5) -> dict:
    """Judge a trajectory against the true environment on a dense grid.

    Success requires no collision, staying within the workspace bounds,
    speed and acceleration within ``(1 + tol)`` of their limits, and an
    endpoint within ``goal_tol`` of the goal.
    """
    times = np.linspace(basis.t0, basis.tf, n)
    P, Pd, Pdd = basis.rows(times)
    C = np.asarray(coeffs).reshape(3, -1)
    pos, vel, acc = (C @ P.T).T, (C @ Pd.T).T, (C @ Pdd.T).T
    collision = bool(env.collides(pos, times if env.dynamic else 0.0).any())
    in_bounds = bool(np.all(pos >= env.s_min - 1e-6) and np.all(pos <= env.s_max + 1e-6))
    v_peak = float(np.linalg.norm(vel, axis=1).max())
    a_peak = float(np.linalg.norm(acc, axis=1).max())
    goal_dist = float(np.linalg.norm(pos[-1] - env.goal))
    ok = (
        not collision
        and in_bounds
        and v_peak <= env.v_max * (1 + tol)
        and a_peak <= env.a_max * (1 + tol)
        and goal_dist <= goal_tol
    )
    return {
        "success": ok,
        "collision": collision,
        "in_bounds": in_bounds,
        "v_peak": v_peak,
        "a_peak": a_peak,
        "goal_dist": goal_dist,
    }


def _static_trial(env, planner, settings, seed) -> TrialRecord:
    try:
        res, problem = plan_static(env, planner, settings, seed)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        return TrialRecord(seed, False, float("nan"), [], f"planner abort: {exc}")
    check = check_trajectory(env, res.best, problem.basis, settings.check_points, settings.limit_tol)
    cause = "" if check["success"] else ",".join(
        k for k, bad in (
            ("collision", check["collision"]),
            ("bounds", not check["in_bounds"]),
            ("speed", check["v_peak"] > env.v_max * (1 + settings.limit_tol)),
            ("accel", check["a_peak"] > env.a_max * (1 + settings.limit_tol)),
        ) if bad
    )
    travel = problem.basis.duration if check["success"] else float("nan")
    return TrialRecord(seed, check["success"], travel, [res.wall_time], cause)


def _dynamic_trial(env, planner, settings, seed) -> TrialRecord:
    mpc = replace(settings.mpc, planner=planner)
    ep = run_mpc_episode(env, mpc, seed)
    return TrialRecord(seed, ep.success, ep.travel_time, ep.compute_times, ep.cause)


def _generators(suite: str, env_cfg: EnvConfig):
    if suite == "static2d":
        return [lambda rng: generate_env_2d(rng, env_cfg)]
    if suite == "static3d":
        return [lambda rng: generate_env_3d(rng, env_cfg)]
    if suite == "dynamic":
        return [lambda rng: generate_env_dynamic(rng, env_cfg)]
    if suite == "point2point":
        return [lambda rng: generate_env_2d(rng, env_cfg), lambda rng: generate_env_3d(rng, env_cfg)]
    raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")


def run_benchmark(
    suite: str,
    n_trials: int,
    seeds: Sequence[int] | None = None,
    planners: Sequence[str] = ("priest",),
    settings: PlannerSettings = PlannerSettings(),
    env_cfg: EnvConfig = EnvConfig(),
    on_trial: Callable | None = None,
) -> dict:
    """Run ``n_trials`` seeded trials per planner; returns planner -> table.

    Every planner sees the same environment for a given seed. The
    ``point2point`` suite runs each seed in both the planar and the room
    family, so it holds ``2 * n_trials`` trials per planner.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be positive")
    seeds = list(range(n_trials)) if seeds is None else list(seeds)
    if len(seeds) != n_trials:
        raise ValueError(f"got {len(seeds)} seeds for {n_trials} trials")
    for p in planners:
        _planner_fn(p)
    gens = _generators(suite, env_cfg)
    tables = {p: MetricsTable(p, suite, []) for p in planners}
    for seed in seeds:
        for gen in gens:
            env = gen(np.random.default_rng(seed))
            for p in planners:
                if env.dynamic:
                    rec = _dynamic_trial(env, p, settings, seed)
                else:
                    rec = _static_trial(env, p, settings, seed)
                tables[p].trials.append(rec)
                if on_trial is not None:
                    on_trial(p, env, rec)
    return tables


def linear_fit(x, y):
    """Least-squares line; returns ``(slope, intercept, r2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _scaling_problem(n_o, n_p, rng):
    basis = build_basis(0.0, 10.0, n_p)
    centres = rng.uniform([1.0, 1.0, -0.5], [9.0, 9.0, 0.5], size=(n_o, 3))
    obstacles = (np.repeat(centres[:, None, :], n_p, axis=1), np.full(n_o, 0.5), np.full(n_o, 0.5))
    limits = Limits(2.0, 2.0, np.array([0.0, 0.0, -1.0]), np.array([10.0, 10.0, 1.0]))
    start = State.at_rest([0.5, 0.5, 0.0])
    bc = build_boundary_system(basis, start, [9.5, 9.5, 0.0])
    return basis, build_constraint_system(basis, obstacles, limits), bc


def scaling_bench(
    obstacle_counts: Sequence[int] = (8, 16, 32, 64),
    batch_sizes: Sequence[int] = (32, 64, 128, 256),
    repeats: int = 5,
    iters: int = 10,
    n_p: int = 50,
    proj_cfg: ProjectionConfig = ProjectionConfig(),
    seed: int = 0,
) -> list:
    """Time one projection iteration over an obstacle-count by batch-size grid.

    Each cell is warmed up once, then the whole grid is swept ``repeats``
    times with ``iters`` iterations per cell and sweep. Interleaving the
    sweeps keeps a transient slowdown from biasing a single cell. Reports
    the per-iteration mean, standard deviation and minimum in seconds.
    """
    if repeats < 1 or iters < 1:
        raise ValueError("repeats and iters must be positive")
    rng = np.random.default_rng(seed)
    cfg = replace(proj_cfg, max_iters=iters, record_trace=False)
    cells = []
    for n_o in obstacle_counts:
        basis, system, bc = _scaling_problem(n_o, n_p, rng)
        ws = precompute_workspace(system, bc, cfg)
        for N_b in batch_sizes:
            samples = rng.normal(0.0, 1.0, size=(N_b, basis.n_v))
            project_batch(samples, system, bc, cfg, ws)
            cells.append((n_o, N_b, samples, system, bc, ws))
    times = np.zeros((len(cells), repeats))
    for rep in range(repeats):
        for i, (_, _, samples, system, bc, ws) in enumerate(cells):
            t0 = time.perf_counter()
            project_batch(samples, system, bc, cfg, ws)
            times[i, rep] = (time.perf_counter() - t0) / iters
    return [
        {"n_o": n_o, "N_b": N_b, "mean_s": float(t.mean()), "std_s": float(t.std()), "min_s": float(t.min()), "repeats": repeats}
        for (n_o, N_b, *_), t in zip(cells, times)
    ]


def dpriest_scaling(
    dists: Sequence[int] = (1, 2, 4, 8),
    per_dist_batch: int = 64,
    repeats: int = 3,
    N: int = 3,
    settings: PlannerSettings = PlannerSettings(),
    env_cfg: EnvConfig = EnvConfig(),
    seed: int = 0,
) -> list:
    """Per-outer-iteration time of the multi-distribution optimiser.

    Each distribution keeps ``per_dist_batch`` samples, so the total batch
    grows with the number of distributions. The distribution counts are
    timed in interleaved rounds, as in :func:`scaling_bench`.
    """
    env = generate_env_2d(np.random.default_rng(seed), env_cfg)
    problem = make_problem(env, settings)
    bc = build_boundary_system(problem.basis, problem.start, problem.goal)
    system = build_constraint_system(problem.basis, problem.obstacles, problem.limits)
    ws = precompute_workspace(system, bc, settings.projection)
    cfgs = []
    for M in dists:
        cfg = replace(
            settings.sampler,
            N=N,
            N_b=M * per_dist_batch,
            N_proj=M * max(1, per_dist_batch * 3 // 4),
            N_elite=M * max(1, per_dist_batch // 5),
            M_dists=M,
            seed=seed,
        )
        dpriest_optimize(problem, replace(cfg, N=1), settings.projection, workspace=ws)
        cfgs.append(cfg)
    times = np.zeros((len(cfgs), repeats))
    for rep in range(repeats):
        for i, cfg in enumerate(cfgs):
            res = dpriest_optimize(problem, cfg, settings.projection, workspace=ws)
            times[i, rep] = np.mean([d["elapsed_ms"] for d in res.diagnostics]) / 1e3
    return [
        {"M_dists": cfg.M_dists, "N_b": cfg.N_b, "mean_s": float(t.mean()), "std_s": float(t.std()), "min_s": float(t.min()), "repeats": repeats}
        for cfg, t in zip(cfgs, times)
    ]
