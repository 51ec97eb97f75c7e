"""Receding-horizon planning loop with range-sensor obstacle perception."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..basis import State, build_basis, build_boundary_system, fit_waypoints
from ..costs import CostWeights
from ..polar import Limits
from ..projection import ProjectionConfig
from ..sampler import Problem, SamplerConfig, cem_baseline_optimize, dpriest_optimize, priest_optimize
from .environments import Environment, RobotState, step_world
from .lidar import extract_obstacles, lidar_scan

__all__ = ["EpisodeResult", "MPCConfig", "kinematic_lower_bound", "run_mpc_episode"]


@dataclass(frozen=True)
class MPCConfig:
    """Receding-horizon settings.

    A plan is executed when it keeps ``accept_clearance`` from every
    scanned point and stays within ``limit_tol`` of the speed and
    acceleration limits. The local goal is placed so that the smoothest
    plan reaches ``cruise * v_max`` at the end of the horizon. Near the
    goal the horizon shrinks, in steps of ``horizon_step`` down to
    ``min_horizon``, so the robot does not crawl in. The sampler runs ``N_first``
    iterations on cold starts and ``sampler.N`` on warm-started ones.
    """

    planner: str = "priest"
    horizon: float = 5.0
    dt: float = 0.1
    timeout: float = 120.0
    goal_tol: float = 0.5
    inflate: float = 0.3
    n_rays: int = 360
    max_range: float = 6.0
    voxel_size: float = 0.15
    K: int = 60
    n_p: int = 50
    cruise: float = 0.95
    min_speed: float = 0.3
    min_horizon: float = 1.0
    horizon_step: float = 0.5
    accept_clearance: float = 0.15
    limit_tol: float = 0.05
    N_first: int = 13
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(N=4, cov_length=0.6))
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    weights: CostWeights = field(default_factory=CostWeights.mpc)

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon > self.dt):
            raise ValueError(f"need 0 < dt < horizon, got dt={self.dt}, horizon={self.horizon}")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.planner not in _PLANNERS:
            raise ValueError(f"unknown planner {self.planner!r}")
        if self.K < 1:
            raise ValueError("K must be positive")


@dataclass
class EpisodeResult:
    """Outcome of one episode.

    ``travel_time`` is the first time the robot is within ``goal_tol`` of
    the goal, or ``nan`` on failure. ``log`` holds one record per step.
    """

    success: bool
    travel_time: float
    compute_times: list
    collision: bool
    log: list
    cause: str = ""


def kinematic_lower_bound(distance: float, v_max: float) -> float:
    """Straight-line distance over top speed."""
    return distance / v_max


_PLANNERS = {"priest": priest_optimize, "dpriest": dpriest_optimize, "cem": cem_baseline_optimize}


class _Plan:
    """Coefficients on ``[0, horizon]`` anchored at world time ``t0``."""

    def __init__(self, coeffs, basis, t0):
        self.C = np.asarray(coeffs).reshape(3, -1)
        self.basis = basis
        self.t0 = t0

    def __call__(self, t):
        tau = np.clip(np.atleast_1d(np.asarray(t, dtype=float) - self.t0), self.basis.t0, self.basis.tf)
        P, Pd, Pdd = self.basis.rows(tau)
        return (self.C @ P.T).T, (self.C @ Pd.T).T, (self.C @ Pdd.T).T

    def remaining(self, t):
        return self.t0 + self.basis.tf - t


def _clear(point, obstacles, radius):
    return len(obstacles) == 0 or np.min(np.linalg.norm(obstacles[:, :2] - point[:2], axis=1)) > radius


def _schedule(robot, goal, env, cfg):
    """Local-goal distance and horizon for the next plan.

    The distance is what the smoothest plan covers while speeding up from
    the current speed to cruise speed over one horizon. When the goal is
    closer the horizon shrinks so the robot keeps its speed.
    """
    v0 = float(np.linalg.norm(robot.vel))
    cruise = cfg.cruise * env.v_max
    speed = (v0 + 2.0 * cruise) / 3.0
    dist = float(np.linalg.norm(goal - robot.pos))
    reach = speed * cfg.horizon
    if dist >= reach:
        return reach, cfg.horizon
    T = max(dist / max(speed, cfg.min_speed), cfg.min_horizon)
    T = min(cfg.horizon, cfg.horizon_step * np.ceil(T / cfg.horizon_step))
    return dist, float(T)


def _local_goal(robot_pos, goal, length, obstacles, env, cfg):
    """Point ``length`` toward the goal, nudged into free space."""
    d = goal - robot_pos
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        return goal.copy()
    u = d / dist
    lateral = np.array([-u[1], u[0], 0.0])
    radius = cfg.inflate + 0.1
    lo, hi = env.s_min + 0.1, env.s_max - 0.1
    # walk back toward the robot, trying lateral shifts at each distance
    for back in np.arange(0.0, length, 0.25):
        centre = goal.copy() if back == 0.0 and length >= dist else robot_pos + u * (length - back)
        for shift in (0.0, 0.25, -0.25, 0.5, -0.5, 0.75, -0.75, 1.0, -1.0):
            p = centre + shift * lateral
            if np.all(p[:2] >= lo[:2]) and np.all(p[:2] <= hi[:2]) and _clear(p, obstacles, radius):
                return p
    return robot_pos.copy()


def _plan_is_safe(plan, t, points, env, cfg, n=50):
    """Clearance, limit and bound check over the rest of ``plan``."""
    ts = np.linspace(t, t + plan.remaining(t), n)
    pos, vel, acc = plan(ts)
    if np.linalg.norm(vel, axis=1).max() > env.v_max * (1 + cfg.limit_tol):
        return False
    if np.linalg.norm(acc, axis=1).max() > env.a_max * (1 + cfg.limit_tol):
        return False
    if np.any(pos < env.s_min) or np.any(pos > env.s_max):
        return False
    if len(points) == 0:
        return True
    d = np.linalg.norm(pos[:, None, :2] - points[None, :, :2], axis=2)
    return bool(d.min() > cfg.accept_clearance)


def _brake(robot: RobotState, a_max: float):
    """Constant deceleration to rest, then hold."""
    v = robot.vel
    speed = float(np.linalg.norm(v))
    t_stop = speed / a_max if speed > 0 else 0.0
    dirn = v / speed if speed > 0 else np.zeros(3)

    def command(t):
        s = min(float(t), t_stop)
        pos = robot.pos + v * s - 0.5 * a_max * dirn * s * s
        vel = v - a_max * dirn * s
        acc = -a_max * dirn if s < t_stop else np.zeros(3)
        return pos[None], vel[None], acc[None]

    return command


def run_mpc_episode(env: Environment, cfg: MPCConfig = MPCConfig(), seed: int = 0) -> EpisodeResult:
    """Drive a point robot from ``env.start`` to ``env.goal``.

    Each step scans, plans over the horizon from the current state and
    executes the first ``dt`` of the plan. Replans warm-start from the
    shifted previous mean when the previous plan was accepted and
    cold-start from the minimum-acceleration mean otherwise. When a new plan fails the
    safety check the robot keeps following the previous plan if that still
    passes, and otherwise brakes.
    """
    bases = {}
    limits = Limits(env.v_max, env.a_max, env.s_min, env.s_max)
    robot = RobotState(env.start.astype(float).copy(), np.zeros(3), np.zeros(3), 0.0)
    goal = np.asarray(env.goal, dtype=float)
    compute_times = []
    log = []
    prev_mean = None
    plan = None
    step = 0

    def record(**extra):
        log.append({"t": robot.t, "pos": robot.pos.tolist(), "vel": robot.vel.tolist(), **extra})

    if np.linalg.norm(robot.pos - goal) <= cfg.goal_tol:
        record(event="start_at_goal")
        return EpisodeResult(True, 0.0, compute_times, False, log)

    n_steps = int(round(cfg.timeout / cfg.dt))
    while step < n_steps:
        t_plan = time.perf_counter()
        points = lidar_scan(robot.pos, env, cfg.n_rays, cfg.max_range)
        centres = extract_obstacles(points, robot.pos, cfg.voxel_size, cfg.K)
        length, T = _schedule(robot, goal, env, cfg)
        local = _local_goal(robot.pos, goal, length, centres, env, cfg)
        if T not in bases:
            bases[T] = build_basis(0.0, T, cfg.n_p)
        basis = bases[T]
        n_o = len(centres)
        obstacles = (
            np.broadcast_to(centres[:, None, :], (n_o, cfg.n_p, 3)).copy(),
            np.full(n_o, cfg.inflate),
            np.full(n_o, cfg.inflate),
        )
        start = State(robot.pos.copy(), robot.vel.copy(), robot.acc.copy())
        bc = build_boundary_system(basis, start, local)
        init_mean = None
        if prev_mean is not None:
            # shift the previous mean to the current time and refit to the new boundary values
            init_mean = fit_waypoints(basis, bc, prev_mean(robot.t + basis.t)[0])
        problem = Problem(start, local, obstacles, limits, basis, cfg.weights, planar=env.planar, init_mean=init_mean)
        scfg = replace(cfg.sampler, seed=seed * 100_003 + step, N=cfg.N_first if prev_mean is None else cfg.sampler.N)
        try:
            res = _PLANNERS[cfg.planner](problem, scfg, cfg.projection)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            compute_times.append(time.perf_counter() - t_plan)
            record(event="planner_abort")
            return EpisodeResult(False, float("nan"), compute_times, False, log, f"planner abort: {exc}")
        compute_times.append(time.perf_counter() - t_plan)
        candidate = _Plan(res.best, basis, robot.t)
        if _plan_is_safe(candidate, robot.t, points, env, cfg):
            plan = candidate
            source = "new"
            prev_mean = _Plan(res.states[0].mu, basis, robot.t)
        elif plan is not None and plan.remaining(robot.t) >= cfg.dt and _plan_is_safe(plan, robot.t, points, env, cfg):
            source = "previous"
        else:
            plan = None
            source = "brake"
        if source != "new":
            # a rejected mean is a poor seed and degrades under repeated shifts
            prev_mean = None
        if plan is not None:
            t_now = robot.t

            def command(s, plan=plan, t_now=t_now):
                p, v, a = plan(t_now + s)
                return p[0], v[0], a[0]

        else:
            brake = _brake(robot, env.a_max)

            def command(s, brake=brake):
                p, v, a = brake(s)
                return p[0], v[0], a[0]

        env, robot, collided = step_world(env, robot, command, cfg.dt)
        step += 1
        record(source=source, residual=float(res.best_residual), n_obstacles=n_o, local_goal=local.tolist(), horizon=T, collided=collided)
        if collided:
            return EpisodeResult(False, float("nan"), compute_times, True, log, "collision")
        if np.linalg.norm(robot.pos - goal) <= cfg.goal_tol:
            return EpisodeResult(True, robot.t, compute_times, False, log)
    return EpisodeResult(False, float("nan"), compute_times, False, log, "timeout")
