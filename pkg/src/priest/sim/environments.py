"""Random benchmark worlds and world stepping."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..polar import Limits, Obstacle

__all__ = [
    "EnvConfig",
    "EnvObstacle",
    "Environment",
    "RobotState",
    "generate_env_2d",
    "generate_env_3d",
    "generate_env_dynamic",
    "step_world",
]


@dataclass(frozen=True)
class EnvObstacle:
    """Physical obstacle: ellipsoid ``(a, a, b)`` moving at constant velocity."""

    pos: np.ndarray
    a: float
    b: float
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def at(self, t: float) -> np.ndarray:
        return self.pos + t * self.velocity

    def inside(self, points, t=0.0, margin=0.0) -> np.ndarray:
        """Ellipsoid membership of ``points`` (shape ``(..., 3)``) at times ``t``."""
        t = np.asarray(t, dtype=float)
        c = self.pos + t[..., None] * self.velocity
        d = np.asarray(points) - c
        a, b = self.a + margin, self.b + margin
        return (d[..., 0] ** 2 + d[..., 1] ** 2) / a**2 + d[..., 2] ** 2 / b**2 < 1.0

    def to_polar(self, times, margin: float = 0.0, t0: float = 0.0) -> Obstacle:
        """Predicted obstacle over ``times`` measured from world time ``t0``."""
        times = np.asarray(times, dtype=float)
        return Obstacle.moving(self.at(t0), self.velocity, self.a + margin, self.b + margin, times)


@dataclass
class RobotState:
    """Point-robot state with world time."""

    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    t: float = 0.0


@dataclass
class Environment:
    """Obstacle field with workspace bounds, start and goal."""

    obstacles: list
    s_min: np.ndarray
    s_max: np.ndarray
    start: np.ndarray
    goal: np.ndarray
    v_max: float
    a_max: float
    horizon: float
    planar: bool = False
    dynamic: bool = False
    kind: str = "custom"
    time: float = 0.0

    @property
    def limits(self) -> Limits:
        return Limits(self.v_max, self.a_max, self.s_min, self.s_max)

    def collides(self, points, t=0.0, margin=0.0) -> np.ndarray:
        """True where any obstacle (at world time ``t``) contains a point."""
        points = np.asarray(points, dtype=float)
        hit = np.zeros(points.shape[:-1], dtype=bool)
        for o in self.obstacles:
            hit |= o.inside(points, t, margin)
        return hit

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "obstacles"}
        out["obstacles"] = [
            {"pos": list(map(float, o.pos)), "a": o.a, "b": o.b, "velocity": list(map(float, o.velocity))}
            for o in self.obstacles
        ]
        return _jsonable(out)

    @classmethod
    def from_dict(cls, data: dict) -> "Environment":
        data = dict(data)
        obstacles = [
            EnvObstacle(np.asarray(o["pos"], float), float(o["a"]), float(o["b"]), np.asarray(o.get("velocity", [0, 0, 0]), float))
            for o in data.pop("obstacles")
        ]
        for key in ("s_min", "s_max", "start", "goal"):
            data[key] = np.asarray(data[key], dtype=float)
        return cls(obstacles=obstacles, **data)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


@dataclass(frozen=True)
class EnvConfig:
    """Generator settings for the three benchmark families.

    Values the benchmark description leaves open (arena sizes, limits,
    horizons, corridor geometry) live here.
    """

    # planar clutter
    arena_2d: tuple = (16.0, 10.0)
    n_obs_2d: int = 50
    radius_2d: float = 0.4
    clearance: float = 0.8
    v_max_2d: float = 2.0
    a_max_2d: float = 2.0
    horizon_2d: float = 15.0
    # room
    room_3d: tuple = (7.0, 7.0, 3.0)
    n_obs_3d: int = 25
    radius_3d: float = 0.68
    v_max_3d: float = 2.0
    a_max_3d: float = 2.0
    horizon_3d: float = 10.0
    # corridor with oncoming obstacles
    corridor: tuple = (14.0, 3.0)
    n_obs_dyn: int = 10
    radius_dyn: float = 0.3
    speed_dyn: float = 0.1
    v_max_dyn: float = 1.0
    a_max_dyn: float = 1.0
    max_tries: int = 100_000


def _place(rng, n, low, high, keep_clear, r, clearance, max_tries):
    """Rejection-sample ``n`` centres keeping ``r + clearance`` from each point."""
    out = []
    tries = 0
    keep_clear = np.atleast_2d(keep_clear)
    while len(out) < n:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"placed only {len(out)} of {n} obstacles in {max_tries} tries")
        c = rng.uniform(low, high)
        if np.all(np.linalg.norm(keep_clear[:, : len(c)] - c, axis=1) >= r + clearance):
            out.append(c)
    return out


def generate_env_2d(rng: np.random.Generator, cfg: EnvConfig = EnvConfig()) -> Environment:
    """50 discs of radius 0.4 m in a rectangle, start on the left, goal on the right.

    Discs are spheres in the plane ``z = 0`` and the robot stays in that
    plane.
    """
    W, H = cfg.arena_2d
    start = np.array([1.0, rng.uniform(1.0, H - 1.0), 0.0])
    goal = np.array([W - 1.0, rng.uniform(1.0, H - 1.0), 0.0])
    centres = _place(rng, cfg.n_obs_2d, [0.0, 0.0], [W, H], [start, goal], cfg.radius_2d, cfg.clearance, cfg.max_tries)
    r = cfg.radius_2d
    obstacles = [EnvObstacle(np.array([c[0], c[1], 0.0]), r, r) for c in centres]
    return Environment(
        obstacles,
        np.array([0.0, 0.0, -1.0]),
        np.array([W, H, 1.0]),
        start,
        goal,
        cfg.v_max_2d,
        cfg.a_max_2d,
        cfg.horizon_2d,
        planar=True,
        kind="static2d",
    )


def generate_env_3d(rng: np.random.Generator, cfg: EnvConfig = EnvConfig()) -> Environment:
    """25 spheres of radius 0.68 m in a 7 x 7 x 3 room, opposite corners."""
    X, Y, Z = cfg.room_3d
    start = np.array([0.5, 0.5, rng.uniform(0.5, Z - 0.5)])
    goal = np.array([X - 0.5, Y - 0.5, rng.uniform(0.5, Z - 0.5)])
    centres = _place(rng, cfg.n_obs_3d, [0.0, 0.0, 0.0], [X, Y, Z], [start, goal], cfg.radius_3d, cfg.clearance, cfg.max_tries)
    r = cfg.radius_3d
    obstacles = [EnvObstacle(np.asarray(c), r, r) for c in centres]
    return Environment(
        obstacles,
        np.zeros(3),
        np.array([X, Y, Z]),
        start,
        goal,
        cfg.v_max_3d,
        cfg.a_max_3d,
        cfg.horizon_3d,
        kind="static3d",
    )


def generate_env_dynamic(rng: np.random.Generator, cfg: EnvConfig = EnvConfig()) -> Environment:
    """Corridor with ten discs drifting toward the robot at 0.1 m/s.

    Start and goal are fixed on the corridor axis; only obstacle positions
    vary between configurations. The corridor walls are the workspace
    bounds.
    """
    L, Wd = cfg.corridor
    start = np.array([1.0, Wd / 2, 0.0])
    goal = np.array([L - 1.0, Wd / 2, 0.0])
    r = cfg.radius_dyn
    centres = _place(rng, cfg.n_obs_dyn, [3.0, r], [L - 1.0, Wd - r], [start, goal], r, cfg.clearance, cfg.max_tries)
    heading = (start - goal) / np.linalg.norm(start - goal)
    vel = cfg.speed_dyn * heading
    obstacles = [EnvObstacle(np.array([c[0], c[1], 0.0]), r, r, vel.copy()) for c in centres]
    return Environment(
        obstacles,
        np.array([0.0, 0.0, -1.0]),
        np.array([L, Wd, 1.0]),
        start,
        goal,
        cfg.v_max_dyn,
        cfg.a_max_dyn,
        5.0,
        planar=True,
        dynamic=True,
        kind="dynamic",
    )


def step_world(env: Environment, robot: RobotState, command, dt: float, substeps: int = 10):
    """Advance the world by ``dt`` with the robot tracking ``command`` exactly.

    ``command(t)`` returns ``(pos, vel, acc)`` at elapsed time ``t`` in
    ``[0, dt]``. Returns the new environment, robot and whether any substep
    collided.
    """
    ts = np.linspace(0.0, dt, substeps + 1)[1:]
    collided = False
    for t in ts:
        p, _, _ = command(t)
        if env.collides(np.asarray(p)[None], env.time + t)[0]:
            collided = True
    p, v, a = command(dt)
    new_robot = RobotState(np.asarray(p, float), np.asarray(v, float), np.asarray(a, float), robot.t + dt)
    new_env = replace(env, time=env.time + dt)
    return new_env, new_robot, collided
