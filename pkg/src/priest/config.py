"""Run configuration: a nested, YAML-serialisable tree of every setting."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields, replace

import yaml

from .costs import CostWeights
from .projection import ProjectionConfig
from .sampler import SamplerConfig
from .sim.benchmark import PLANNERS, SUITES, PlannerSettings
from .sim.environments import EnvConfig
from .sim.mpc import MPCConfig

__all__ = ["ENV_PREFIX", "ConfigError", "RunConfig", "ScalingConfig"]

ENV_PREFIX = "PRIEST_CFG_"
MODES = ("plan", "benchmark", "mpc", "scaling")


class ConfigError(ValueError):
    """Invalid or unknown configuration value."""


@dataclass(frozen=True)
class ScalingConfig:
    """Grid and repeat counts for the timing studies."""

    obstacle_counts: tuple = (8, 16, 32, 64)
    batch_sizes: tuple = (32, 64, 128, 256)
    repeats: int = 5
    iters: int = 10
    dists: tuple = (1, 2, 4, 8)
    per_dist_batch: int = 64


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run needs, with the library defaults.

    Sections mirror the library's configuration objects. ``planners``
    lists the planners a benchmark compares.
    """

    mode: str = "plan"
    planner: str = "priest"
    planners: tuple = ("priest", "cem")
    suite: str = "static2d"
    trials: int = 117
    seed: int = 0
    out: str = "results"
    threads: int = 0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    weights: CostWeights = field(default_factory=CostWeights.point_to_point)
    planning: dict = field(default_factory=lambda: {"margin": 0.1, "n_p": 50, "dpriest_dists": 2, "check_points": 1000, "limit_tol": 0.02})
    mpc: MPCConfig = field(default_factory=MPCConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    scaling: ScalingConfig = field(default_factory=ScalingConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        for p in (self.planner, *self.planners):
            if p not in PLANNERS:
                raise ConfigError(f"unknown planner {p!r}; expected one of {PLANNERS}")
        if self.suite not in SUITES:
            raise ConfigError(f"unknown suite {self.suite!r}; expected one of {SUITES}")
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        unknown = set(self.planning) - {f.name for f in fields(PlannerSettings)}
        if unknown:
            raise ConfigError(f"unknown planning keys {sorted(unknown)}")

    def settings(self) -> PlannerSettings:
        """Planner settings with ``threads`` applied to the projection."""
        proj = replace(self.projection, threads=self.threads)
        mpc = replace(self.mpc, projection=replace(self.mpc.projection, threads=self.threads))
        return PlannerSettings(sampler=self.sampler, projection=proj, weights=self.weights, mpc=mpc, **self.planning)

    def to_dict(self) -> dict:
        return _to_plain(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        try:
            return _from_plain(cls, data or {})
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"unreadable config: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        return cls.from_dict(data)

    def with_env(self, environ=None) -> "RunConfig":
        """Apply ``PRIEST_CFG_<KEY>`` overrides; ``__`` separates sections.

        Keys match field names case-insensitively and values are parsed
        as YAML scalars, e.g. ``PRIEST_CFG_SAMPLER__N_B=160``.
        """
        environ = os.environ if environ is None else environ
        data = self.to_dict()
        for key, raw in environ.items():
            if not key.startswith(ENV_PREFIX):
                continue
            path = key[len(ENV_PREFIX) :].lower().split("__")
            node = data
            for part in path[:-1]:
                node = node[_match(node, part, key)]
                if not isinstance(node, dict):
                    raise ConfigError(f"{key}: {part!r} is not a section")
            node[_match(node, path[-1], key)] = yaml.safe_load(raw)
        return RunConfig.from_dict(data)

    def override(self, **values) -> "RunConfig":
        """Replace top-level fields, ignoring ``None`` values."""
        values = {k: v for k, v in values.items() if v is not None}
        try:
            return replace(self, **values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _match(node, part, key):
    for name in node:
        if name.lower() == part:
            return name
    raise ConfigError(f"{key}: no setting named {part!r}")


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _from_plain(cls, data):
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys {sorted(unknown)}")
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        current = getattr(defaults, name)
        if dataclasses.is_dataclass(current):
            kwargs[name] = _from_plain(type(current), value)
        elif isinstance(current, tuple):
            kwargs[name] = tuple(value)
        elif isinstance(current, dict):
            kwargs[name] = {**current, **value}
        elif isinstance(current, float) and isinstance(value, (int, str)) and not isinstance(value, bool):
            # YAML reads "1e-3" as a string
            kwargs[name] = float(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)
