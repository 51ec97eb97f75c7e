"""Command-line entry point.

Exit codes: 0 success, 1 infeasible plan or failed episode, 2 configuration
error.
"""

from __future__ import annotations

import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .basis import evaluate
from .config import ConfigError, RunConfig
from .costs import augmented_cost
from .sim.benchmark import (
    MetricsTable,
    dpriest_scaling,
    linear_fit,
    plan_static,
    run_benchmark,
    scaling_bench,
)
from .sim.environments import Environment, generate_env_2d, generate_env_3d, generate_env_dynamic
from .sim.mpc import kinematic_lower_bound, run_mpc_episode

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

TRAJECTORY_COLUMNS = ("t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az")

log = logging.getLogger("priest")


def _load_config(path, **overrides) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = RunConfig.from_yaml(text)
    cfg = cfg.with_env()
    return cfg.override(**overrides)


def _header(cfg: RunConfig) -> dict:
    return {"version": __version__, "seed": cfg.seed, "config": cfg.to_dict()}


def _write_csv(path: Path, rows, columns, cfg: RunConfig):
    """CSV with a leading ``#`` line holding the resolved config as JSON."""
    with path.open("w", newline="") as fh:
        fh.write("# " + json.dumps(_header(cfg)) + "\n")
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _write_json(path: Path, payload: dict, cfg: RunConfig):
    path.write_text(json.dumps({**_header(cfg), **payload}, indent=2, default=_json_default))


def _write_jsonl(path: Path, records, cfg: RunConfig):
    with path.open("w") as fh:
        fh.write(json.dumps({"header": _header(cfg)}) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not serialisable: {type(x).__name__}")


def _environment(cfg: RunConfig, env_file) -> Environment:
    if env_file is not None:
        try:
            data = json.loads(Path(env_file).read_text())
            return Environment.from_dict(data)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot load environment {env_file}: {exc}") from exc
    rng = np.random.default_rng(cfg.seed)
    gens = {"static2d": generate_env_2d, "point2point": generate_env_2d, "static3d": generate_env_3d, "dynamic": generate_env_dynamic}
    return gens[cfg.suite](rng, cfg.env)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run(fn):
    """Map configuration errors to exit code 2."""
    try:
        code = fn()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    sys.exit(code)


_common = [
    click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="YAML run configuration."),
    click.option("--seed", type=int, default=None, help="Seed for environments and sampling."),
    click.option("--threads", type=int, default=None, help="Worker cap for the projection kernel; 0 uses all cores."),
    click.option("--out", type=str, default=None, help="Output directory."),
]


def common(f):
    for opt in reversed(_common):
        f = opt(f)
    return f


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def main(verbose):
    """Projection-guided sampling trajectory optimisation."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")


@main.command()
@common
@click.option("--planner", type=str, default=None, help="priest, dpriest or cem.")
@click.option("--suite", type=str, default=None, help="Environment family used when no --env file is given.")
@click.option("--env", "env_file", type=click.Path(dir_okay=False), default=None, help="Environment JSON file.")
def plan(config_path, seed, threads, out, planner, suite, env_file):
    """Plan once and write the trajectory, a summary and per-iteration diagnostics."""

    def body():
        cfg = _load_config(config_path, mode="plan", seed=seed, threads=threads, out=out, planner=planner, suite=suite)
        env = _environment(cfg, env_file)
        settings = cfg.settings()
        try:
            res, problem = plan_static(env, cfg.planner, settings, cfg.seed)
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            click.echo(f"planner aborted: {exc}", err=True)
            return EXIT_FAILED
        basis = problem.basis
        pos, vel, acc = evaluate(res.best, basis)
        rows = [dict(zip(TRAJECTORY_COLUMNS, (t, *p, *v, *a))) for t, p, v, a in zip(basis.t, pos, vel, acc)]
        cost = float(augmented_cost((pos, vel, acc), res.best_residual, problem.weights, basis, problem.start.pos, problem.goal))
        d = _out_dir(cfg)
        _write_csv(d / "trajectory.csv", rows, TRAJECTORY_COLUMNS, cfg)
        _write_jsonl(d / "diagnostics.jsonl", res.diagnostics, cfg)
        summary = {
            "planner": cfg.planner,
            "feasible": res.feasible,
            "cost": cost,
            "residual": res.best_residual,
            "wall_time_s": res.wall_time,
            "projection_time_s": res.projection_time,
            "environment": env.to_dict(),
        }
        _write_json(d / "summary.json", summary, cfg)
        click.echo(f"{'feasible' if res.feasible else 'infeasible'}: cost {cost:.4g}, residual {res.best_residual:.3g}")
        return EXIT_OK if res.feasible else EXIT_FAILED

    _run(body)


@main.command()
@common
@click.option("--suite", type=str, default=None, help="static2d, static3d, dynamic or point2point.")
@click.option("--trials", type=int, default=None, help="Number of seeded trials.")
@click.option("--planner", "planners", multiple=True, help="Planner to compare; repeatable.")
def benchmark(config_path, seed, threads, out, suite, trials, planners):
    """Run a benchmark suite and write one metrics row per planner."""

    def body():
        cfg = _load_config(
            config_path, mode="benchmark", seed=seed, threads=threads, out=out, suite=suite, trials=trials, planners=tuple(planners) or None
        )
        seeds = [cfg.seed + i for i in range(cfg.trials)]
        records = []

        def on_trial(p, env, rec):
            records.append({"planner": p, "kind": env.kind, **rec.to_dict()})
            log.info("%s seed %d: %s", p, rec.seed, "ok" if rec.success else rec.cause)

        tables = run_benchmark(cfg.suite, cfg.trials, seeds, cfg.planners, cfg.settings(), cfg.env, on_trial)
        d = _out_dir(cfg)
        rows = [t.to_row() for t in tables.values()]
        _write_csv(d / "metrics.csv", rows, MetricsTable.COLUMNS, cfg)
        _write_jsonl(d / "episodes.jsonl", records, cfg)
        for row in rows:
            click.echo(f"{row['planner']}: success {100 * row['success_rate']:.1f}% over {row['trials']} trials")
        return EXIT_OK

    _run(body)


@main.command()
@common
@click.option("--planner", type=str, default=None, help="priest, dpriest or cem.")
@click.option("--env", "env_file", type=click.Path(dir_okay=False), default=None, help="Environment JSON file.")
def mpc(config_path, seed, threads, out, planner, env_file):
    """Run one receding-horizon episode in the dynamic corridor."""

    def body():
        cfg = _load_config(config_path, mode="mpc", seed=seed, threads=threads, out=out, planner=planner)
        cfg = replace(cfg, suite="dynamic") if env_file is None else cfg
        env = _environment(cfg, env_file)
        settings = cfg.settings()
        ep = run_mpc_episode(env, replace(settings.mpc, planner=cfg.planner), cfg.seed)
        d = _out_dir(cfg)
        _write_jsonl(d / "episode.jsonl", ep.log, cfg)
        bound = kinematic_lower_bound(float(np.linalg.norm(env.goal - env.start)), env.v_max)
        summary = {
            "success": ep.success,
            "travel_time_s": ep.travel_time,
            "kinematic_lower_bound_s": bound,
            "collision": ep.collision,
            "cause": ep.cause,
            "compute_time_mean_s": float(np.mean(ep.compute_times)) if ep.compute_times else 0.0,
            "replans": len(ep.compute_times),
            "environment": env.to_dict(),
        }
        _write_json(d / "summary.json", summary, cfg)
        click.echo(f"{'success' if ep.success else 'failure'}: travel {ep.travel_time:.2f} s {ep.cause}".rstrip())
        return EXIT_OK if ep.success else EXIT_FAILED

    _run(body)


@main.command()
@common
def scaling(config_path, seed, threads, out):
    """Time projection iterations over obstacle count, batch size and distribution count."""

    def body():
        cfg = _load_config(config_path, mode="scaling", seed=seed, threads=threads, out=out)
        sc = cfg.scaling
        settings = cfg.settings()
        rows = scaling_bench(sc.obstacle_counts, sc.batch_sizes, sc.repeats, sc.iters, settings.n_p, settings.projection, cfg.seed)
        drows = dpriest_scaling(sc.dists, sc.per_dist_batch, sc.repeats, settings=settings, env_cfg=cfg.env, seed=cfg.seed)
        d = _out_dir(cfg)
        _write_csv(d / "scaling.csv", rows, ("n_o", "N_b", "mean_s", "std_s", "min_s", "repeats"), cfg)
        _write_csv(d / "dpriest_scaling.csv", drows, ("M_dists", "N_b", "mean_s", "std_s", "min_s", "repeats"), cfg)
        fits = {}
        big_b = max(sc.batch_sizes)
        big_o = max(sc.obstacle_counts)
        sub = [r for r in rows if r["N_b"] == big_b]
        fits["vs_obstacles"] = dict(zip(("slope", "intercept", "r2"), linear_fit([r["n_o"] for r in sub], [r["mean_s"] for r in sub])))
        sub = [r for r in rows if r["n_o"] == big_o]
        fits["vs_batch"] = dict(zip(("slope", "intercept", "r2"), linear_fit([r["N_b"] for r in sub], [r["mean_s"] for r in sub])))
        fits["vs_distributions"] = dict(
            zip(("slope", "intercept", "r2"), linear_fit([r["M_dists"] for r in drows], [r["mean_s"] for r in drows]))
        )
        _write_json(d / "scaling_summary.json", {"fits": fits}, cfg)
        for name, f in fits.items():
            click.echo(f"{name}: slope {f['slope']:.3g} s per unit, R^2 {f['r2']:.3f}")
        return EXIT_OK

    _run(body)


if __name__ == "__main__":
    main()
