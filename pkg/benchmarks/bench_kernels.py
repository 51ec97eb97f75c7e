"""Compare the compiled polar kernel with its numpy fallback.

Times the raw kernel call and a full ``project_batch`` for every available
backend, plus the dense reference composition, and checks that all three
agree. Usage::

    python benchmarks/bench_kernels.py --batch 110 --obstacles 10 50 --repeats 5
"""

from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from priest import _backend
from priest.basis import State, build_basis, build_boundary_system
from priest.polar import Limits, Obstacle, build_constraint_system
from priest.projection import ProjectionConfig, precompute_workspace, project_batch


def _setup(n_o, N, n_p, seed):
    rng = np.random.default_rng(seed)
    basis = build_basis(0.0, 10.0, n_p)
    obstacles = [
        Obstacle.static(np.r_[rng.uniform(1, 9, 2), 0.0], 0.4, 0.4, n_p) for _ in range(n_o)
    ]
    limits = Limits(1.5, 2.0, np.array([0.0, 0.0, -1.0]), np.array([10.0, 10.0, 1.0]))
    system = build_constraint_system(basis, obstacles, limits)
    bc = build_boundary_system(basis, State.at_rest([0.5, 0.5, 0.0]), np.array([9.5, 9.5, 0.0]))
    samples = rng.normal(scale=2.0, size=(N, basis.n_v))
    return system, bc, samples


def _best(fn, repeats):
    return min(timeit.repeat(fn, number=1, repeat=repeats))


def bench(n_o, N, n_p, repeats, threads, seed=0):
    system, bc, samples = _setup(n_o, N, n_p, seed)
    basis = system.basis
    C = samples.reshape(N, 3, basis.n_c)
    pos, vel, acc = (np.ascontiguousarray(C @ M.T) for M in (basis.P, basis.Pdot, basis.Pddot))
    centers = np.ascontiguousarray(np.transpose(system.centers, (0, 2, 1)))
    lim = system.limits
    row = {"obstacles": n_o, "batch": N, "n_p": n_p}
    outputs = {}
    for name, mod in _backend.BACKENDS.items():
        args = (pos, vel, acc, centers, system.a, system.b, lim.v_max, lim.a_max, threads)
        row[f"kernel_{name}_ms"] = 1e3 * _best(lambda: mod.polar_targets(*args), repeats)
        cfg = ProjectionConfig(backend=name, threads=threads)
        ws = precompute_workspace(system, bc, cfg)
        row[f"project_{name}_ms"] = 1e3 * _best(lambda: project_batch(samples, system, bc, cfg, ws), repeats)
        outputs[name] = project_batch(samples, system, bc, cfg, ws).xi_bar
    cfg = ProjectionConfig(method="reference")
    ws = precompute_workspace(system, bc, cfg)
    row["project_reference_ms"] = 1e3 * _best(lambda: project_batch(samples, system, bc, cfg, ws), repeats)
    ref = project_batch(samples, system, bc, cfg, ws).xi_bar
    scale = np.abs(ref).max()
    row["max_rel_diff"] = max(float(np.abs(x - ref).max() / scale) for x in outputs.values())
    return row


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, nargs="+", default=[110])
    ap.add_argument("--obstacles", type=int, nargs="+", default=[10, 50, 100])
    ap.add_argument("--n-p", type=int, default=50)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--threads", type=int, default=0)
    ap.add_argument("--json", action="store_true", help="print one JSON object per row")
    args = ap.parse_args(argv)
    rows = [bench(n_o, N, args.n_p, args.repeats, args.threads) for N in args.batch for n_o in args.obstacles]
    if args.json:
        for r in rows:
            print(json.dumps(r))
        return
    names = list(_backend.BACKENDS)
    print(f"backends: {', '.join(names)} (default {_backend.DEFAULT})")
    cols = ["obstacles", "batch"] + [f"kernel_{n}_ms" for n in names] + [f"project_{n}_ms" for n in names]
    cols += ["project_reference_ms", "max_rel_diff"]
    print("  ".join(f"{c:>20}" for c in cols))
    for r in rows:
        print("  ".join(f"{r[c]:>20.4g}" if isinstance(r[c], float) else f"{r[c]:>20}" for c in cols))


if __name__ == "__main__":
    main()
