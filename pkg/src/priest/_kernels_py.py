"""Vectorised numpy implementation of the fused polar sweep.

Same contract as the compiled ``_kernels`` module; used when the extension
is not built.
"""

from __future__ import annotations

import numpy as np


def polar_targets(pos, vel, acc, centers, semi_a, semi_b, v_max, a_max, num_threads=0):
    """Targets for a batch laid out as ``(N, 3, n_p)``; see the compiled kernel."""
    del num_threads
    delta = pos[:, None, :, :] - centers[None]  # (N, n_o, 3, n_p)
    ia2 = (1.0 / semi_a**2)[None, :, None]
    ib2 = (1.0 / semi_b**2)[None, :, None]
    n = np.sqrt((delta[:, :, 0] ** 2 + delta[:, :, 1] ** 2) * ia2 + delta[:, :, 2] ** 2 * ib2)
    inside = n < 1.0
    safe = np.where(n > 0.0, n, 1.0)
    f = np.where(inside, 1.0 / safe, 1.0)[:, :, None, :]
    target = centers[None] + delta * f
    degenerate = n == 0.0
    if degenerate.any():
        idx = np.nonzero(degenerate)
        target[idx[0], idx[1], :, idx[2]] = centers[idx[1], :, idx[2]]
        target[idx[0], idx[1], 2, idx[2]] += semi_b[idx[1]]
    sq = np.sum((pos[:, None] - target) ** 2, axis=(1, 2, 3))
    obs_sum = target.sum(axis=1)

    def _clip(u, bound):
        norm = np.sqrt(np.sum(u * u, axis=1, keepdims=True))
        scale = np.where(norm > bound, bound / np.where(norm > 0, norm, 1.0), 1.0)
        return u * scale, np.sum(((1.0 - scale) * norm) ** 2, axis=(1, 2))

    vel_t, sq_v = _clip(vel, v_max)
    acc_t, sq_a = _clip(acc, a_max)
    return obs_sum, vel_t, acc_t, sq + sq_v + sq_a
