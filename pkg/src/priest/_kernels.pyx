# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused polar sweep over a batch of trajectories.

For every sample it evaluates the closed-form angles and scales and writes
the resulting targets directly, skipping the trigonometry: with the
best-fit elevation the model direction is parallel to the offset, so each
target is a radial rescaling of the current point.
"""

from cython.parallel cimport prange
from libc.math cimport sqrt

import numpy as np


def polar_targets(
    const double[:, :, ::1] pos,
    const double[:, :, ::1] vel,
    const double[:, :, ::1] acc,
    const double[:, :, ::1] centers,
    const double[::1] semi_a,
    const double[::1] semi_b,
    double v_max,
    double a_max,
    int num_threads=0,
):
    """Targets for a batch laid out as ``(N, 3, n_p)``.

    ``centers`` has shape ``(n_o, 3, n_p)``. Returns the per-axis sum of the
    obstacle targets, the velocity and acceleration targets, and the
    squared misfit of the equality rows for each sample.
    """
    cdef Py_ssize_t N = pos.shape[0]
    cdef Py_ssize_t n_p = pos.shape[2]
    cdef Py_ssize_t n_o = centers.shape[0]
    obs_np = np.zeros((N, 3, n_p))
    vel_np = np.empty((N, 3, n_p))
    acc_np = np.empty((N, 3, n_p))
    sq_np = np.zeros(N)
    cdef double[:, :, ::1] obs_sum = obs_np
    cdef double[:, :, ::1] vel_t = vel_np
    cdef double[:, :, ::1] acc_t = acc_np
    cdef double[::1] sq = sq_np
    cdef Py_ssize_t i, j, t
    ia2_np = 1.0 / np.asarray(semi_a) ** 2
    ib2_np = 1.0 / np.asarray(semi_b) ** 2
    cdef double[::1] ia2 = ia2_np
    cdef double[::1] ib2 = ib2_np
    cdef double x, y, z, dx, dy, dz, n2, f, ex, ey, ez, acc_sq
    cdef double ux, uy, uz, norm, scale
    if num_threads <= 0:
        num_threads = 1
    for i in prange(N, nogil=True, num_threads=num_threads, schedule="static"):
        acc_sq = 0.0
        for j in range(n_o):
            for t in range(n_p):
                x = pos[i, 0, t]
                y = pos[i, 1, t]
                z = pos[i, 2, t]
                dx = x - centers[j, 0, t]
                dy = y - centers[j, 1, t]
                dz = z - centers[j, 2, t]
                n2 = (dx * dx + dy * dy) * ia2[j] + dz * dz * ib2[j]
                if n2 >= 1.0:
                    # outside: the target is the point itself
                    obs_sum[i, 0, t] += x
                    obs_sum[i, 1, t] += y
                    obs_sum[i, 2, t] += z
                elif n2 > 0.0:
                    f = 1.0 / sqrt(n2)
                    ex = centers[j, 0, t] + dx * f
                    ey = centers[j, 1, t] + dy * f
                    ez = centers[j, 2, t] + dz * f
                    obs_sum[i, 0, t] += ex
                    obs_sum[i, 1, t] += ey
                    obs_sum[i, 2, t] += ez
                    acc_sq = acc_sq + (x - ex) * (x - ex) + (y - ey) * (y - ey) + (z - ez) * (z - ez)
                else:
                    ez = centers[j, 2, t] + semi_b[j]
                    obs_sum[i, 0, t] += centers[j, 0, t]
                    obs_sum[i, 1, t] += centers[j, 1, t]
                    obs_sum[i, 2, t] += ez
                    acc_sq = acc_sq + (z - ez) * (z - ez)

        for t in range(n_p):
            ux = vel[i, 0, t]
            uy = vel[i, 1, t]
            uz = vel[i, 2, t]
            norm = sqrt(ux * ux + uy * uy + uz * uz)
            scale = 1.0
            if norm > v_max:
                scale = v_max / norm
            vel_t[i, 0, t] = ux * scale
            vel_t[i, 1, t] = uy * scale
            vel_t[i, 2, t] = uz * scale
            acc_sq = acc_sq + (1.0 - scale) * (1.0 - scale) * norm * norm

            ux = acc[i, 0, t]
            uy = acc[i, 1, t]
            uz = acc[i, 2, t]
            norm = sqrt(ux * ux + uy * uy + uz * uz)
            scale = 1.0
            if norm > a_max:
                scale = a_max / norm
            acc_t[i, 0, t] = ux * scale
            acc_t[i, 1, t] = uy * scale
            acc_t[i, 2, t] = uz * scale
            acc_sq = acc_sq + (1.0 - scale) * (1.0 - scale) * norm * norm
        sq[i] = acc_sq
    return obs_np, vel_np, acc_np, sq_np
