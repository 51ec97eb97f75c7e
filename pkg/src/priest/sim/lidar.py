"""Planar range scanning and conversion of hit points to obstacles."""

from __future__ import annotations

import numpy as np

__all__ = ["extract_obstacles", "lidar_scan", "voxel_downsample"]


def lidar_scan(robot_pos, env, n_rays: int = 360, max_range: float = 6.0, t: float | None = None) -> np.ndarray:
    """Cast ``n_rays`` horizontal rays and return first hits, shape ``(k, 3)``.

    Obstacles are cut by the robot's horizontal plane, giving circles.
    Rays that hit nothing within ``max_range`` are dropped.
    """
    t = env.time if t is None else t
    p = np.asarray(robot_pos, dtype=float)
    if not env.obstacles:
        return np.zeros((0, 3))
    theta = np.arange(n_rays) * (2 * np.pi / n_rays)
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    centres = np.array([o.at(t) for o in env.obstacles])
    # horizontal cross-section radius of each ellipsoid at the robot's height
    dz = p[2] - centres[:, 2]
    b = np.array([o.b for o in env.obstacles])
    a = np.array([o.a for o in env.obstacles])
    frac = 1.0 - (dz / b) ** 2
    r = np.where(frac > 0, a * np.sqrt(np.clip(frac, 0.0, None)), -1.0)
    rel = centres[:, :2] - p[:2]  # (n_o, 2)
    proj = dirs @ rel.T  # (n_rays, n_o)
    c = np.sum(rel * rel, axis=1) - r**2
    disc = proj**2 - c
    valid = (r > 0) & (disc >= 0)
    sq = np.sqrt(np.where(valid, disc, 0.0))
    near = proj - sq
    far = proj + sq
    # inside an obstacle the exit point is the first boundary crossing
    hit = np.where(near >= 0, near, far)
    hit = np.where(valid & (hit >= 0), hit, np.inf)
    dist = hit.min(axis=1)
    keep = dist <= max_range
    pts = p[:2] + dirs[keep] * dist[keep, None]
    return np.column_stack([pts, np.full(len(pts), p[2])])


def voxel_downsample(points, voxel_size: float) -> np.ndarray:
    """One centroid per occupied voxel, ordered by voxel index."""
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        return pts.reshape(0, 3)
    keys = np.floor(pts / voxel_size).astype(np.int64)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    n = inverse.max() + 1
    sums = np.zeros((n, pts.shape[1]))
    np.add.at(sums, inverse, pts)
    counts = np.bincount(inverse, minlength=n)
    return sums / counts[:, None]


def extract_obstacles(points, robot_pos, voxel_size: float = 0.15, K: int = 60) -> np.ndarray:
    """Downsample hits and keep the ``K`` nearest to the robot.

    Returns the obstacle centres, shape ``(<= K, 3)``, nearest first.
    """
    cents = voxel_downsample(points, voxel_size)
    if len(cents) == 0:
        return cents
    d = np.linalg.norm(cents - np.asarray(robot_pos, dtype=float), axis=1)
    order = np.argsort(d, kind="stable")[:K]
    return cents[order]
