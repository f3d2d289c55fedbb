"""Analytic ray casting of cylinder worlds into planar depth images."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..geometry import CameraIntrinsics, CameraPose, DepthImage
from .world import World

MIN_DEPTH = 1e-3


@njit(cache=True)
def _cylinder_hit(ox, oy, oz, dx, dy, dz, rad, bottom, top):
    """Smallest positive ray parameter hitting a vertical cylinder's side or top cap, or inf."""
    best = math.inf
    a = dx * dx + dy * dy
    if a > 0.0:
        rho = math.sqrt(ox * ox + oy * oy)
        c = (rho - rad) * (rho + rad)
        b = 2.0 * (dx * ox + dy * oy)
        disc = b * b - 4.0 * a * c
        if disc >= 0.0:
            q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
            r1 = q / a
            r2 = c / q if q != 0.0 else math.inf
            lo = min(r1, r2)
            hi = max(r1, r2)
            lam = lo if lo > 0.0 else hi
            if lam > 0.0:
                z = oz + lam * dz
                if bottom <= z <= top:
                    best = lam
    if dz != 0.0:
        lam = (top - oz) / dz
        if 0.0 < lam < best:
            px = ox + lam * dx
            py = oy + lam * dy
            if px * px + py * py <= rad * rad:
                best = lam
    return best


@njit(cache=True)
def _render(origin, dirs, cyl, ground_z, max_range, out):
    n = dirs.shape[0]
    for k in range(n):
        dx = dirs[k, 0]
        dy = dirs[k, 1]
        dz = dirs[k, 2]
        best = math.inf
        if dz != 0.0:
            lam = (ground_z - origin[2]) / dz
            if lam > 0.0:
                best = lam
        for m in range(cyl.shape[0]):
            lam = _cylinder_hit(
                origin[0] - cyl[m, 0], origin[1] - cyl[m, 1], origin[2], dx, dy, dz,
                cyl[m, 2], ground_z, ground_z + cyl[m, 3],
            )
            if lam < best:
                best = lam
        out[k] = min(max(best, MIN_DEPTH), max_range)


def render_depth(world: World, pose: CameraPose, intr: CameraIntrinsics, max_range: float) -> DepthImage:
    """Planar depth image of ``world`` seen from ``pose``.

    Pixel rays have unit camera-z component, so the ray parameter of the nearest
    hit is the planar depth directly.  Misses and hits beyond ``max_range`` read
    ``max_range``.
    """
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    rays_cam = intr.ray_grid.reshape(-1, 3)
    R = np.asarray(pose.world_from_camera, dtype=float)
    dirs = np.ascontiguousarray(rays_cam @ R.T)
    origin = np.asarray(pose.position, dtype=float)
    cyl = world.cylinders
    if len(cyl):
        # a hit counts only within the planar range, i.e. within max_range * |ray| of the camera
        reach = np.hypot(cyl[:, 0] - origin[0], cyl[:, 1] - origin[1]) - cyl[:, 2]
        cyl = cyl[reach < max_range * float(np.max(intr.ray_norms))]
        # drop cylinders entirely behind the image plane
        rel = np.column_stack([cyl[:, 0] - origin[0], cyl[:, 1] - origin[1]])
        forward = R[:2, 2]
        ahead = rel @ forward + cyl[:, 2] + np.abs(R[2, 2]) * (cyl[:, 3] + abs(origin[2] - world.ground_z))
        cyl = np.ascontiguousarray(cyl[ahead > 0])
    out = np.empty(dirs.shape[0])
    _render(origin, dirs, np.ascontiguousarray(cyl, dtype=float).reshape(-1, 4), float(world.ground_z), float(max_range), out)
    return DepthImage(intr, out.reshape(intr.height, intr.width), max_range)
