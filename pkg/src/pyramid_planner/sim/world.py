"""Cylinder-forest worlds and ground-truth clearance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class World:
    """Vertical cylinders standing on a flat ground plane.

    ``cylinders`` rows are (x, y, radius, height); ``bounds`` is
    (x_min, x_max, y_min, y_max) of the region trees may occupy.
    """

    cylinders: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    ground_z: float = 0.0
    bounds: tuple[float, float, float, float] = (-50.0, 50.0, -50.0, 50.0)

    def __post_init__(self):
        cyl = np.asarray(self.cylinders, dtype=float).reshape(-1, 4)
        if np.any(cyl[:, 2] <= 0) or np.any(cyl[:, 3] <= 0):
            raise ValueError("cylinder radii and heights must be positive")
        x0, x1, y0, y1 = self.bounds
        if np.any(cyl[:, 0] < x0) or np.any(cyl[:, 0] > x1) or np.any(cyl[:, 1] < y0) or np.any(cyl[:, 1] > y1):
            raise ValueError("cylinders must lie within the world bounds")
        self.cylinders = cyl

    def clearance(self, points) -> np.ndarray:
        """Distance from each point to the nearest surface (negative inside an obstacle)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        out = p[:, 2] - self.ground_z
        if len(self.cylinders):
            c = self.cylinders
            dx = p[:, None, 0] - c[None, :, 0]
            dy = p[:, None, 1] - c[None, :, 1]
            radial = np.hypot(dx, dy) - c[None, :, 2]
            above = p[:, None, 2] - (self.ground_z + c[None, :, 3])
            # beside the trunk: radial gap; above the top: distance to the top disc
            d = np.where(above > 0, np.hypot(np.maximum(radial, 0.0), above), radial)
            out = np.minimum(out, d.min(axis=1))
        return out

    def near(self, center, radius: float) -> World:
        """Sub-world with only the cylinders whose surface is within ``radius`` horizontally."""
        c = self.cylinders
        if not len(c):
            return self
        d = np.hypot(c[:, 0] - center[0], c[:, 1] - center[1]) - c[:, 2]
        return World(c[d < radius], self.ground_z, self.bounds)


def make_forest(
    rng: np.random.Generator,
    density: float,
    region: tuple[float, float, float, float],
    radius_range: tuple[float, float] = (0.15, 0.4),
    height_range: tuple[float, float] = (8.0, 15.0),
    min_spacing: float = 2.5,
    keepout: list[tuple[float, float, float]] = (),
    ground_z: float = 0.0,
    max_attempts: int = 30,
) -> World:
    """Poisson-disk trunk placement by dart throwing.

    Aims for ``density`` trees per square metre over ``region``; darts that land
    within ``min_spacing`` of an earlier trunk or inside a keep-out disc (x, y,
    radius) are rejected.
    """
    x0, x1, y0, y1 = region
    target = int(round(density * (x1 - x0) * (y1 - y0)))
    pts: list[tuple[float, float]] = []
    attempts = 0
    while len(pts) < target and attempts < max_attempts * max(target, 1):
        attempts += 1
        x = rng.uniform(x0, x1)
        y = rng.uniform(y0, y1)
        if any((x - kx) ** 2 + (y - ky) ** 2 < kr * kr for kx, ky, kr in keepout):
            continue
        if any((x - px) ** 2 + (y - py) ** 2 < min_spacing * min_spacing for px, py in pts):
            continue
        pts.append((x, y))
    n = len(pts)
    radii = rng.uniform(*radius_range, n)
    heights = rng.uniform(*height_range, n)
    cyl = np.column_stack([np.array(pts).reshape(-1, 2), radii, heights]) if n else np.zeros((0, 4))
    return World(cyl, ground_z, region)
