"""Free space from a single depth image, represented as rectangular pyramids.

Every pyramid has its apex at the camera centre and a rectangular footprint of
pixels whose depths all lie beyond the pyramid's base plane.  Offsetting every
face inward by the vehicle radius gives the *shrunk* pyramid: a vehicle whose
centre stays inside it keeps at least that radius from every point the image
reports as occupied.

Points within ``l`` of the camera are handled by near-field balls.  A ball
around a point has radius equal to the smaller of its distance to the ``l``
sphere and its distance to the closest back-projected pixel minus the vehicle
radius, so it never reaches an observed obstacle or leaves the near field.
Everything else outside the image frustum is occupied.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .geometry import DepthImage
from .trajectory import QuinticPrimitive

log = logging.getLogger(__name__)

INSIDE_TOL = 1e-9
EXIT_TOL = 1e-6


class PyramidNotFound(Exception):
    pass


class OutOfFrustum(PyramidNotFound):
    pass


class StartOutsidePyramid(ValueError):
    pass


class Verdict(enum.Enum):
    COLLISION_FREE = "collision_free"
    IN_COLLISION = "in_collision"


@dataclass(frozen=True, eq=False)
class Pyramid:
    """Expanded pyramid over an inclusive pixel block plus its shrunk interior.

    ``rect`` holds the continuous pixel bounds (u_min, u_max, v_min, v_max) of the
    footprint; pixel centres sit at integer coordinates so bounds fall on half pixels.
    """

    rect: tuple[float, float, float, float]
    pixels: tuple[int, int, int, int]
    base_depth: float
    shrunk_base_depth: float
    radius: float
    normals: np.ndarray
    apex: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def from_pixels(cls, image: DepthImage, j0: int, j1: int, i0: int, i1: int, base: float, r: float) -> Pyramid:
        intr = image.intrinsics
        A = np.empty((5, 3))
        b = np.empty(5)
        _kernels.pyramid_planes(j0, j1, i0, i1, float(base), float(r), intr.fx, intr.fy, intr.cx, intr.cy, A, b)
        A.setflags(write=False)
        rect = (j0 - 0.5, j1 + 0.5, i0 - 0.5, i1 + 0.5)
        return cls(rect, (j0, j1, i0, i1), float(base), float(base) - r, float(r), A[:4])

    @cached_property
    def constraints(self) -> tuple[np.ndarray, np.ndarray]:
        """(A, b) with the shrunk pyramid equal to {p : A p >= b}."""
        A = np.vstack([self.normals, [0.0, 0.0, -1.0]])
        b = np.array([self.radius] * 4 + [-self.shrunk_base_depth])
        return A, b

    @property
    def shrunk_apex(self) -> np.ndarray:
        """Foremost point of the shrunk pyramid (on its boundary)."""
        n = self.normals
        r = self.radius
        # lateral planes written as x = k z + offset; solve each opposing pair for its meeting depth
        kl, kr = -n[0, 2] / n[0, 0], n[1, 2] / -n[1, 0]
        kt, kb = -n[2, 2] / n[2, 1], n[3, 2] / -n[3, 1]
        ol, or_ = r / n[0, 0], r / -n[1, 0]
        ot, ob = r / n[2, 1], r / -n[3, 1]
        z_lr = (ol + or_) / (kr - kl)
        z_tb = (ot + ob) / (kb - kt)
        z = max(z_lr, z_tb)
        x = 0.5 * ((kl * z + ol) + (kr * z - or_))
        y = 0.5 * ((kt * z + ot) + (kb * z - ob))
        return np.array([x, y, z])

    def to_json(self) -> dict:
        return {
            "apex": [float(c) for c in self.apex],
            "rect": list(self.rect),
            "base_depth": self.base_depth,
            "shrunk_base_depth": self.shrunk_base_depth,
        }


def point_in_shrunk(pyramid: Pyramid, point) -> bool:
    p = np.asarray(point, dtype=float)
    A, b = pyramid.constraints
    if p[2] < -INSIDE_TOL:
        return False
    return bool(np.all(A @ p >= b - INSIDE_TOL))


# -- first exit of a polynomial trajectory ------------------------------------


def _first_negative(polys: np.ndarray, t0: float, t1: float) -> float | None:
    """Latest time before any row of ``polys`` (ascending coefficients in t) turns negative.

    Each row must be non-negative at ``t0`` (up to tolerance).  Returns ``None`` if
    all rows stay non-negative on [t0, t1]; otherwise a time within ``EXIT_TOL`` of
    the first crossing at which every row is still non-negative.  Crossings are
    isolated by Bernstein subdivision and refined by safeguarded Newton steps.
    """
    t = _kernels.first_negative(np.ascontiguousarray(polys, dtype=float), float(t0), float(t1), EXIT_TOL)
    return None if math.isnan(t) else float(t)


def _exit_result(t: float, what: str, t_start: float) -> float | None:
    if t == _kernels.START_OUTSIDE:
        raise StartOutsidePyramid(f"trajectory is outside the {what} at t={t_start}")
    return None if math.isnan(t) else float(t)


def first_exit_time(primitive: QuinticPrimitive, pyramid: Pyramid, t_start: float = 0.0) -> float | None:
    """Time the trajectory first leaves the shrunk pyramid after ``t_start``; ``None`` if it never does."""
    A, b = pyramid.constraints
    t = _kernels.exit_time(primitive.coeffs, A, b, float(t_start), primitive.T)
    return _exit_result(t, "pyramid", t_start)


def ball_exit_time(primitive: QuinticPrimitive, radius: float, t_start: float = 0.0) -> float | None:
    """Time the trajectory first leaves the origin-centred ball of ``radius``."""
    t = _kernels.ball_exit(primitive.coeffs, float(radius), float(t_start), primitive.T)
    return _exit_result(t, "near-field ball", t_start)


# -- inflation ----------------------------------------------------------------


@dataclass
class FreeSpaceModel:
    """Per-frame free-space state: the image, the vehicle radius and the pyramid cache.

    The cache is a set of flat arrays (half-spaces, pixel blocks, base depths)
    shared with the compiled collision check; ``capacity`` bounds how many
    pyramids one frame keeps.
    """

    image: DepthImage
    radius: float
    near_limit: float
    max_pyramids: int = 8
    seed_radius: int = 25
    capacity: int = 512

    def __post_init__(self):
        if not self.radius > 0 or not self.near_limit > 0:
            raise ValueError("radius and near_limit must be positive")
        if self.max_pyramids < 1 or self.capacity < 1:
            raise ValueError("max_pyramids and capacity must be at least 1")
        image = self.image
        distance = image.depths * image.intrinsics.ray_norms
        near = distance <= self.near_limit + self.radius
        rays = image.intrinsics.ray_grid[near]
        self.near_points = np.ascontiguousarray(rays * image.depths[near][:, None])
        self.near_radius = self.ball_radius(np.zeros(3))
        self._tables = None
        self._A = np.zeros((self.capacity, 5, 3))
        self._b = np.zeros((self.capacity, 5))
        self._rect = np.zeros((self.capacity, 4), dtype=np.int64)
        self._base = np.zeros(self.capacity)
        self._count = np.zeros(1, dtype=np.int64)

    def __len__(self) -> int:
        return int(self._count[0])

    @property
    def range_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """Row and column range-minimum tables of the depth image, built on first use."""
        if self._tables is None:
            self._tables = _kernels.range_min_tables(self.image.depths)
        return self._tables

    def ball_radius(self, point) -> float:
        """Radius of the near-field ball around a camera-frame point (zero outside the near field)."""
        p = np.asarray(point, dtype=float).reshape(3)
        return float(_kernels.near_ball_radius(p, self.near_points, self.radius, self.near_limit))

    @property
    def pyramids(self) -> list[Pyramid]:
        image, r = self.image, self.radius
        return [
            Pyramid.from_pixels(image, *(int(x) for x in self._rect[k]), float(self._base[k]), r)
            for k in range(len(self))
        ]

    def add(self, pyramid: Pyramid) -> bool:
        """Cache ``pyramid``; returns False when the cache is full."""
        k = len(self)
        if k >= self.capacity:
            return False
        A, b = pyramid.constraints
        self._A[k] = A
        self._b[k] = b
        self._rect[k] = pyramid.pixels
        self._base[k] = pyramid.base_depth
        self._count[0] += 1
        return True

    def containing(self, point) -> list[Pyramid]:
        n = len(self)
        if n == 0:
            return []
        p = np.asarray(point, dtype=float)
        inside = np.all(self._A[:n] @ p >= self._b[:n] - INSIDE_TOL, axis=1)
        pyramids = self.pyramids
        return [pyramids[k] for k in np.nonzero(inside)[0]]

    def dump_jsonl(self, fh, **extra) -> None:
        for pyr in self.pyramids:
            fh.write(json.dumps({**extra, **pyr.to_json()}) + "\n")


def inflate_pyramid(model: FreeSpaceModel, point_cam) -> Pyramid:
    """Grow the largest pixel block around the query's pixel and return its pyramid.

    The seed is the pixel nearest the query's projection whose depth exceeds the
    query depth plus the radius.  Sides are visited right, down, left, up; each
    advances by a step that doubles on success and halves on failure.  A
    one-pixel strip holding a shallower pixel lowers the base to that depth while
    the query still fits, otherwise the side stops.  Growth ends when no side can
    be extended by a single pixel.  The pyramid is not added to the cache.
    """
    p = np.asarray(point_cam, dtype=float).reshape(3)
    image = model.image
    intr = image.intrinsics
    A = np.empty((5, 3))
    b = np.empty(5)
    rect = np.empty(4, dtype=np.int64)
    rows, cols = model.range_tables
    status, base = _kernels.inflate(
        image.depths, rows, cols, p, intr.fx, intr.fy, intr.cx, intr.cy, float(image.max_range),
        model.radius, model.seed_radius, A, b, rect,
    )
    if status == _kernels.OUT_OF_FRUSTUM:
        raise OutOfFrustum(f"query {p.tolist()} does not project into the image")
    if status == _kernels.NOT_FOUND:
        raise PyramidNotFound(f"no pyramid around {p.tolist()} keeps the radius {model.radius}")
    return Pyramid.from_pixels(image, *(int(x) for x in rect), float(base), model.radius)


def trajectory_collision_free(model: FreeSpaceModel, primitive: QuinticPrimitive) -> Verdict:
    """Cover [0, T] with near-field balls and a chain of shrunk pyramids.

    From the current time, every cached pyramid containing the current point is
    asked for its exit time and the latest one wins.  If none advances, a ball
    around the point is tried, and failing that a new pyramid is inflated there.
    Inflation first asks for a base deep enough for the rest of the trajectory
    and lowers that floor in steps down to the plain requirement.  The
    trajectory is collision free once some pyramid holds it to the end.  It is
    in collision if inflation fails, makes no progress, or would need more than
    ``max_pyramids`` pyramids.

    Verdicts can depend on the pyramids already cached in ``model`` during the
    same frame: a trajectory may be certified by a pyramid built for an earlier
    candidate that a fresh model would not build.
    """
    ok = coefficients_collision_free(model, primitive.coeffs, primitive.T)
    return Verdict.COLLISION_FREE if ok else Verdict.IN_COLLISION


def coefficients_collision_free(model: FreeSpaceModel, coeffs: np.ndarray, duration: float) -> bool:
    """``trajectory_collision_free`` on raw camera-frame power-basis coefficients, shape (3, 6)."""
    image = model.image
    intr = image.intrinsics
    rows, cols = model.range_tables
    return bool(
        _kernels.collision_free(
            np.ascontiguousarray(coeffs, dtype=float), float(duration), image.depths, rows, cols, intr.fx, intr.fy, intr.cx,
            intr.cy, float(image.max_range), model.radius, model.near_points, model.near_limit, model.seed_radius,
            model.max_pyramids, model._A, model._b, model._rect, model._base, model._count,
        )
    )
