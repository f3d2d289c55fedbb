"""Shared math: rotations, the pinhole camera, depth images and small polynomial solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels


class NonPositiveDepth(ValueError):
    pass


class AllCoefficientsZero(ValueError):
    pass


def vec3(x=0.0, y=0.0, z=0.0) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion (w, x, y, z) mapping body-frame vectors into the world frame."""

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        n = math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
        if not math.isfinite(n) or n == 0.0:
            raise ValueError("quaternion must be finite and non-zero")
        if abs(n - 1.0) > 1e-12:
            for name in ("w", "x", "y", "z"):
                object.__setattr__(self, name, getattr(self, name) / n)

    @classmethod
    def identity(cls) -> Rotation:
        return cls()

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> Rotation:
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        s = math.sin(angle / 2.0)
        return cls(math.cos(angle / 2.0), axis[0] * s, axis[1] * s, axis[2] * s)

    @classmethod
    def from_euler(cls, roll: float, pitch: float, yaw: float) -> Rotation:
        """Z-Y-X (yaw, then pitch, then roll) Euler angles."""
        cr, sr = math.cos(roll / 2), math.sin(roll / 2)
        cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
        cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
        return cls(
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        )

    @classmethod
    def from_matrix(cls, m) -> Rotation:
        m = np.asarray(m, dtype=float)
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0:
            s = math.sqrt(tr + 1.0) * 2
            return cls(0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
        if m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
            return cls((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
        if m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
            return cls((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        return cls((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)

    @cached_property
    def matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        m = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        m.setflags(write=False)
        return m

    @property
    def z_axis(self) -> np.ndarray:
        return self.matrix[:, 2].copy()

    @property
    def yaw(self) -> float:
        w, x, y, z = self.w, self.x, self.y, self.z
        return math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))

    def apply(self, v) -> np.ndarray:
        return self.matrix @ np.asarray(v, dtype=float)

    def inv(self) -> Rotation:
        return Rotation(self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: Rotation) -> Rotation:
        a, b = self, other
        return Rotation(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )

    def slerp(self, other: Rotation, fraction: float) -> Rotation:
        """Rotate a ``fraction`` of the way from this attitude to ``other`` along the shortest arc."""
        a = np.array(self.as_tuple())
        b = np.array(other.as_tuple())
        dot = float(a @ b)
        if dot < 0.0:
            b, dot = -b, -dot
        if dot > 0.9995:
            q = a + fraction * (b - a)
            return Rotation(*q)
        theta = math.acos(min(1.0, dot))
        s = math.sin(theta)
        q = (math.sin((1.0 - fraction) * theta) * a + math.sin(fraction * theta) * b) / s
        return Rotation(*q)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def centered(cls, width: int, height: int, focal: float) -> CameraIntrinsics:
        """Square pixels with the principal point at the geometric centre (pixel centres at integers)."""
        return cls(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0, width, height)

    @cached_property
    def ray_grid(self) -> np.ndarray:
        """Per-pixel direction vectors with unit z, shape (height, width, 3)."""
        u = (np.arange(self.width) - self.cx) / self.fx
        v = (np.arange(self.height) - self.cy) / self.fy
        uu, vv = np.meshgrid(u, v)
        return np.stack([uu, vv, np.ones_like(uu)], axis=-1)

    @cached_property
    def ray_norms(self) -> np.ndarray:
        """Euclidean length of each unit-z pixel ray, shape (height, width)."""
        return np.linalg.norm(self.ray_grid, axis=-1)


@dataclass
class DepthImage:
    """Planar (camera-z) depths in metres, shape (height, width), row-major.

    Pixels without a sensor return carry ``max_range``.
    """

    intrinsics: CameraIntrinsics
    depths: np.ndarray
    max_range: float
    _points: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        d = np.ascontiguousarray(self.depths, dtype=float)
        intr = self.intrinsics
        if d.size != intr.width * intr.height:
            raise ValueError(f"depth array has {d.size} entries, expected {intr.width}x{intr.height}")
        d = d.reshape(intr.height, intr.width)
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise ValueError("depths must be finite and positive")
        if np.any(d > self.max_range):
            raise ValueError("depths must not exceed max_range")
        d.setflags(write=False)
        self.depths = d

    @classmethod
    def uniform(cls, intr: CameraIntrinsics, depth: float, max_range: float | None = None) -> DepthImage:
        max_range = depth if max_range is None else max_range
        return cls(intr, np.full((intr.height, intr.width), float(depth)), max_range)

    def points(self) -> np.ndarray:
        """Back-projection of every pixel centre, shape (height*width, 3)."""
        if self._points is None:
            self._points = (self.intrinsics.ray_grid * self.depths[..., None]).reshape(-1, 3)
        return self._points

    def save_pfm(self, path) -> None:
        write_pfm(path, self.depths)

    @classmethod
    def load_pfm(cls, path, intrinsics: CameraIntrinsics, max_range: float) -> DepthImage:
        return cls(intrinsics, read_pfm(path), max_range)


# camera axes (x right, y down, z forward) expressed in a forward-left-up body frame
BODY_FROM_CAMERA = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
BODY_FROM_CAMERA.setflags(write=False)


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Camera centre in the world and the rotation taking camera coordinates to world coordinates."""

    position: np.ndarray
    world_from_camera: np.ndarray

    @classmethod
    def from_body(cls, position, attitude: Rotation) -> CameraPose:
        return cls(np.asarray(position, dtype=float).copy(), attitude.matrix @ BODY_FROM_CAMERA)

    @property
    def camera_from_world(self) -> np.ndarray:
        return self.world_from_camera.T

    def to_camera(self, points_world) -> np.ndarray:
        return (np.asarray(points_world, dtype=float) - self.position) @ self.world_from_camera

    def to_world(self, points_cam) -> np.ndarray:
        return np.asarray(points_cam, dtype=float) @ self.world_from_camera.T + self.position


def project(point_cam, intr: CameraIntrinsics) -> tuple[float, float]:
    x, y, z = (float(c) for c in point_cam)
    if not z > 0:
        raise NonPositiveDepth(f"point has non-positive depth z={z}")
    return intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy


def back_project(u: float, v: float, depth: float, intr: CameraIntrinsics) -> np.ndarray:
    if not depth > 0:
        raise NonPositiveDepth(f"depth must be positive, got {depth}")
    return np.array([(u - intr.cx) / intr.fx * depth, (v - intr.cy) / intr.fy * depth, float(depth)])


# -- PFM ----------------------------------------------------------------------
#
# Single channel "Pf", little-endian (scale -1.0).  Rows are stored bottom-up as
# the format requires; read_pfm returns them top-down again.


def write_pfm(path, array) -> None:
    a = np.asarray(array, dtype="<f4")
    if a.ndim != 2:
        raise ValueError("PFM writer expects a 2-D array")
    h, w = a.shape
    with open(Path(path), "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(a[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(Path(path), "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"Pf":
            raise ValueError(f"not a single-channel PFM file: {magic!r}")
        w, h = (int(t) for t in fh.readline().split())
        scale = float(fh.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(w * h * 4), dtype=dtype)
    if data.size != w * h:
        raise ValueError("truncated PFM payload")
    return data.reshape(h, w)[::-1].astype(float)


# -- polynomial roots ---------------------------------------------------------


def solve_quadratic(a: float, b: float, c: float) -> list[float]:
    """Real roots of a*t^2 + b*t + c, sorted; degenerates to linear when a == 0."""
    if a == 0.0:
        if b == 0.0:
            if c == 0.0:
                raise AllCoefficientsZero("polynomial is identically zero")
            return []
        return [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return []
    if disc == 0.0:
        return [-b / (2.0 * a)]
    sq = math.sqrt(disc)
    # numerically stable pairing
    q = -0.5 * (b + math.copysign(sq, b))
    r1 = q / a
    r2 = c / q if q != 0.0 else -b / a - r1
    return sorted((r1, r2))


def solve_cubic(a3: float, a2: float, a1: float, a0: float) -> list[float]:
    """Real roots of a3*t^3 + a2*t^2 + a1*t + a0, sorted ascending, duplicates merged.

    Closed form (trigonometric for three real roots, Cardano otherwise) followed by
    a Newton polish on the original coefficients.
    """
    if a3 == 0.0:
        return solve_quadratic(a2, a1, a0)
    out = np.empty(3)
    n = _kernels.cubic_roots(float(a3), float(a2), float(a1), float(a0), out)
    return [float(x) for x in out[:n]]
