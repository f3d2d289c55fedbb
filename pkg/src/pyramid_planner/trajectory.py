"""Quintic minimum-jerk motion primitives and their dynamic checks.

A primitive is written per axis as

    s(t) = alpha/120 t^5 + beta/24 t^4 + gamma/6 t^3 + a0/2 t^2 + v0 t + s0,  t in [0, T]

with alpha, beta, gamma chosen so that s(T) = sT and the terminal velocity and
acceleration vanish.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .geometry import Rotation

GRAVITY = 9.80665


class NonPositiveDuration(ValueError):
    pass


class TimeOutOfRange(ValueError):
    pass


class Feasibility(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class FeasibilityLimits:
    """Actuator limits. Thrust bounds are collective, in newtons."""

    f_min: float = 5.0
    f_max: float = 40.0
    omega_max: float = 10.0
    v_max: float = 3.0
    mass: float = 2.4

    def __post_init__(self):
        if not 0.0 <= self.f_min < self.f_max:
            raise ValueError("need 0 <= f_min < f_max")
        if not self.omega_max > 0 or not self.v_max > 0 or not self.mass > 0:
            raise ValueError("omega_max, v_max and mass must be positive")


def boundary_coefficients(s0, v0, a0, sT, T):
    """Jerk-level coefficients (alpha, beta, gamma) of the rest-terminating quintic.

    Works on scalars or on broadcastable arrays; ``T`` must broadcast against the
    per-axis quantities.
    """
    T2 = T * T
    T3 = T2 * T
    ds = sT - s0 - v0 * T - 0.5 * a0 * T2
    dv = -v0 - a0 * T
    da = -a0
    T5 = T3 * T2
    alpha = (720.0 * ds - 360.0 * T * dv + 60.0 * T2 * da) / T5
    beta = (-360.0 * T * ds + 168.0 * T2 * dv - 24.0 * T3 * da) / T5
    gamma = (60.0 * T2 * ds - 24.0 * T3 * dv + 3.0 * T2 * T2 * da) / T5
    return alpha, beta, gamma


@dataclass(frozen=True, eq=False)
class QuinticPrimitive:
    s0: np.ndarray
    v0: np.ndarray
    a0: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    T: float
    frame: str = "inertial"

    @cached_property
    def coeffs(self) -> np.ndarray:
        """Power-basis coefficients, shape (3, 6), lowest order first."""
        return np.stack(
            [self.s0, self.v0, self.a0 / 2.0, self.gamma / 6.0, self.beta / 24.0, self.alpha / 120.0],
            axis=1,
        )

    @property
    def end_position(self) -> np.ndarray:
        return self.evaluate(self.T)[0]

    def _clamp(self, t: float) -> float:
        if t < 0.0:
            if t < -1e-12:
                raise TimeOutOfRange(f"t={t} outside [0, {self.T}]")
            return 0.0
        if t > self.T:
            if t > self.T + 1e-12:
                raise TimeOutOfRange(f"t={t} outside [0, {self.T}]")
            return self.T
        return t

    def evaluate(self, t: float):
        """Position, velocity, acceleration and jerk at time ``t``."""
        t = self._clamp(t)
        if t == 0.0:
            return self.s0.copy(), self.v0.copy(), self.a0.copy(), self.gamma.copy()
        al, be, ga = self.alpha, self.beta, self.gamma
        jerk = (al / 2.0 * t + be) * t + ga
        acc = ((al / 6.0 * t + be / 2.0) * t + ga) * t + self.a0
        vel = (((al / 24.0 * t + be / 6.0) * t + ga / 2.0) * t + self.a0) * t + self.v0
        pos = ((((al / 120.0 * t + be / 24.0) * t + ga / 6.0) * t + self.a0 / 2.0) * t + self.v0) * t + self.s0
        return pos, vel, acc, jerk

    def sample(self, ts) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Vectorised evaluation; each output has shape (len(ts), 3)."""
        t = np.asarray(ts, dtype=float)[:, None]
        al, be, ga, a0, v0, s0 = self.alpha, self.beta, self.gamma, self.a0, self.v0, self.s0
        jerk = (al / 2.0 * t + be) * t + ga
        acc = ((al / 6.0 * t + be / 2.0) * t + ga) * t + a0
        vel = (((al / 24.0 * t + be / 6.0) * t + ga / 2.0) * t + a0) * t + v0
        pos = ((((al / 120.0 * t + be / 24.0) * t + ga / 6.0) * t + a0 / 2.0) * t + v0) * t + s0
        return pos, vel, acc, jerk

    def transformed(self, rotation: Rotation | np.ndarray, origin, frame: str) -> QuinticPrimitive:
        """Express the primitive in a frame whose coordinates are ``R @ (s - origin)``."""
        R = rotation.matrix if isinstance(rotation, Rotation) else np.asarray(rotation, dtype=float)
        origin = np.asarray(origin, dtype=float)
        return QuinticPrimitive(
            R @ (self.s0 - origin),
            R @ self.v0,
            R @ self.a0,
            R @ self.alpha,
            R @ self.beta,
            R @ self.gamma,
            self.T,
            frame,
        )


def make_primitive(s0, v0, a0, sT, T: float, frame: str = "inertial") -> QuinticPrimitive:
    if not T > 0:
        raise NonPositiveDuration(f"duration must be positive, got {T}")
    s0, v0, a0, sT = (np.array(x, dtype=float).reshape(3) for x in (s0, v0, a0, sT))
    for arr in (s0, v0, a0, sT):
        if not np.all(np.isfinite(arr)):
            raise ValueError("primitive boundary values must be finite")
    alpha, beta, gamma = boundary_coefficients(s0, v0, a0, sT, float(T))
    return QuinticPrimitive(s0, v0, a0, alpha, beta, gamma, float(T), frame)


def evaluate(primitive: QuinticPrimitive, t: float):
    return primitive.evaluate(t)


# -- velocity admissibility ---------------------------------------------------


def per_axis_peak_speed(primitive: QuinticPrimitive, axis: int) -> float:
    """Largest |velocity| on one axis over [0, T], from the acceleration roots and both ends."""
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
    return float(_kernels.axis_peak_speed(primitive.coeffs[axis], primitive.T))


def check_velocity_admissible(primitive: QuinticPrimitive, v_max: float) -> bool:
    if not v_max > 0:
        raise ValueError("v_max must be positive")
    return bool(_kernels.velocity_admissible(primitive.coeffs, primitive.T, v_max))


# -- input feasibility --------------------------------------------------------

_VERDICTS = {
    _kernels.FEASIBLE: Feasibility.FEASIBLE,
    _kernels.INFEASIBLE: Feasibility.INFEASIBLE,
    _kernels.INDETERMINATE: Feasibility.INDETERMINATE,
}


def check_input_feasibility(
    primitive: QuinticPrimitive,
    limits: FeasibilityLimits,
    dt_min: float = 0.02,
    gravity=(0.0, 0.0, GRAVITY),
) -> Feasibility:
    """Recursive interval test of the thrust and body-rate requirements.

    On each interval the per-axis extrema of the required specific thrust
    ``acc + g`` bound its norm from above and below.  The body rate is bounded
    by ``|jerk| / |acc + g|`` using the interval's lower thrust bound.  A point
    violation at an interval boundary is definitive; intervals that can be neither
    accepted nor rejected are halved until they are shorter than ``dt_min``.
    """
    if not dt_min > 0:
        raise ValueError("dt_min must be positive")
    code = _kernels.input_feasibility(
        primitive.coeffs,
        primitive.T,
        np.asarray(gravity, dtype=float),
        limits.f_min / limits.mass,
        limits.f_max / limits.mass,
        limits.omega_max,
        dt_min,
    )
    return _VERDICTS[code]
