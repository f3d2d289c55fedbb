"""Voltage-adaptive motor thrust model.

Per-motor thrust is ``K * (c0 * (u + c1)**2 + c2)`` for a normalised command
``u`` in [0, 1].  The gain ``K = kV * kM`` splits into a voltage term read off an
affine hover-throttle fit and a residual term adapted online from the measured
specific force.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class CommandOutOfRange(ValueError):
    pass


class ThrustUnachievable(ValueError):
    pass


class NonPositiveHoverFit(ValueError):
    pass


@dataclass
class ThrustModelState:
    c0: float = 20.0
    c1: float = 0.1
    c2: float = -0.2
    kV: float = 1.0
    kM: float = 1.0
    v_ref: float = 16.8
    h_slope: float = -0.025
    h_intercept: float = 0.82
    n: int = 4
    m: float = 2.4
    gamma_m: float = 0.02
    km_bounds: tuple[float, float] = (0.5, 2.0)
    lpf_hz: float = 5.0
    f_hat_filtered: float | None = None

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")
        if not (self.kV > 0 and self.kM > 0):
            raise ValueError("gains must be positive")
        if self.n < 1 or not self.m > 0:
            raise ValueError("need at least one motor and positive mass")

    @property
    def K(self) -> float:
        return self.kV * self.kM

    def hover_command(self, voltage: float) -> float:
        return self.h_slope * voltage + self.h_intercept


def thrust_from_command(u: float, state: ThrustModelState) -> float:
    """Per-motor thrust in newtons predicted by the model."""
    if not 0.0 <= u <= 1.0:
        raise CommandOutOfRange(f"command {u} outside [0, 1]")
    return state.K * (state.c0 * (u + state.c1) ** 2 + state.c2)


def command_from_thrust(f_des: float, state: ThrustModelState, strict: bool = False) -> float:
    """Invert the model; out-of-range requests clamp to [0, 1] unless ``strict``."""
    f_lo = thrust_from_command(0.0, state)
    f_hi = thrust_from_command(1.0, state)
    if f_des <= f_lo or f_des >= f_hi:
        if strict and not (f_lo <= f_des <= f_hi):
            raise ThrustUnachievable(f"{f_des:.3f} N outside [{f_lo:.3f}, {f_hi:.3f}] N")
        return 0.0 if f_des <= f_lo else 1.0
    inner = (f_des / state.K - state.c2) / state.c0
    return min(1.0, max(0.0, math.sqrt(inner) - state.c1))


def command_within_range(f_des: float, state: ThrustModelState) -> bool:
    return thrust_from_command(0.0, state) <= f_des <= thrust_from_command(1.0, state)


def update_kV(voltage: float, state: ThrustModelState) -> float:
    h = state.hover_command(voltage)
    if not h > 0:
        raise NonPositiveHoverFit(f"hover fit is {h} at {voltage} V")
    state.kV = state.hover_command(state.v_ref) / h
    return state.kV


def estimate_thrust(c_z: float, state: ThrustModelState) -> tuple[float, float]:
    """Total and per-motor thrust implied by the body-z specific force."""
    total = state.m * c_z
    return total, total / state.n


def update_kM(state: ThrustModelState, u_cmd: float, c_z: float, dt: float) -> float:
    """Integrate the residual between measured and modelled per-motor thrust into kM.

    The measured share is low-pass filtered first.  kM moves towards the value at
    which the model reproduces the measurement and is clamped without windup.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    _, f_hat = estimate_thrust(c_z, state)
    if state.lpf_hz > 0:
        if state.f_hat_filtered is None:
            state.f_hat_filtered = f_hat
        else:
            a = 1.0 - math.exp(-2.0 * math.pi * state.lpf_hz * dt)
            state.f_hat_filtered += a * (f_hat - state.f_hat_filtered)
        f_hat = state.f_hat_filtered
    f_model = thrust_from_command(u_cmd, state)
    lo, hi = state.km_bounds
    state.kM = min(hi, max(lo, state.kM + state.gamma_m * (f_hat - f_model) * dt))
    return state.kM
