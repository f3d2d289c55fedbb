"""Point-mass multicopter with first-order attitude lag, cascaded tracking control and a battery."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Rotation
from ..planner import VehicleState, acceleration_estimate
from ..thrust import ThrustModelState, command_from_thrust, update_kM, update_kV
from ..trajectory import GRAVITY, QuinticPrimitive

E_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class BatteryModel:
    """Linear droop from ``v_full`` at ``droop_rate`` volts per second, floored at ``v_empty``."""

    v_full: float = 16.8
    v_empty: float = 14.0
    droop_rate: float = 0.0

    def __post_init__(self):
        if not (self.v_full > 0 and self.v_empty > 0 and self.v_empty <= self.v_full):
            raise ValueError("need 0 < v_empty <= v_full")
        if self.droop_rate < 0:
            raise ValueError("droop_rate must be non-negative")

    def voltage(self, t: float) -> float:
        return max(self.v_empty, self.v_full - self.droop_rate * max(t, 0.0))


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 2.4
    n_motors: int = 4
    kp: float = 6.0
    kd: float = 4.5
    tau_att: float = 0.12
    imu_sigma: float = 0.15
    plant_gain: float = 1.0
    adapt_kv: bool = True
    adapt_km: bool = True
    v_limit: float | None = None

    def __post_init__(self):
        if not (self.mass > 0 and self.n_motors >= 1 and self.tau_att > 0):
            raise ValueError("mass, motor count and attitude lag must be positive")
        if self.kp < 0 or self.kd < 0 or self.imu_sigma < 0 or not self.plant_gain > 0:
            raise ValueError("gains and noise level must be non-negative, plant gain positive")


@dataclass(frozen=True)
class Reference:
    """A primitive being tracked, started at simulation time ``t0``; it holds its end point afterwards."""

    primitive: QuinticPrimitive
    t0: float

    def at(self, t: float):
        tau = t - self.t0
        if tau >= self.primitive.T:
            # past the end the set-point rests: the end jerk must not leak into the feedforward
            z = np.zeros(3)
            return self.primitive.end_position, z, z.copy(), z.copy()
        return self.primitive.evaluate(max(tau, 0.0))


def hover_reference(position, t0: float = 0.0, duration: float = 1.0) -> Reference:
    p = np.asarray(position, dtype=float)
    z = np.zeros(3)
    return Reference(QuinticPrimitive(p.copy(), z, z, z, z, z, duration), t0)


def plant_thrust(u: float, voltage: float, model: ThrustModelState, params: VehicleParams) -> float:
    """Ground-truth collective thrust: the nominal curve scaled by the true voltage gain and ``plant_gain``."""
    k_true = params.plant_gain * model.hover_command(model.v_ref) / model.hover_command(voltage)
    return params.n_motors * k_true * (model.c0 * (u + model.c1) ** 2 + model.c2)


def imu_cz(state: VehicleState, thrust: float, rng: np.random.Generator | None, mass: float, sigma: float = 0.15) -> float:
    """Body-z specific force reading for the given true collective thrust."""
    cz = thrust / mass
    if rng is not None and sigma > 0:
        cz += float(rng.normal(0.0, sigma))
    return cz


def govern_velocity(a_cmd: np.ndarray, velocity: np.ndarray, v_limit: float, horizon: float, acceleration=None) -> np.ndarray:
    """Cap each axis of the commanded acceleration so the speed predicted ``horizon`` ahead stays within ``v_limit``.

    With the current ``acceleration`` given, the prediction also carries the
    velocity the lagging attitude will still add before a new command takes hold.
    """
    v = np.asarray(velocity, dtype=float)
    if acceleration is not None:
        v = v + np.asarray(acceleration, dtype=float) * horizon
    hi = (v_limit - v) / horizon
    lo = (-v_limit - v) / horizon
    return np.minimum(np.maximum(a_cmd, np.minimum(lo, 0.0)), np.maximum(hi, 0.0))


def desired_attitude(force, yaw: float) -> Rotation:
    """Attitude whose body z points along ``force`` with the heading closest to ``yaw``."""
    f = np.asarray(force, dtype=float)
    n = float(np.linalg.norm(f))
    z_b = f / n if n > 1e-9 else E_Z.copy()
    x_c = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    y_b = np.cross(z_b, x_c)
    ny = float(np.linalg.norm(y_b))
    if ny < 1e-9:
        y_b = np.array([-math.sin(yaw), math.cos(yaw), 0.0])
    else:
        y_b /= ny
    x_b = np.cross(y_b, z_b)
    return Rotation.from_matrix(np.column_stack([x_b, y_b, z_b]))


@dataclass
class StepTelemetry:
    u: float = 0.0
    thrust_cmd: float = 0.0
    thrust_true: float = 0.0
    c_z: float = 0.0
    voltage: float = 0.0


@dataclass
class Quadrotor:
    """Closed-loop vehicle: tracking controller, thrust model inverse, plant and estimator updates."""

    state: VehicleState
    model: ThrustModelState = field(default_factory=ThrustModelState)
    battery: BatteryModel = field(default_factory=BatteryModel)
    params: VehicleParams = field(default_factory=VehicleParams)
    rng: np.random.Generator | None = None
    last: StepTelemetry = field(default_factory=StepTelemetry)
    planning_acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def step(self, reference: Reference, yaw: float, dt: float) -> VehicleState:
        if not 0.0 < dt <= 0.02:
            raise ValueError("dt must lie in (0, 0.02]")
        p = self.params
        s = self.state
        pos_r, vel_r, acc_r, jerk_r = reference.at(s.time)
        a_cmd = acc_r + p.tau_att * jerk_r + p.kp * (pos_r - s.position) + p.kd * (vel_r - s.velocity)
        if p.v_limit is not None:
            a_cmd = govern_velocity(a_cmd, s.velocity, p.v_limit, p.tau_att + dt, s.acceleration)
        force = p.mass * (a_cmd + GRAVITY * E_Z)
        att_des = desired_attitude(force, yaw)
        collective = max(0.0, float(force @ s.attitude.z_axis))
        voltage = self.battery.voltage(s.time)
        u = command_from_thrust(collective / p.n_motors, self.model)
        thrust = plant_thrust(u, voltage, self.model, p)
        self.last = StepTelemetry(u, collective, thrust, 0.0, voltage)
        self.planning_acceleration = acceleration_estimate(collective, s.attitude, p.mass)
        new = step_dynamics(s, thrust, att_des, dt, p)
        cz = imu_cz(s, thrust, self.rng, p.mass, p.imu_sigma)
        self.last.c_z = cz
        if p.adapt_kv:
            update_kV(voltage, self.model)
        if p.adapt_km:
            update_kM(self.model, u, cz, dt)
        self.state = new
        return new


def step_dynamics(state: VehicleState, thrust: float, att_des: Rotation, dt: float, params: VehicleParams) -> VehicleState:
    """Semi-implicit Euler on m a = R e_z f - m g e_z, then the attitude lags towards ``att_des``."""
    acc = thrust / params.mass * state.attitude.z_axis - GRAVITY * E_Z
    vel = state.velocity + acc * dt
    pos = state.position + vel * dt
    att = state.attitude.slerp(att_des, min(1.0, dt / params.tau_att))
    return VehicleState(pos, vel, acc, att, att.yaw, state.time + dt)


def step(
    state: VehicleState,
    reference: Reference,
    model: ThrustModelState,
    battery: BatteryModel,
    dt: float,
    params: VehicleParams | None = None,
    yaw: float = 0.0,
    rng: np.random.Generator | None = None,
) -> VehicleState:
    """One control period; ``model`` is adapted in place when the params enable it."""
    quad = Quadrotor(state, model, battery, params or VehicleParams(), rng)
    return quad.step(reference, yaw, dt)


def hover_state(position, t: float = 0.0, yaw: float = 0.0) -> VehicleState:
    return VehicleState(position, np.zeros(3), np.zeros(3), Rotation.from_euler(0.0, 0.0, yaw), yaw, t)

