"""Deterministic closed-loop simulation: worlds, depth rendering, vehicle and missions."""

from .config import ConfigInvalid, load, resolve
from .render import render_depth
from .scenario import MetricsLog, run_hover, run_scenario
from .vehicle import BatteryModel, Quadrotor, Reference, VehicleParams, imu_cz, step
from .world import World, make_forest

__all__ = [
    "BatteryModel",
    "ConfigInvalid",
    "MetricsLog",
    "Quadrotor",
    "Reference",
    "VehicleParams",
    "World",
    "imu_cz",
    "load",
    "make_forest",
    "render_depth",
    "resolve",
    "run_hover",
    "run_scenario",
    "step",
]
