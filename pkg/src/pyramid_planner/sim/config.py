"""Scenario configuration: defaults, JSON loading and schema validation."""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

import jsonschema

from ..planner import PlannerConfig
from ..thrust import ThrustModelState
from ..trajectory import FeasibilityLimits
from .vehicle import BatteryModel, VehicleParams


class ConfigInvalid(ValueError):
    pass


DEFAULTS: dict = {
    "world": {
        "kind": "forest",
        "density": 0.08,
        "region": [3.0, 27.0, -12.0, 12.0],
        "radius_range": [0.15, 0.4],
        "height_range": [8.0, 15.0],
        "min_spacing": 2.5,
        "keepout": 2.5,
    },
    "mission": {"start": [0.0, 0.0, 1.5], "goal": [30.0, 0.0, 1.5], "timeout": 60.0, "settle": 0.0},
    "camera": {"width": 160, "height": 120, "focal": 70.0, "max_range": 10.0, "rate_hz": 30.0},
    "control": {
        "rate_hz": 100.0,
        "kp": 6.0,
        "kd": 4.5,
        "tau_att": 0.12,
        "velocity_governor": True,
        "governor_margin": 0.03,
        "stall_wait": 0.5,
        "stall_dwell": 0.5,
        "stall_yaw_step": 45.0,
    },
    "vehicle": {"mass": 2.4, "n_motors": 4, "imu_sigma": 0.15, "plant_gain": 1.0},
    "planner": {
        "v_max": 3.0,
        "radius": 0.6,
        "fov_margins": [0.1, 0.9],
        "depth_range": [1.5, 8.0],
        "duration_range": [1.0, 4.0],
        "budget": 2000,
        "deadline_ms": None,
        "goal_radius": 1.0,
        "near_limit": 2.0,
        "max_pyramids": 8,
        "dt_min": 0.02,
        "f_min": 5.0,
        "f_max": 40.0,
        "omega_max": 10.0,
    },
    "thrust": {
        "c0": 20.0,
        "c1": 0.1,
        "c2": -0.2,
        "v_ref": 16.8,
        "h_slope": -0.025,
        "h_intercept": 0.82,
        "gamma_m": 0.02,
        "lpf_hz": 5.0,
        "km_bounds": [0.5, 2.0],
        "adapt_kv": True,
        "adapt_km": True,
    },
    "battery": {"v_full": 16.8, "v_empty": 14.0, "droop_rate": 0.0},
    "logging": {"soundness_samples": 0},
}


def _schema(name: str) -> dict:
    text = resources.files("pyramid_planner").joinpath("schemas", name).read_text()
    return json.loads(text)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate(doc: dict, schema: str = "config.schema.json") -> None:
    try:
        jsonschema.validate(doc, _schema(schema))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {exc.message}") from None


def resolve(doc: dict | None = None) -> dict:
    """Validate a partial scenario document and fill in every default."""
    doc = {} if doc is None else doc
    validate(doc)
    full = _merge(DEFAULTS, doc)
    build(full)  # cross-field checks live in the dataclasses
    return full


def load(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: not valid JSON ({exc})") from None
    return resolve(doc)


def build(cfg: dict):
    """Typed objects (planner, vehicle, thrust model, battery) for a resolved document."""
    p = cfg["planner"]
    v = cfg["vehicle"]
    c = cfg["control"]
    t = cfg["thrust"]
    try:
        limits = FeasibilityLimits(p["f_min"], p["f_max"], p["omega_max"], p["v_max"], v["mass"])
        planner = PlannerConfig(
            v_max=p["v_max"],
            radius=p["radius"],
            fov_margins=tuple(p["fov_margins"]),
            depth_range=tuple(p["depth_range"]),
            duration_range=tuple(p["duration_range"]),
            budget=p["budget"],
            deadline_ms=p["deadline_ms"],
            goal_radius=p["goal_radius"],
            near_limit=p["near_limit"],
            limits=limits,
            dt_min=p["dt_min"],
            max_pyramids=p["max_pyramids"],
        )
        params = VehicleParams(
            mass=v["mass"],
            n_motors=v["n_motors"],
            kp=c["kp"],
            kd=c["kd"],
            tau_att=c["tau_att"],
            imu_sigma=v["imu_sigma"],
            plant_gain=v["plant_gain"],
            adapt_kv=t["adapt_kv"],
            adapt_km=t["adapt_km"],
            v_limit=p["v_max"] * (1.0 - c["governor_margin"]) if c["velocity_governor"] else None,
        )
        model = ThrustModelState(
            c0=t["c0"],
            c1=t["c1"],
            c2=t["c2"],
            v_ref=t["v_ref"],
            h_slope=t["h_slope"],
            h_intercept=t["h_intercept"],
            n=v["n_motors"],
            m=v["mass"],
            gamma_m=t["gamma_m"],
            km_bounds=tuple(t["km_bounds"]),
            lpf_hz=t["lpf_hz"],
        )
        battery = BatteryModel(**cfg["battery"])
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(str(exc)) from None
    if not 0.0 < 1.0 / cfg["control"]["rate_hz"] <= 0.02:
        raise ConfigInvalid("control rate must be at least 50 Hz")
    if cfg["camera"]["rate_hz"] > cfg["control"]["rate_hz"]:
        raise ConfigInvalid("camera rate must not exceed the control rate")
    return planner, params, model, battery
