"""Closed-loop missions: the planner flying a simulated vehicle through a rendered world."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from ..geometry import CameraIntrinsics, CameraPose
from ..planner import (
    DegenerateDirection,
    PlanResult,
    VehicleState,
    goal_reached,
    plan,
    reference_utility,
    yaw_command,
)
from . import config as config_mod
from .render import render_depth
from .vehicle import BatteryModel, Quadrotor, Reference, VehicleParams, hover_reference, hover_state
from .world import World, make_forest

log = logging.getLogger("pyramid_planner.sim")

FORMAT_VERSION = 1

CSV_HEADERS = {
    "trajectory": ("t", "x", "y", "z", "ref_x", "ref_y", "ref_z", "clearance"),
    "velocity": ("t", "vx", "vy", "vz", "speed", "v_max"),
    "planner": (
        "t",
        "frame",
        "sampled",
        "better",
        "collision_free",
        "in_collision",
        "velocity_inadmissible",
        "input_infeasible",
        "higher_cost",
        "best_utility",
        "replanned",
        "pyramids",
    ),
    "thrust": ("t", "voltage", "u", "thrust_cmd", "thrust_true", "c_z", "kV", "kM"),
}


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6f}"


@dataclass
class MetricsLog:
    """Time series of one run plus its summary; wall-clock timings are kept apart so logs stay reproducible."""

    rows: dict[str, list[tuple]] = field(default_factory=lambda: {k: [] for k in CSV_HEADERS})
    summary: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    world: World | None = None
    config: dict | None = None

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, header in CSV_HEADERS.items():
            with open(out / f"{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows([_fmt(v) for v in row] for row in self.rows[name])
        (out / "summary.json").write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
        (out / "timing.json").write_text(json.dumps(self.timing, indent=2, sort_keys=True) + "\n")
        if self.config is not None:
            (out / "config.json").write_text(json.dumps(self.config, indent=2, sort_keys=True) + "\n")
        if self.world is not None:
            trees = [dict(zip(("x", "y", "radius", "height"), map(float, c))) for c in self.world.cylinders]
            (out / "world.json").write_text(json.dumps({"ground_z": self.world.ground_z, "cylinders": trees}, indent=2) + "\n")


def build_world(cfg: dict, rng: np.random.Generator) -> World:
    w = cfg["world"]
    start = cfg["mission"]["start"]
    goal = cfg["mission"]["goal"]
    if w["kind"] == "empty" or w["density"] == 0:
        return World(np.zeros((0, 4)), 0.0, tuple(w["region"]))
    keep = [(start[0], start[1], w["keepout"]), (goal[0], goal[1], w["keepout"])]
    return make_forest(
        rng,
        w["density"],
        tuple(w["region"]),
        tuple(w["radius_range"]),
        tuple(w["height_range"]),
        w["min_spacing"],
        keep,
    )


def render_epsilon(intr: CameraIntrinsics, max_range: float) -> float:
    """Largest lateral gap between neighbouring pixel rays inside the sensing range."""
    return max_range * float(np.max(intr.ray_norms)) / min(intr.fx, intr.fy)


@dataclass
class SoundnessTally:
    samples: int
    radius: float
    eps_render: float
    checked: int = 0
    violations: int = 0
    world_violations: int = 0
    min_image: float = math.inf
    min_world: float = math.inf

    def check(self, result: PlanResult, image, world: World, position) -> None:
        if not result.free or self.samples == 0:
            return
        tree = cKDTree(image.points())
        local = world.near(position, 15.0)
        ts_unit = np.linspace(0.0, 1.0, self.samples)
        for prim_world, prim_cam in result.free:
            ts = ts_unit * prim_cam.T
            pts_cam = prim_cam.sample(ts)[0]
            d_img, _ = tree.query(pts_cam, k=1)
            d_world = local.clearance(prim_world.sample(ts)[0])
            self.checked += 1
            lo_img = float(d_img.min())
            lo_world = float(d_world.min())
            self.min_image = min(self.min_image, lo_img)
            self.min_world = min(self.min_world, lo_world)
            if lo_img < self.radius - 1e-6:
                self.violations += 1
            if lo_world < self.radius - self.eps_render:
                self.world_violations += 1

    def as_dict(self) -> dict:
        fin = lambda x: None if not math.isfinite(x) else round(x, 6)  # noqa: E731
        return {
            "checked": self.checked,
            "violations": self.violations,
            "world_violations": self.world_violations,
            "min_image_clearance": fin(self.min_image),
            "min_world_clearance": fin(self.min_world),
            "eps_render": round(self.eps_render, 6),
        }


def stall_yaw_offset(stalled_for: float, wait: float, dwell: float, step_deg: float) -> float:
    """Yaw offset (rad) that sweeps the camera while the vehicle hovers without a plan.

    After ``wait`` seconds without anything to track, the heading alternates
    +step, -step, +2 step, -2 step and so on, holding each for ``dwell`` seconds,
    never beyond half a turn.  Zero while a plan is being flown.
    """
    if step_deg <= 0.0 or stalled_for <= wait:
        return 0.0
    k = int((stalled_for - wait) // dwell)
    n_side = max(1, int(180.0 // step_deg))
    k %= 2 * n_side
    magnitude = (k // 2 + 1) * step_deg
    return math.radians(magnitude if k % 2 == 0 else -magnitude)


def run_scenario(cfg: dict | None = None, seed: int | None = None) -> MetricsLog:
    """Fly one mission and return its log.

    Control runs at the configured rate; every new camera frame is rendered from
    the true pose and triggers one planning cycle until the goal is reached.  The
    run ends on arrival (after the settle period), collision or timeout.
    """
    cfg = config_mod.resolve(cfg)
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    planner_cfg, params, model, battery = config_mod.build(cfg)
    ss = np.random.SeedSequence(seed)
    rng_world, rng_plan, rng_imu = (np.random.default_rng(s) for s in ss.spawn(3))
    world = build_world(cfg, rng_world)

    cam = cfg["camera"]
    intr = CameraIntrinsics.centered(cam["width"], cam["height"], cam["focal"])
    max_range = float(cam["max_range"])
    mission = cfg["mission"]
    start = np.array(mission["start"], dtype=float)
    goal = np.array(mission["goal"], dtype=float)
    ctrl_hz = float(cfg["control"]["rate_hz"])
    cam_hz = float(cam["rate_hz"])
    dt = 1.0 / ctrl_hz
    n_steps = int(math.ceil(mission["timeout"] * ctrl_hz - 1e-9))
    collision_floor = 0.3 * planner_cfg.radius

    try:
        yaw0 = yaw_command(start, goal)
    except DegenerateDirection:
        yaw0 = 0.0
    quad = Quadrotor(hover_state(start, 0.0, yaw0), model, battery, params, rng_imu)
    reference: Reference = hover_reference(start)
    has_plan = False
    tally = SoundnessTally(cfg["logging"]["soundness_samples"], planner_cfg.radius, render_epsilon(intr, max_range))

    mlog = MetricsLog(world=world, config={**cfg, "seed": seed})
    rows = mlog.rows
    outcome = "timeout"
    arrival_time = None
    end_time = None
    min_clear = math.inf
    max_speed = 0.0
    max_axis = 0.0
    path = 0.0
    cycles = 0
    replans = 0
    sampled_total = 0
    better_total = 0
    plan_wall = []
    render_wall = []
    wall0 = time.perf_counter()
    last_frame = -1
    yaw = yaw0
    ctrl = cfg["control"]
    settled_at = 0.0  # last time the vehicle had something to track

    for k in range(n_steps + 1):
        t = k * dt
        state = quad.state
        pos = state.position
        clear = float(world.clearance(pos)[0])
        min_clear = min(min_clear, clear)
        vel = state.velocity
        speed = float(np.linalg.norm(vel))
        max_speed = max(max_speed, speed)
        max_axis = max(max_axis, float(np.max(np.abs(vel))))
        ref_pos = reference.at(t)[0]
        rows["trajectory"].append((t, *pos, *ref_pos, clear))
        rows["velocity"].append((t, *vel, speed, planner_cfg.v_max))
        if clear < collision_floor:
            outcome = "collision"
            end_time = t
            break
        if arrival_time is None and goal_reached(pos, goal, planner_cfg):
            arrival_time = t
            outcome = "arrival"
        if arrival_time is not None and t >= arrival_time + mission["settle"] - 1e-9:
            end_time = t
            break
        if k == n_steps:
            end_time = t
            break

        frame = int(math.floor(k * cam_hz / ctrl_hz + 1e-9))
        if frame != last_frame and arrival_time is None:
            last_frame = frame
            pose = CameraPose.from_body(pos, state.attitude)
            w0 = time.perf_counter()
            image = render_depth(world, pose, intr, max_range)
            render_wall.append(time.perf_counter() - w0)
            try:
                yaw = yaw_command(pos, goal)
            except DegenerateDirection:
                pass
            if has_plan:
                settled_at = max(settled_at, reference.t0 + reference.primitive.T)
            yaw += stall_yaw_offset(t - settled_at, ctrl["stall_wait"], ctrl["stall_dwell"], ctrl["stall_yaw_step"])
            plan_state = VehicleState(pos, vel, quad.planning_acceleration, state.attitude, state.yaw, t)
            current = reference_utility(reference.primitive, t - reference.t0, goal) if has_plan else -math.inf
            result = plan(
                plan_state,
                goal,
                image,
                pose,
                planner_cfg,
                rng_plan,
                current_best_utility=current,
                collect_free=tally.samples > 0,
            )
            plan_wall.append(result.cycle_time)
            tally.check(result, image, world, pos)
            replanned = result.best is not None
            if replanned:
                settled_at = t
                reference = Reference(result.best, t)
                has_plan = True
                replans += 1
            cycles += 1
            better = result.sampled - result.counters["higher_cost"]
            sampled_total += result.sampled
            better_total += better
            c = result.counters
            rows["planner"].append(
                (
                    t,
                    frame,
                    result.sampled,
                    better,
                    c["collision_free"],
                    c["in_collision"],
                    c["velocity_inadmissible"],
                    c["input_infeasible"],
                    c["higher_cost"],
                    result.best_utility,
                    replanned,
                    result.pyramids,
                )
            )

        new = quad.step(reference, yaw, dt)
        new.time = (k + 1) * dt
        path += float(np.linalg.norm(new.position - pos))
        tl = quad.last
        rows["thrust"].append((t, tl.voltage, tl.u, tl.thrust_cmd, tl.thrust_true, tl.c_z, model.kV, model.kM))

    mlog.summary = {
        "format_version": FORMAT_VERSION,
        "seed": seed,
        "outcome": outcome,
        "arrival": outcome == "arrival",
        "mission_time": None if arrival_time is None else round(arrival_time, 6),
        "sim_time": round(end_time, 6),
        "min_clearance": round(min_clear, 6),
        "max_speed": round(max_speed, 6),
        "max_axis_speed": round(max_axis, 6),
        "path_length": round(path, 6),
        "cycles": cycles,
        "replans": replans,
        "trees": int(len(world.cylinders)),
        "mean_sampled": round(sampled_total / cycles, 6) if cycles else 0.0,
        "mean_better": round(better_total / cycles, 6) if cycles else 0.0,
        "final_kV": round(model.kV, 9),
        "final_kM": round(model.kM, 9),
        "soundness": tally.as_dict(),
    }
    mlog.timing = {
        "wall_seconds": time.perf_counter() - wall0,
        "plan_ms_mean": 1e3 * float(np.mean(plan_wall)) if plan_wall else 0.0,
        "plan_ms_max": 1e3 * float(np.max(plan_wall)) if plan_wall else 0.0,
        "render_ms_mean": 1e3 * float(np.mean(render_wall)) if render_wall else 0.0,
    }
    log.info("seed %d: %s after %.2f s, min clearance %.3f m", seed, outcome, end_time, min_clear)
    return mlog


@dataclass
class HoverLog:
    t: np.ndarray
    altitude_error: np.ndarray
    kV: np.ndarray
    kM: np.ndarray
    voltage: np.ndarray

    def steady_error(self, window: float = 60.0) -> float:
        """Mean absolute altitude error over the final ``window`` seconds."""
        sel = self.t >= self.t[-1] - window
        return float(np.mean(np.abs(self.altitude_error[sel])))

    def km_drift(self, window: float = 60.0) -> float:
        """Least-squares slope of kM over the final ``window`` seconds, per second."""
        sel = self.t >= self.t[-1] - window
        return float(np.polyfit(self.t[sel], self.kM[sel], 1)[0])


def run_hover(
    duration: float = 300.0,
    v_start: float = 16.8,
    v_end: float = 14.0,
    plant_gain: float = 0.9,
    adapt: bool = True,
    seed: int = 0,
    rate_hz: float = 100.0,
    altitude: float = 1.5,
    params: VehicleParams | None = None,
) -> HoverLog:
    """Hold a hover set-point while the battery droops, optionally without thrust adaptation."""
    base = params or VehicleParams()
    p = VehicleParams(
        mass=base.mass,
        n_motors=base.n_motors,
        kp=base.kp,
        kd=base.kd,
        tau_att=base.tau_att,
        imu_sigma=base.imu_sigma,
        plant_gain=plant_gain,
        adapt_kv=adapt,
        adapt_km=adapt,
    )
    _, _, model, _ = config_mod.build(config_mod.resolve({"vehicle": {"mass": p.mass, "n_motors": p.n_motors}}))
    battery = BatteryModel(v_start, v_end, (v_start - v_end) / duration)
    rng = np.random.default_rng(seed)
    target = np.array([0.0, 0.0, altitude])
    quad = Quadrotor(hover_state(target), model, battery, p, rng)
    ref = hover_reference(target)
    dt = 1.0 / rate_hz
    n = int(round(duration * rate_hz))
    out = np.empty((n, 5))
    for k in range(n):
        s = quad.step(ref, 0.0, dt)
        s.time = (k + 1) * dt
        out[k] = (s.time, s.position[2] - altitude, model.kV, model.kM, quad.last.voltage)
    return HoverLog(*out.T)
