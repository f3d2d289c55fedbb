"""Planner throughput on fixed synthetic frames.

A benchmark frame is a forest of vertical cylinders standing in front of a
level camera.  The full planning cycle is timed first; then every stage is
timed on its own over the same candidate batch to give per-call latencies.
"""

from __future__ import annotations

import math
import platform
import time

import numpy as np

from . import _kernels
from .geometry import CameraIntrinsics, CameraPose, Rotation
from .planner import PlannerConfig, VehicleState, build_candidates, plan
from .pyramid import FreeSpaceModel, coefficients_collision_free
from .sim.render import render_depth
from .sim.world import World
from .trajectory import GRAVITY

FRAME_BUDGET_S = 1.0 / 30.0
START = (0.0, 0.0, 1.5)
GOAL = (30.0, 0.0, 1.5)


def bench_world(obstacles: int, rng: np.random.Generator) -> World:
    """``obstacles`` trees scattered 3 to 15 m ahead of the camera."""
    x = rng.uniform(3.0, 15.0, obstacles)
    y = rng.uniform(-6.0, 6.0, obstacles)
    radius = rng.uniform(0.15, 0.4, obstacles)
    height = rng.uniform(8.0, 15.0, obstacles)
    return World(np.column_stack([x, y, radius, height]), 0.0)


def run_bench(
    width: int = 640,
    height: int = 480,
    focal: float | None = None,
    obstacles: int = 20,
    budget: int = 2000,
    repeats: int = 20,
    seed: int = 0,
    max_range: float = 10.0,
    config: PlannerConfig | None = None,
) -> dict:
    """Time ``repeats`` planning cycles on one frame and each stage on its own.

    Returns a JSON-ready report.  ``candidates_per_frame`` is the number of
    candidates fully processed (classified into any status) per 33 ms of
    planning time, from the median cycle.
    """
    if repeats < 1 or budget < 1:
        raise ValueError("repeats and budget must be at least 1")
    focal = width / 2.0 if focal is None else float(focal)
    config = config or PlannerConfig()
    config = PlannerConfig(**{**config.__dict__, "budget": budget, "deadline_ms": None})
    rng = np.random.default_rng(seed)
    world = bench_world(obstacles, rng)
    intr = CameraIntrinsics.centered(width, height, focal)
    pose = CameraPose.from_body(START, Rotation.identity())
    image = render_depth(world, pose, intr, max_range)
    state = VehicleState(np.array(START), np.zeros(3), np.zeros(3))

    # warm-up compiles every kernel outside the timed region
    plan(state, GOAL, image, pose, config, np.random.default_rng(seed))

    cycles, sampled, result = [], [], None
    for k in range(repeats):
        result = plan(state, GOAL, image, pose, config, np.random.default_rng(seed + 1 + k))
        cycles.append(result.cycle_time)
        sampled.append(result.sampled)
    median = float(np.median(cycles))

    stage_us = _stage_latencies(state, image, pose, config, np.random.default_rng(seed))
    return {
        "frame": {"width": width, "height": height, "focal": focal, "obstacles": obstacles, "max_range": max_range},
        "budget": budget,
        "repeats": repeats,
        "cycle_ms": {
            "median": 1e3 * median,
            "mean": 1e3 * float(np.mean(cycles)),
            "min": 1e3 * float(np.min(cycles)),
            "max": 1e3 * float(np.max(cycles)),
        },
        "sampled_per_cycle": float(np.mean(sampled)),
        "candidates_per_frame": float(np.mean(sampled)) * FRAME_BUDGET_S / median if median > 0 else math.inf,
        "frame_budget_ms": 1e3 * FRAME_BUDGET_S,
        "last_cycle": {"counters": result.counters, "stage_calls": result.stage_calls, "pyramids": result.pyramids},
        "stage_us": stage_us,
        "host": {"machine": platform.machine(), "python": platform.python_version()},
    }


def _stage_latencies(state, image, pose, config: PlannerConfig, rng) -> dict:
    """Mean microseconds per call of every stage, each run over the whole candidate batch."""
    n = config.budget
    t0 = time.perf_counter()
    cand = build_candidates(state, GOAL, image.intrinsics, pose, config, rng, n)
    t_setup = time.perf_counter() - t0

    lim = config.limits
    g = np.array([0.0, 0.0, GRAVITY])
    verdicts = np.empty(n, dtype=np.int64)
    admissible = np.empty(n, dtype=np.bool_)
    feas_args = (g, lim.f_min / lim.mass, lim.f_max / lim.mass, lim.omega_max, config.dt_min)
    # compile both batch kernels on a single candidate before timing them
    _kernels.feasibility_batch(cand.coeffs[:1], cand.durations[:1], *feas_args, verdicts[:1])
    _kernels.velocity_batch(cand.coeffs[:1], cand.durations[:1], config.v_max, admissible[:1])
    t0 = time.perf_counter()
    _kernels.feasibility_batch(cand.coeffs, cand.durations, *feas_args, verdicts)
    t_feas = time.perf_counter() - t0

    t0 = time.perf_counter()
    _kernels.velocity_batch(cand.coeffs, cand.durations, config.v_max, admissible)
    t_vel = time.perf_counter() - t0

    model = FreeSpaceModel(image, config.radius, config.near_limit, max_pyramids=config.max_pyramids)
    R_cw = pose.camera_from_world
    origin = R_cw @ pose.position
    cam = np.einsum("ij,njk->nik", R_cw, cand.coeffs)
    cam[:, :, 0] -= origin
    free = 0
    t0 = time.perf_counter()
    for k in range(n):
        free += coefficients_collision_free(model, cam[k], float(cand.durations[k]))
    t_col = time.perf_counter() - t0
    return {
        "sampling": 1e6 * t_setup / n,
        "input_feasibility": 1e6 * t_feas / n,
        "velocity_admissibility": 1e6 * t_vel / n,
        "collision": 1e6 * t_col / n,
        "collision_free_fraction": free / n,
        "pyramids": len(model),
    }
