"""Receding-horizon candidate sampling and selection.

Each depth frame triggers one planning cycle.  Candidates are drawn in the image
(endpoint pixel and depth, plus a duration), scored with the progress-rate
utility and pushed through the constraint checks in a fixed order:

    better than the best known -> input feasible -> velocity admissible -> collision free

A stage runs only when every earlier stage passed.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import CameraIntrinsics, CameraPose, DepthImage, Rotation, back_project
from .pyramid import FreeSpaceModel, coefficients_collision_free
from .trajectory import (
    GRAVITY,
    FeasibilityLimits,
    NonPositiveDuration,
    QuinticPrimitive,
    boundary_coefficients,
)


class DegenerateDirection(ValueError):
    pass


class NonPositiveMass(ValueError):
    pass


class Status(enum.Enum):
    COLLISION_FREE = "collision_free"
    IN_COLLISION = "in_collision"
    VELOCITY_INADMISSIBLE = "velocity_inadmissible"
    INPUT_INFEASIBLE = "input_infeasible"
    HIGHER_COST = "higher_cost"


STATUS_ORDER = tuple(Status)


@dataclass(frozen=True)
class CandidateVerdict:
    status: Status
    utility: float


@dataclass
class VehicleState:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    attitude: Rotation = field(default_factory=Rotation)
    yaw: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        for name in ("position", "velocity", "acceleration"):
            arr = np.array(getattr(self, name), dtype=float).reshape(3)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            setattr(self, name, arr)


@dataclass
class PlannerConfig:
    v_max: float = 3.0
    radius: float = 0.6
    fov_margins: tuple[float, float] = (0.1, 0.9)
    depth_range: tuple[float, float] = (1.5, 8.0)
    duration_range: tuple[float, float] = (1.0, 4.0)
    budget: int = 2000
    deadline_ms: float | None = None
    goal_radius: float = 1.0
    near_limit: float = 2.0
    limits: FeasibilityLimits = field(default_factory=FeasibilityLimits)
    dt_min: float = 0.02
    max_pyramids: int = 8

    def __post_init__(self):
        m0, m1 = self.fov_margins
        if not (0.0 < m0 <= m1 < 1.0):
            raise ValueError("fov margins must satisfy 0 < low <= high < 1")
        d0, d1 = self.depth_range
        if not (0.0 < d0 <= d1):
            raise ValueError("depth range must be positive and ordered")
        t0, t1 = self.duration_range
        if not (0.0 < t0 <= t1):
            raise ValueError("duration range must be positive and ordered")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        if not (self.v_max > 0 and self.radius > 0 and self.goal_radius > 0 and self.near_limit > 0):
            raise ValueError("v_max, radius, goal_radius and near_limit must be positive")
        if self.max_pyramids < 1:
            raise ValueError("max_pyramids must be at least 1")


@dataclass
class PlanResult:
    best: QuinticPrimitive | None
    best_utility: float
    counters: dict[str, int]
    stage_calls: dict[str, int]
    cycle_time: float
    pyramids: int = 0
    trace: list[tuple[int, Status, tuple[str, ...]]] | None = None
    free: list[tuple[QuinticPrimitive, QuinticPrimitive]] | None = None

    @property
    def sampled(self) -> int:
        return sum(self.counters.values())


# -- candidate generation ------------------------------------------------------


def sample_endpoint(rng: np.random.Generator, intr: CameraIntrinsics, config: PlannerConfig) -> np.ndarray:
    """One endpoint in the camera frame, drawn inside the configured field-of-view margins."""
    m0, m1 = config.fov_margins
    u = rng.uniform(m0 * intr.width, m1 * intr.width)
    v = rng.uniform(m0 * intr.height, m1 * intr.height)
    d = rng.uniform(*config.depth_range)
    return back_project(u, v, d, intr)


def sample_candidates(rng: np.random.Generator, intr: CameraIntrinsics, config: PlannerConfig, n: int):
    """Batch draw of ``n`` camera-frame endpoints and durations."""
    m0, m1 = config.fov_margins
    u = rng.uniform(m0 * intr.width, m1 * intr.width, n)
    v = rng.uniform(m0 * intr.height, m1 * intr.height, n)
    d = rng.uniform(*config.depth_range, n)
    T = rng.uniform(*config.duration_range, n)
    pts = np.column_stack([(u - intr.cx) / intr.fx * d, (v - intr.cy) / intr.fy * d, d])
    return pts, T


def utility(s_t, endpoint, goal, t: float) -> float:
    """Average rate at which the primitive closes the distance to the goal."""
    if not t > 0:
        raise NonPositiveDuration(f"duration must be positive, got {t}")
    s_t, endpoint, goal = (np.asarray(x, dtype=float) for x in (s_t, endpoint, goal))
    return float((np.linalg.norm(s_t - goal) - np.linalg.norm(endpoint - goal)) / t)


def yaw_command(s, s_goal) -> float:
    dx = float(s_goal[0] - s[0])
    dy = float(s_goal[1] - s[1])
    if math.hypot(dx, dy) < 1e-9:
        raise DegenerateDirection("goal is directly above or below the vehicle")
    return math.atan2(dy, dx)


def acceleration_estimate(c: float, attitude: Rotation, m: float) -> np.ndarray:
    """Acceleration implied by the last collective thrust command (world z up)."""
    if not m > 0:
        raise NonPositiveMass(f"mass must be positive, got {m}")
    if c < 0:
        raise ValueError(f"thrust command must be non-negative, got {c}")
    return c * attitude.z_axis / m - np.array([0.0, 0.0, GRAVITY])


def goal_reached(s, goal, config: PlannerConfig) -> bool:
    return float(np.linalg.norm(np.asarray(s, dtype=float) - np.asarray(goal, dtype=float))) < config.goal_radius


def reference_utility(reference: QuinticPrimitive | None, elapsed: float, goal) -> float:
    """Utility of what is left of the reference, measured from its own position at ``elapsed``."""
    if reference is None:
        return -math.inf
    remaining = reference.T - elapsed
    if remaining <= 1e-6:
        return -math.inf
    pos = reference.evaluate(min(max(elapsed, 0.0), reference.T))[0]
    return utility(pos, reference.end_position, goal, remaining)


@dataclass
class CandidateSet:
    """A batch of sampled primitives in the world frame, with their utilities."""

    durations: np.ndarray
    utils: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    coeffs: np.ndarray  # (n, 3, 6) ascending power-basis coefficients


def build_candidates(
    state: VehicleState,
    goal,
    intr: CameraIntrinsics,
    camera: CameraPose,
    config: PlannerConfig,
    rng: np.random.Generator,
    n: int,
) -> CandidateSet:
    """Sample ``n`` endpoints and durations and build every primitive from ``state``."""
    goal = np.asarray(goal, dtype=float)
    pts_cam, durations = sample_candidates(rng, intr, config, n)
    ends = camera.to_world(pts_cam)
    s0, v0, a0 = state.position, state.velocity, state.acceleration
    dist_now = float(np.linalg.norm(s0 - goal))
    utils = (dist_now - np.linalg.norm(ends - goal, axis=1)) / durations
    alpha, beta, gamma = boundary_coefficients(s0, v0, a0, ends, durations[:, None])
    coeffs = np.empty((n, 3, 6))
    coeffs[:, :, 0] = s0
    coeffs[:, :, 1] = v0
    coeffs[:, :, 2] = a0 / 2.0
    coeffs[:, :, 3] = gamma / 6.0
    coeffs[:, :, 4] = beta / 24.0
    coeffs[:, :, 5] = alpha / 120.0
    return CandidateSet(durations, utils, alpha, beta, gamma, coeffs)


# -- the planning cycle ----------------------------------------------------------

# candidates screened per compiled call between deadline checks
_CHUNK = 64
_COLLISION_FREE = 4
_IN_COLLISION = 5
_COLLISION_BIT = 4
_STATUS_OF_CODE = {
    _kernels.HIGHER_COST: Status.HIGHER_COST,
    _kernels.INPUT_INFEASIBLE: Status.INPUT_INFEASIBLE,
    _kernels.VELOCITY_INADMISSIBLE: Status.VELOCITY_INADMISSIBLE,
    _COLLISION_FREE: Status.COLLISION_FREE,
    _IN_COLLISION: Status.IN_COLLISION,
}
_STAGE_BITS = {1: "input_feasibility", 2: "velocity_admissibility", _COLLISION_BIT: "collision"}


def plan(
    state: VehicleState,
    goal,
    image: DepthImage,
    camera: CameraPose,
    config: PlannerConfig,
    rng: np.random.Generator,
    current_best_utility: float = -math.inf,
    instrument: bool = False,
    collect_free: bool = False,
) -> PlanResult:
    """One planning cycle on a fresh depth frame.

    ``instrument`` records which stages ran for every candidate; ``collect_free``
    keeps each primitive declared collision free as a (world, camera) pair.
    """
    start = time.perf_counter()
    goal = np.asarray(goal, dtype=float)
    counters = {s.value: 0 for s in STATUS_ORDER}
    calls = {"input_feasibility": 0, "velocity_admissibility": 0, "collision": 0}
    trace: list | None = [] if instrument else None
    free: list | None = [] if collect_free else None
    n = config.budget
    model = FreeSpaceModel(image, config.radius, config.near_limit, max_pyramids=config.max_pyramids)
    if n == 0:
        return PlanResult(None, current_best_utility, counters, calls, time.perf_counter() - start, 0, trace, free)

    cand = build_candidates(state, goal, image.intrinsics, camera, config, rng, n)
    durations, utils, coeffs = cand.durations, cand.utils, cand.coeffs
    alpha, beta, gamma = cand.alpha, cand.beta, cand.gamma
    s0, v0, a0 = state.position, state.velocity, state.acceleration
    lim = config.limits
    a_min, a_max = lim.f_min / lim.mass, lim.f_max / lim.mass
    g_vec = np.array([0.0, 0.0, GRAVITY])
    R_cw = camera.camera_from_world
    deadline = None if config.deadline_ms is None else start + config.deadline_ms / 1000.0

    best = current_best_utility
    best_idx = -1
    status = np.full(n, _kernels.HIGHER_COST, dtype=np.int64)
    stages = np.zeros(n, dtype=np.int64)
    origin_cam = R_cw @ camera.position
    sampled = n
    j = 0
    while j < n:
        if deadline is not None and time.perf_counter() > deadline:
            sampled = j
            break
        stop = min(n, j + _CHUNK)
        k = _kernels.walk(
            coeffs, durations, utils, j, stop, best, g_vec, a_min, a_max, lim.omega_max, config.dt_min, config.v_max,
            status, stages,
        )
        if k == stop:
            j = stop
            continue
        stages[k] |= _COLLISION_BIT
        C_cam = R_cw @ coeffs[k]
        C_cam[:, 0] -= origin_cam
        if coefficients_collision_free(model, C_cam, float(durations[k])):
            status[k] = _COLLISION_FREE
            best = float(utils[k])
            best_idx = k
            if free is not None:
                prim = QuinticPrimitive(s0, v0, a0, alpha[k], beta[k], gamma[k], float(durations[k]))
                free.append((prim, prim.transformed(R_cw, camera.position, "camera")))
        else:
            status[k] = _IN_COLLISION
        j = k + 1

    codes = status[:sampled]
    for code, st in _STATUS_OF_CODE.items():
        counters[st.value] = int(np.count_nonzero(codes == code))
    mask = stages[:sampled]
    for bit, name in _STAGE_BITS.items():
        calls[name] = int(np.count_nonzero(mask & bit))
    if trace is not None:
        names = list(_STAGE_BITS.items())
        for idx in range(sampled):
            m = int(mask[idx])
            trace.append((idx, _STATUS_OF_CODE[int(codes[idx])], tuple(nm for bit, nm in names if m & bit)))
    best_prim = None
    if best_idx >= 0:
        best_prim = QuinticPrimitive(
            s0.copy(), v0.copy(), a0.copy(), alpha[best_idx], beta[best_idx], gamma[best_idx], float(durations[best_idx])
        )
    return PlanResult(best_prim, best, counters, calls, time.perf_counter() - start, len(model), trace, free)
