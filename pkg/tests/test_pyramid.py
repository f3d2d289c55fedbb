
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial import cKDTree

from conftest import blob_image
from pyramid_planner.geometry import CameraIntrinsics, CameraPose, DepthImage, Rotation, project
from pyramid_planner.planner import PlannerConfig, VehicleState, build_candidates
from pyramid_planner.pyramid import (
    FreeSpaceModel,
    OutOfFrustum,
    Pyramid,
    PyramidNotFound,
    StartOutsidePyramid,
    Verdict,
    coefficients_collision_free,
    first_exit_time,
    inflate_pyramid,
    point_in_shrunk,
    trajectory_collision_free,
)
from pyramid_planner.sim.render import render_depth
from pyramid_planner.sim.world import World, make_forest
from pyramid_planner.trajectory import make_primitive

ZERO = np.zeros(3)


@pytest.fixture
def free_model(intr100):
    return FreeSpaceModel(DepthImage.uniform(intr100, 10.0), 0.6, 10.0)


def corner_ray_contains(pyr: Pyramid, intr, p, tol=1e-9) -> bool:
    """Independent containment test built from the rectangle's corner rays."""
    u0, u1, v0, v1 = pyr.rect
    corners = [np.array([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0]) for u, v in ((u0, v0), (u1, v0), (u1, v1), (u0, v1))]
    inside_dir = sum(corners) / 4.0
    for a, b in zip(corners, corners[1:] + corners[:1]):
        n = np.cross(a, b)
        n /= np.linalg.norm(n)
        if n @ inside_dir < 0:
            n = -n
        if n @ p < pyr.radius - tol:
            return False
    return -tol <= p[2] <= pyr.shrunk_base_depth + tol


def rect_pixels(pyr: Pyramid, image: DepthImage) -> np.ndarray:
    j0, j1, i0, i1 = pyr.pixels
    return image.depths[i0 : i1 + 1, j0 : j1 + 1]


class TestInflate:
    def test_obstacle_free_image_gives_the_whole_frame(self, free_model):
        pyr = inflate_pyramid(free_model, (0.0, 0.0, 5.0))
        assert pyr.pixels == (0, 99, 0, 99)
        assert pyr.rect == (-0.5, 99.5, -0.5, 99.5)
        assert pyr.base_depth == 10.0
        assert pyr.shrunk_base_depth == pytest.approx(9.4)
        assert point_in_shrunk(pyr, (0.0, 0.0, 5.0))

    def test_query_beyond_the_shrunk_base(self, free_model):
        with pytest.raises(PyramidNotFound):
            inflate_pyramid(free_model, (0.0, 0.0, 9.8))

    def test_query_outside_the_image(self, free_model):
        with pytest.raises(OutOfFrustum):
            inflate_pyramid(free_model, (50.0, 0.0, 5.0))
        with pytest.raises(OutOfFrustum):
            inflate_pyramid(free_model, (0.0, 0.0, -1.0))

    def test_side_corridor_excludes_the_blob(self, intr100):
        image = blob_image(intr100)
        model = FreeSpaceModel(image, 0.6, 10.0)
        query = np.array([1.5, 0.0, 5.0])  # projects to pixel (80, 50), right of the blob
        pyr = inflate_pyramid(model, query)
        # exhaustive scan oracle over the rectangle
        assert rect_pixels(pyr, image).min() >= pyr.base_depth
        j0, j1, i0, i1 = pyr.pixels
        overlaps_blob = j0 < 60 and j1 >= 40 and i0 < 60 and i1 >= 40
        assert not overlaps_blob
        assert point_in_shrunk(pyr, query)

    def test_maximal_per_side(self, intr100):
        image = blob_image(intr100)
        model = FreeSpaceModel(image, 0.6, 10.0)
        pyr = inflate_pyramid(model, (1.5, 0.0, 5.0))
        j0, j1, i0, i1 = pyr.pixels
        d = image.depths
        # every side is on the border or blocked by a pixel shallower than the base
        assert j1 == 99 or d[i0 : i1 + 1, j1 + 1].min() < pyr.base_depth
        assert j0 == 0 or d[i0 : i1 + 1, j0 - 1].min() < pyr.base_depth
        assert i1 == 99 or d[i1 + 1, j0 : j1 + 1].min() < pyr.base_depth
        assert i0 == 0 or d[i0 - 1, j0 : j1 + 1].min() < pyr.base_depth

    @given(
        st.lists(
            st.tuples(st.integers(0, 79), st.integers(0, 59), st.integers(1, 30), st.integers(1, 30), st.floats(1.0, 9.0)),
            max_size=6,
        ),
        st.floats(5, 75),
        st.floats(5, 55),
        st.floats(0.5, 9.0),
    )
    def test_postconditions_on_random_scenes(self, boxes, u, v, z):
        intr = CameraIntrinsics.centered(80, 60, 60.0)
        d = np.full((60, 80), 10.0)
        for j, i, w, h, depth in boxes:
            d[i : i + h, j : j + w] = np.minimum(d[i : i + h, j : j + w], depth)
        image = DepthImage(intr, d, 10.0)
        model = FreeSpaceModel(image, 0.6, 2.0)
        q = np.array([(u - intr.cx) / intr.fx * z, (v - intr.cy) / intr.fy * z, z])
        try:
            pyr = inflate_pyramid(model, q)
        except PyramidNotFound:
            return
        assert rect_pixels(pyr, image).min() >= pyr.base_depth
        assert pyr.base_depth <= image.max_range
        assert point_in_shrunk(pyr, q)
        assert corner_ray_contains(pyr, intr, q, tol=1e-7)


class TestPointInShrunk:
    def test_foremost_point_is_on_the_boundary(self, free_model):
        pyr = inflate_pyramid(free_model, (0.0, 0.0, 5.0))
        apex = pyr.shrunk_apex
        assert point_in_shrunk(pyr, apex)
        assert not point_in_shrunk(pyr, apex - np.array([0.0, 0.0, 1e-6]))

    def test_beyond_base(self, free_model):
        pyr = inflate_pyramid(free_model, (0.0, 0.0, 5.0))
        assert point_in_shrunk(pyr, (0.0, 0.0, pyr.shrunk_base_depth))
        assert not point_in_shrunk(pyr, (0.0, 0.0, pyr.shrunk_base_depth + 1e-6))

    def test_camera_centre_is_outside_a_shrunk_pyramid(self, free_model):
        pyr = inflate_pyramid(free_model, (0.0, 0.0, 5.0))
        assert not point_in_shrunk(pyr, ZERO)

    def test_agrees_with_corner_ray_oracle(self, intr100, rng):
        image = blob_image(intr100)
        pyr = inflate_pyramid(FreeSpaceModel(image, 0.6, 10.0), (1.5, 0.0, 5.0))
        pts = rng.uniform([-6, -6, -1], [6, 6, 11], size=(1000, 3))
        for p in pts:
            assert point_in_shrunk(pyr, p) == corner_ray_contains(pyr, intr100, p)

    def test_shrunk_points_keep_the_radius_from_expanded_faces(self, intr100, rng):
        image = blob_image(intr100)
        pyr = inflate_pyramid(FreeSpaceModel(image, 0.6, 10.0), (1.5, 0.0, 5.0))
        inside = 0
        while inside < 1000:
            p = rng.uniform([-10, -10, 0], [10, 10, 10])
            if not point_in_shrunk(pyr, p):
                continue
            inside += 1
            # expanded lateral faces pass through the camera centre with the same normals
            assert np.min(pyr.normals @ p) >= pyr.radius - 1e-9
            assert pyr.base_depth - p[2] >= pyr.radius - 1e-9

    @given(st.floats(0.05, 1.0), st.floats(0.0, 1.0))
    def test_smaller_radius_only_grows_the_region(self, r, shrink):
        intr = CameraIntrinsics.centered(100, 100, 100.0)
        image = blob_image(intr)
        big = Pyramid.from_pixels(image, 60, 99, 20, 80, 10.0, r)
        small = Pyramid.from_pixels(image, 60, 99, 20, 80, 10.0, r * shrink)
        rng = np.random.default_rng(int(r * 1e6))
        for p in rng.uniform([-2, -6, 0], [12, 6, 11], size=(200, 3)):
            if point_in_shrunk(big, p):
                assert point_in_shrunk(small, p)


def bisection_exit(z_of_t, level, T, n=1_000_001):
    ts = np.linspace(0.0, T, n)
    z = z_of_t(ts)
    k = int(np.argmax(z > level))
    lo, hi = ts[k - 1], ts[k]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if z_of_t(np.array([mid]))[0] > level:
            hi = mid
        else:
            lo = mid
    return lo


class TestFirstExitTime:
    def test_stationary_never_exits(self, free_model):
        pyr = inflate_pyramid(free_model, (0.0, 0.0, 5.0))
        p = make_primitive((0, 0, 5), ZERO, ZERO, (0, 0, 5), 3.0, frame="camera")
        assert first_exit_time(p, pyr) is None

    def test_straight_through_the_base(self, free_model):
        pyr = inflate_pyramid(free_model, (0.0, 0.0, 5.0))
        p = make_primitive((0, 0, 5), ZERO, ZERO, (0, 0, 12), 2.0, frame="camera")
        t = first_exit_time(p, pyr)
        want = bisection_exit(lambda ts: p.sample(ts)[0][:, 2], pyr.shrunk_base_depth, p.T)
        assert t == pytest.approx(want, abs=2e-6)
        assert t <= want + 1e-12
        assert point_in_shrunk(pyr, p.evaluate(t)[0])

    def test_staying_inside_never_exits(self, intr100):
        image = blob_image(intr100)
        pyr = inflate_pyramid(FreeSpaceModel(image, 0.6, 10.0), (1.5, 0.0, 5.0))
        p = make_primitive((1.5, 0.0, 5.0), (0.3, 0.1, 0.2), ZERO, (1.9, 0.2, 6.0), 2.0, frame="camera")
        assert first_exit_time(p, pyr) is None
        pts = p.sample(np.linspace(0, p.T, 10_000))[0]
        assert all(point_in_shrunk(pyr, q) for q in pts)

    def test_start_outside_is_an_error(self, free_model):
        pyr = inflate_pyramid(free_model, (0.0, 0.0, 5.0))
        p = make_primitive((0, 0, 9.9), ZERO, ZERO, (0, 0, 5), 1.0, frame="camera")
        with pytest.raises(StartOutsidePyramid):
            first_exit_time(p, pyr)

    def test_lateral_exit_matches_sampling(self, intr100, rng):
        image = blob_image(intr100)
        pyr = inflate_pyramid(FreeSpaceModel(image, 0.6, 10.0), (1.5, 0.0, 5.0))
        for _ in range(50):
            end = rng.uniform([-3, -3, 2], [4, 3, 12])
            p = make_primitive((1.5, 0.0, 5.0), rng.uniform(-1, 1, 3), ZERO, end, rng.uniform(0.5, 3), frame="camera")
            t = first_exit_time(p, pyr)
            ts = np.linspace(0, p.T, 20_001)
            inside = np.array([point_in_shrunk(pyr, q) for q in p.sample(ts)[0]])
            if t is None:
                assert inside.all()
            else:
                assert inside[ts <= t].all()
                assert not inside[ts > t + 1e-5].all()


def forward_world(wall_x=None):
    cyl = [] if wall_x is None else [(wall_x + 100.0, 0.0, 100.0, 20.0)]
    return World(np.array(cyl).reshape(-1, 4), 0.0, (-500, 500, -500, 500))


class TestCollisionFree:
    def test_free_space_inside_the_near_field(self, intr100):
        model = FreeSpaceModel(DepthImage.uniform(intr100, 10.0), 0.6, 2.0)
        p = make_primitive(ZERO, ZERO, ZERO, (0.3, 0.2, 1.5), 2.0, frame="camera")
        assert trajectory_collision_free(model, p) is Verdict.COLLISION_FREE

    def test_free_space_beyond_the_near_field(self, intr100):
        model = FreeSpaceModel(DepthImage.uniform(intr100, 10.0), 0.6, 2.0)
        p = make_primitive(ZERO, (0.0, 0.0, 1.0), ZERO, (0.5, 0.3, 6.0), 3.0, frame="camera")
        assert trajectory_collision_free(model, p) is Verdict.COLLISION_FREE

    def test_endpoint_behind_a_wall(self):
        world = forward_world(wall_x=3.0)
        pose = CameraPose.from_body((0.0, 0.0, 1.5), Rotation.identity())
        intr = CameraIntrinsics.centered(160, 120, 70.0)
        image = render_depth(world, pose, intr, 10.0)
        model = FreeSpaceModel(image, 0.6, 2.0)
        p_world = make_primitive((0.0, 0.0, 1.5), ZERO, ZERO, (4.5, 0.3, 1.5), 3.0)
        p_cam = p_world.transformed(pose.camera_from_world, pose.position, "camera")
        assert trajectory_collision_free(model, p_cam) is Verdict.IN_COLLISION
        # ground truth: the path really comes closer than the radius
        clear = world.clearance(p_world.sample(np.linspace(0, 3.0, 2001))[0])
        assert clear.min() < 0.6

    def test_leaving_the_view_beyond_the_near_field(self, intr100):
        model = FreeSpaceModel(DepthImage.uniform(intr100, 10.0), 0.6, 2.0)
        end = np.array([5.0, 0.0, 3.0])
        assert project(end, intr100)[0] > 100
        p = make_primitive(ZERO, ZERO, ZERO, end, 3.0, frame="camera")
        assert trajectory_collision_free(model, p) is Verdict.IN_COLLISION

    def test_behind_the_camera_beyond_the_near_field(self, intr100):
        model = FreeSpaceModel(DepthImage.uniform(intr100, 10.0), 0.6, 2.0)
        p = make_primitive(ZERO, ZERO, ZERO, (0.0, 0.0, -3.0), 3.0, frame="camera")
        assert trajectory_collision_free(model, p) is Verdict.IN_COLLISION

    def test_pyramids_are_cached(self, intr100):
        model = FreeSpaceModel(DepthImage.uniform(intr100, 10.0), 0.6, 2.0)
        p = make_primitive(ZERO, (0.0, 0.0, 1.0), ZERO, (0.5, 0.3, 6.0), 3.0, frame="camera")
        trajectory_collision_free(model, p)
        n = len(model)
        assert n >= 1
        assert trajectory_collision_free(model, p) is Verdict.COLLISION_FREE
        assert len(model) == n
        assert model.containing((0.5, 0.3, 6.0))

    def test_dump_jsonl(self, intr100, tmp_path):
        import json

        model = FreeSpaceModel(DepthImage.uniform(intr100, 10.0), 0.6, 2.0)
        model.add(inflate_pyramid(model, (0.0, 0.0, 5.0)))
        path = tmp_path / "p.jsonl"
        with open(path, "w") as fh:
            model.dump_jsonl(fh, frame=3)
        rec = json.loads(path.read_text().splitlines()[0])
        assert rec["frame"] == 3 and rec["base_depth"] == 10.0 and len(rec["rect"]) == 4 and rec["apex"] == [0.0, 0.0, 0.0]


def forest_candidates(seed, n=200, radius=0.6):
    rng = np.random.default_rng(seed)
    world = make_forest(rng, 0.08, (3, 27, -12, 12), keepout=[(0.0, 0.0, 2.5)])
    pose = CameraPose.from_body((0.0, 0.0, 1.5), Rotation.identity())
    intr = CameraIntrinsics.centered(160, 120, 70.0)
    image = render_depth(world, pose, intr, 10.0)
    state = VehicleState((0.0, 0.0, 1.5), (1.0, 0.0, 0.0), ZERO)
    cand = build_candidates(state, (30.0, 0.0, 1.5), intr, pose, PlannerConfig(radius=radius), rng, n)
    R = pose.camera_from_world
    cam = np.einsum("ij,njk->nik", R, cand.coeffs)
    cam[:, :, 0] -= R @ pose.position
    return image, cam, cand.durations


def verdicts(image, cam, durations, radius):
    model = FreeSpaceModel(image, radius, 2.0)
    out = [coefficients_collision_free(model, cam[k], float(durations[k])) for k in range(len(durations))]
    return np.array(out), model


class TestCollisionProperties:
    @pytest.mark.parametrize("seed", range(5))
    def test_soundness_against_the_image(self, seed):
        """Every collision-free primitive keeps the radius from every back-projected pixel."""
        image, cam, durations = forest_candidates(seed)
        free, _ = verdicts(image, cam, durations, 0.6)
        assert free.any()
        tree = cKDTree(image.points())
        ts = np.linspace(0.0, 1.0, 10_000)
        for k in np.nonzero(free)[0]:
            t = ts * durations[k]
            pts = np.stack([np.polynomial.polynomial.polyval(t, cam[k, ax]) for ax in range(3)], axis=1)
            d, _ = tree.query(pts)
            assert d.min() >= 0.6 - 1e-9

    def test_reuse_is_deterministic(self):
        image, cam, durations = forest_candidates(7)
        a, ma = verdicts(image, cam, durations, 0.6)
        b, mb = verdicts(image, cam, durations, 0.6)
        np.testing.assert_array_equal(a, b)
        assert len(ma) == len(mb)
        n = len(ma)
        np.testing.assert_array_equal(ma._rect[:n], mb._rect[:n])
        np.testing.assert_array_equal(ma._base[:n], mb._base[:n])

    def test_monotone_in_radius_in_free_space(self, intr100, rng):
        image = DepthImage.uniform(intr100, 10.0)
        for _ in range(100):
            end = rng.uniform([-2, -2, 1], [2, 2, 8])
            p = make_primitive(ZERO, rng.uniform(-0.5, 0.5, 3) + (0, 0, 0.5), ZERO, end, rng.uniform(1, 4), frame="camera")
            if trajectory_collision_free(FreeSpaceModel(image, 0.6, 2.0), p) is Verdict.COLLISION_FREE:
                assert trajectory_collision_free(FreeSpaceModel(image, 0.3, 2.0), p) is Verdict.COLLISION_FREE

    def test_monotone_in_radius_on_forest_frames(self):
        # greedy growth is not provably monotone in r; this freezes the behaviour on fixed frames
        flips = 0
        for seed in range(10):
            image, cam, durations = forest_candidates(seed, n=300)
            hi, _ = verdicts(image, cam, durations, 0.6)
            lo, _ = verdicts(image, cam, durations, 0.4)
            flips += int(np.count_nonzero(hi & ~lo))
        assert flips == 0

    def test_near_ball_radius(self, intr100):
        model = FreeSpaceModel(DepthImage.uniform(intr100, 1.5, 10.0), 0.6, 2.0)
        # the nearest pixel lies straight ahead at 1.5 m; the near field ends at 2 m
        assert model.ball_radius(ZERO) == pytest.approx(0.9)
        assert model.ball_radius((0, 0, 0.5)) == pytest.approx(0.4)
        assert model.ball_radius((0, 0, -1.9)) == pytest.approx(0.1)
        assert model.ball_radius((0, 0, 3.0)) <= 0.0
