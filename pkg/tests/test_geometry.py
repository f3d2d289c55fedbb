import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pyramid_planner.geometry import (
    AllCoefficientsZero,
    CameraIntrinsics,
    CameraPose,
    DepthImage,
    NonPositiveDepth,
    Rotation,
    back_project,
    project,
    read_pfm,
    solve_cubic,
    write_pfm,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
# zero or a magnitude in [1e-6, 1e3]: keeps every root and its powers inside the float range
coefficient = st.one_of(
    st.just(0.0),
    st.floats(1e-6, 1e3).flatmap(lambda m: st.sampled_from([m, -m])),
)


class TestProject:
    def test_optical_axis_hits_principal_point(self, intr100):
        assert project((0.0, 0.0, 2.0), intr100) == (50.0, 50.0)

    def test_lateral_offset(self, intr100):
        assert project((1.0, 0.0, 2.0), intr100) == (100.0, 50.0)

    def test_hand_computed_vga_example(self):
        intr = CameraIntrinsics(386.0, 386.0, 320.0, 240.0, 640, 480)
        u, v = project((0.3, -0.4, 1.5), intr)
        # 386 * 0.2 + 320 and 386 * (-0.4 / 1.5) + 240
        assert u == pytest.approx(397.2, abs=1e-9)
        assert v == pytest.approx(240.0 - 386.0 * 0.4 / 1.5, abs=1e-9)
        assert round(v, 2) == 137.07

    @pytest.mark.parametrize("z", [0.0, -1.0])
    def test_rejects_points_not_in_front(self, intr100, z):
        with pytest.raises(NonPositiveDepth):
            project((0.0, 0.0, z), intr100)


class TestBackProject:
    def test_principal_point(self, intr100):
        np.testing.assert_array_equal(back_project(50, 50, 3.0, intr100), [0.0, 0.0, 3.0])

    def test_inverse_of_projection_example(self, intr100):
        np.testing.assert_allclose(back_project(100, 50, 2.0, intr100), [1.0, 0.0, 2.0])

    def test_rejects_non_positive_depth(self, intr100):
        with pytest.raises(NonPositiveDepth):
            back_project(10, 10, 0.0, intr100)

    def test_roundtrip_over_random_in_frustum_points(self, rng):
        intr = CameraIntrinsics(386.0, 386.0, 320.0, 240.0, 640, 480)
        uv = rng.uniform([0, 0], [640, 480], size=(10_000, 2))
        d = rng.uniform(0.1, 20.0, 10_000)
        worst = 0.0
        for (u, v), z in zip(uv, d):
            p = back_project(u, v, z, intr)
            assert p[2] == z
            uu, vv = project(p, intr)
            worst = max(worst, abs(uu - u), abs(vv - v))
        assert worst < 1e-9

    @given(st.floats(0, 639), st.floats(0, 479), st.floats(0.05, 50))
    def test_roundtrip_property(self, u, v, d):
        intr = CameraIntrinsics(320.0, 300.0, 319.5, 239.5, 640, 480)
        uu, vv = project(back_project(u, v, d, intr), intr)
        assert abs(uu - u) < 1e-9 and abs(vv - v) < 1e-9


def _poly(coeffs, t):
    a3, a2, a1, a0 = coeffs
    return ((a3 * t + a2) * t + a1) * t + a0


class TestSolveCubic:
    def test_symmetric_cubic(self):
        np.testing.assert_allclose(solve_cubic(1, 0, -1, 0), [-1, 0, 1], atol=1e-12)

    def test_quadratic_fallback(self):
        np.testing.assert_allclose(solve_cubic(0, 1, -3, 2), [1, 2], atol=1e-12)

    def test_three_integer_roots(self):
        roots = solve_cubic(2, -4, -22, 24)
        np.testing.assert_allclose(roots, [-3, 1, 4], atol=1e-9)
        # evaluation oracle: the roots make the polynomial vanish
        assert all(abs(_poly((2, -4, -22, 24), r)) < 1e-9 for r in roots)

    def test_linear_fallback(self):
        assert solve_cubic(0, 0, 2, -1) == [0.5]

    def test_identically_zero_is_an_error(self):
        with pytest.raises(AllCoefficientsZero):
            solve_cubic(0, 0, 0, 0)

    def test_constant_has_no_roots(self):
        assert solve_cubic(0, 0, 0, 3) == []

    def test_random_coefficients_against_sign_changes(self, rng):
        """Residuals stay small and the count matches a dense sign-change scan."""
        grid = np.linspace(-10, 10, 10_001)
        mismatches = 0
        for _ in range(10_000):
            # roots drawn in the scan window keep the sign-change oracle meaningful
            r = rng.uniform(-9.5, 9.5, 3)
            a3 = rng.uniform(0.5, 3.0) * rng.choice([-1, 1])
            if rng.random() < 0.5:
                c = np.poly(r) * a3
            else:
                # one real root and a complex pair
                re, im = rng.uniform(-9, 9), rng.uniform(0.5, 3)
                c = np.real(np.poly([r[0], re + 1j * im, re - 1j * im])) * a3
            roots = solve_cubic(*c)
            scale = max(1.0, float(np.max(np.abs(c))))
            for t in roots:
                assert abs(_poly(c, t)) <= 1e-7 * scale * max(1.0, abs(t)) ** 3
            vals = _poly(c, grid)
            changes = int(np.count_nonzero(np.signbit(vals[1:]) != np.signbit(vals[:-1])))
            mismatches += changes != len(roots)
        # near-double roots can hide between grid points; they must stay rare
        assert mismatches <= 20

    def test_tiny_leading_coefficient_keeps_the_double_root(self):
        roots = solve_cubic(2.0087966704150378e-97, 1.0, 0.0, 0.0)
        assert len(roots) == 2
        assert roots[0] == pytest.approx(-1.0 / 2.0087966704150378e-97, rel=1e-12)
        assert roots[1] == 0.0

    def test_roots_beyond_float_range_are_dropped(self):
        assert all(math.isfinite(t) for t in solve_cubic(1e-300, 1e300, 1.0, 1.0))

    def test_dominant_root_does_not_spoil_small_ones(self):
        # roots 1e-4, 1 and 1e8
        c = np.poly([1e-4, 1.0, 1e8])
        np.testing.assert_allclose(solve_cubic(*c), [1e-4, 1.0, 1e8], rtol=1e-9)

    def test_double_root(self):
        np.testing.assert_allclose(solve_cubic(1, -4, 5, -2), [1, 2], rtol=1e-7)

    @given(coefficient, coefficient, coefficient, coefficient)
    def test_residual_property(self, a3, a2, a1, a0):
        if a3 == a2 == a1 == 0:
            return
        roots = solve_cubic(a3, a2, a1, a0)
        scale = max(1.0, abs(a3), abs(a2), abs(a1), abs(a0))
        for t in roots:
            # relative to the size of the largest term at t
            size = max(abs(a3 * t**3), abs(a2 * t * t), abs(a1 * t), abs(a0), 1.0)
            assert abs(_poly((a3, a2, a1, a0), t)) <= 1e-7 * max(scale, size)
        assert roots == sorted(roots)


class TestRotation:
    @given(st.floats(-math.pi, math.pi), st.floats(-1.5, 1.5), st.floats(-math.pi, math.pi), st.lists(finite, min_size=3, max_size=3))
    def test_preserves_norm(self, roll, pitch, yaw, v):
        R = Rotation.from_euler(roll, pitch, yaw)
        v = np.array(v)
        assert abs(np.linalg.norm(R.apply(v)) - np.linalg.norm(v)) <= 1e-12 * max(1.0, np.linalg.norm(v))

    def test_unit_norm(self):
        q = Rotation(2.0, 0.0, 0.0, 0.0)
        assert math.isclose(math.hypot(q.w, q.x, q.y, q.z), 1.0, abs_tol=1e-9)

    def test_matrix_roundtrip(self, rng):
        for _ in range(100):
            R = Rotation.from_euler(*rng.uniform(-3, 3, 3))
            np.testing.assert_allclose(Rotation.from_matrix(R.matrix).matrix, R.matrix, atol=1e-12)

    def test_yaw_and_inverse(self):
        R = Rotation.from_euler(0.0, 0.0, 0.7)
        assert R.yaw == pytest.approx(0.7)
        np.testing.assert_allclose((R * R.inv()).matrix, np.eye(3), atol=1e-12)

    def test_slerp_endpoints(self):
        a, b = Rotation.identity(), Rotation.from_euler(0.3, -0.2, 1.0)
        np.testing.assert_allclose(a.slerp(b, 0.0).matrix, a.matrix, atol=1e-12)
        np.testing.assert_allclose(a.slerp(b, 1.0).matrix, b.matrix, atol=1e-12)


class TestCameraPose:
    def test_level_camera_looks_forward(self):
        pose = CameraPose.from_body([1.0, 2.0, 3.0], Rotation.identity())
        # a point on the optical axis ahead of a level body lies along world +x
        np.testing.assert_allclose(pose.to_world([0.0, 0.0, 5.0]), [6.0, 2.0, 3.0])
        np.testing.assert_allclose(pose.to_camera([6.0, 2.0, 3.0]), [0.0, 0.0, 5.0], atol=1e-12)

    def test_image_right_is_body_right(self):
        pose = CameraPose.from_body(np.zeros(3), Rotation.identity())
        np.testing.assert_allclose(pose.to_world([1.0, 0.0, 0.0]), [0.0, -1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(pose.to_world([0.0, 1.0, 0.0]), [0.0, 0.0, -1.0], atol=1e-12)


class TestDepthImage:
    def test_shape_is_checked(self, intr100):
        with pytest.raises(ValueError):
            DepthImage(intr100, np.ones(99 * 100), 10.0)

    def test_depths_above_range_rejected(self, intr100):
        with pytest.raises(ValueError):
            DepthImage(intr100, np.full((100, 100), 11.0), 10.0)

    def test_intrinsics_invariants(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(100, 100, 0.0, 50, 100, 100)
        with pytest.raises(ValueError):
            CameraIntrinsics(-1, 100, 50, 50, 100, 100)

    def test_pfm_roundtrip(self, tmp_path, intr100, rng):
        d = rng.uniform(0.5, 10.0, (100, 100)).astype(np.float32).astype(float)
        img = DepthImage(intr100, d, 10.0)
        img.save_pfm(tmp_path / "d.pfm")
        back = DepthImage.load_pfm(tmp_path / "d.pfm", intr100, 10.0)
        np.testing.assert_array_equal(back.depths, img.depths)
        raw = (tmp_path / "d.pfm").read_bytes()
        assert raw.startswith(b"Pf\n100 100\n-1.0\n")

    def test_pfm_rejects_colour_files(self, tmp_path):
        p = tmp_path / "c.pfm"
        p.write_bytes(b"PF\n1 1\n-1.0\n" + b"\0" * 12)
        with pytest.raises(ValueError):
            read_pfm(p)

    def test_points_back_project_every_pixel(self, intr100):
        img = DepthImage.uniform(intr100, 4.0)
        pts = img.points()
        assert pts.shape == (100 * 100, 3)
        np.testing.assert_allclose(pts[:, 2], 4.0)
        np.testing.assert_allclose(pts[50 * 100 + 50], [0.0, 0.0, 4.0])

    def test_write_pfm_needs_2d(self, tmp_path):
        with pytest.raises(ValueError):
            write_pfm(tmp_path / "x.pfm", np.zeros(3))
