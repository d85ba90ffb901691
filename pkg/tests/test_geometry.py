import numpy as np
import pytest

from rgbdprop.geometry import (
    Intrinsics,
    Pose,
    backproject,
    backproject_map,
    project,
    project_points,
    rotation_to_gravity,
    round_half_away,
    warp_pixel,
)


def random_pose(rng) -> Pose:
    # random rotation via QR of a gaussian matrix, sign-fixed to det +1
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return Pose(q, rng.normal(scale=0.5, size=3))


K_UNIT = Intrinsics(fx=1.0, fy=1.0, cx=0.0, cy=0.0, width=10, height=10)
K_100 = Intrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=101, height=101)
K_VGA = Intrinsics(fx=525.0, fy=525.0, cx=319.5, cy=239.5, width=640, height=480)


def test_project_optical_axis():
    uv = project(K_UNIT, Pose.identity(), np.array([0.0, 0.0, 1.0]))
    assert np.allclose(uv, [0.0, 0.0])


def test_project_pinhole_formula():
    uv = project(K_100, Pose.identity(), np.array([1.0, 2.0, 2.0]))
    assert np.allclose(uv, [100.0, 150.0])


def test_project_behind_camera_is_none():
    assert project(K_100, Pose.identity(), np.array([0.0, 0.0, -1.0])) is None
    assert project(K_100, Pose.identity(), np.array([0.0, 0.0, 0.0])) is None


def test_backproject_principal_ray():
    xw = backproject(K_VGA, Pose.identity(), np.array([K_VGA.cx, K_VGA.cy]), 1.5)
    assert np.allclose(xw, [0.0, 0.0, 1.5])


def test_backproject_translated_pose():
    pose = Pose(np.eye(3), np.array([0.0, 0.0, -1.0]))
    xw = backproject(K_VGA, pose, np.array([K_VGA.cx, K_VGA.cy]), 1.0)
    assert np.allclose(xw, [0.0, 0.0, 2.0])


def test_backproject_rejects_missing_depth():
    with pytest.raises(ValueError):
        backproject(K_VGA, Pose.identity(), np.array([10.0, 10.0]), 0.0)
    with pytest.raises(ValueError):
        backproject(K_VGA, Pose.identity(), np.array([10.0, 10.0]), -0.5)


def test_roundtrip_pixel_depth_pose():
    # project(backproject(xc, z)) == xc for random pixels, depths and poses
    rng = np.random.default_rng(7)
    for _ in range(1000):
        pose = random_pose(rng)
        xc = rng.uniform([0, 0], [K_VGA.width - 1, K_VGA.height - 1])
        z = rng.uniform(0.2, 6.0)
        xw = backproject(K_VGA, pose, xc, z)
        uv = project(K_VGA, pose, xw)
        assert uv is not None
        assert np.max(np.abs(uv - xc)) < 1e-9


def test_roundtrip_world_point():
    # backproject(project(xw), camera depth) == xw
    rng = np.random.default_rng(8)
    for _ in range(500):
        pose = random_pose(rng)
        xw = pose.to_world(
            np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.3, 5)])
        )
        uv = project(K_VGA, pose, xw)
        assert uv is not None
        z = pose.to_camera(xw)[2]
        back = backproject(K_VGA, pose, uv, z)
        assert np.max(np.abs(back - xw)) < 1e-9


def test_project_points_matches_scalar():
    rng = np.random.default_rng(9)
    pose = random_pose(rng)
    pts = np.column_stack(
        [rng.uniform(-1, 1, 50), rng.uniform(-1, 1, 50), rng.uniform(0.5, 4, 50)]
    )
    pts = pose.to_world(pts)
    uv, z = project_points(K_VGA, pose, pts)
    for i in range(pts.shape[0]):
        single = project(K_VGA, pose, pts[i])
        assert single is not None
        assert np.allclose(uv[i], single, atol=1e-12)
        assert z[i] > 0


def test_backproject_map_matches_scalar():
    rng = np.random.default_rng(10)
    pose = random_pose(rng)
    depth = rng.uniform(0.5, 3.0, size=(12, 16))
    depth[3, 4] = 0.0  # missing
    K = Intrinsics(fx=30.0, fy=32.0, cx=7.5, cy=5.5, width=16, height=12)
    pts, valid = backproject_map(K, pose, depth)
    assert not valid[3, 4]
    for v in range(12):
        for u in range(16):
            if not valid[v, u]:
                continue
            ref = backproject(K, pose, np.array([u, v], dtype=float), depth[v, u])
            assert np.max(np.abs(pts[v, u] - ref)) < 1e-12


class TestRotationToGravity:
    def test_aligned_is_identity(self):
        assert np.array_equal(rotation_to_gravity([0.0, 1.0, 0.0]), np.eye(3))

    def test_antipodal(self):
        R = rotation_to_gravity([0.0, -1.0, 0.0])
        assert np.allclose(R @ np.array([0.0, -1.0, 0.0]), [0.0, 1.0, 0.0])
        assert np.allclose(R.T @ R, np.eye(3))
        assert np.isclose(np.linalg.det(R), 1.0)

    def test_x_axis_to_up(self):
        R = rotation_to_gravity([1.0, 0.0, 0.0])
        assert np.allclose(R @ np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)

    def test_random_normals(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            R = rotation_to_gravity(n)
            assert np.max(np.abs(R @ n - np.array([0.0, 1.0, 0.0]))) < 1e-9
            assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-9
            assert abs(np.linalg.det(R) - 1.0) < 1e-9

    def test_rejects_non_unit(self):
        with pytest.raises(ValueError):
            rotation_to_gravity([0.0, 2.0, 0.0])


class TestWarpPixel:
    def test_identity_warp(self):
        pose = Pose.identity()
        for uv in [(0, 0), (320, 240), (639, 479)]:
            res = warp_pixel(K_VGA, pose, pose, np.array(uv, dtype=float), 1.7)
            assert res is not None
            (u, v), z = res
            assert (u, v) == uv
            assert np.isclose(z, 1.7)

    def test_translation_shift(self):
        # camera pose translation of +0.1 m in x shifts a z=1 plane by fx*0.1 px
        K = Intrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)
        p_prev = Pose.identity()
        p_cur = Pose(np.eye(3), np.array([0.1, 0.0, 0.0]))
        res = warp_pixel(K, p_prev, p_cur, np.array([100.0, 200.0]), 1.0)
        assert res is not None
        (u, v), z = res
        # brute force through the projection chain
        xw = backproject(K, p_prev, np.array([100.0, 200.0]), 1.0)
        ref = project(K, p_cur, xw)
        assert (u, v) == tuple(int(c) for c in round_half_away(ref))
        assert (u - 100, v - 200) == (50, 0)
        assert np.isclose(z, 1.0)

    def test_out_of_image_is_none(self):
        p_prev = Pose.identity()
        p_cur = Pose(np.eye(3), np.array([5.0, 0.0, 0.0]))  # huge shift
        assert warp_pixel(K_VGA, p_prev, p_cur, np.array([630.0, 200.0]), 0.5) is None

    def test_behind_camera_is_none(self):
        p_cur = Pose(np.eye(3), np.array([0.0, 0.0, -3.0]))
        assert warp_pixel(K_VGA, Pose.identity(), p_cur, np.array([320.0, 240.0]), 1.0) is None


def test_round_half_away():
    vals = np.array([0.5, 1.5, -0.5, -1.5, 0.49, -0.49, 2.0])
    assert np.array_equal(round_half_away(vals), [1.0, 2.0, -1.0, -2.0, 0.0, -0.0, 2.0])


def test_pose_validation():
    with pytest.raises(ValueError):
        Pose(np.eye(3) * 2.0, np.zeros(3))
    bad = np.eye(3)
    bad[0, 0] = -1.0  # det -1
    with pytest.raises(ValueError):
        Pose(bad, np.zeros(3))


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        Intrinsics(fx=-1.0, fy=1.0, cx=0.0, cy=0.0, width=10, height=10)
    with pytest.raises(ValueError):
        Intrinsics(fx=1.0, fy=1.0, cx=20.0, cy=0.0, width=10, height=10)
