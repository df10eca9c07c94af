import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boxscene.camera import (
    CameraError,
    CameraTrajectory,
    Intrinsics,
    Pose,
    interpolate_trajectory,
    load_trajectory,
    look_at_pose,
    pixel_ray,
    save_trajectory,
    slerp,
    trajectory_from_dict,
    trajectory_to_dict,
)
from boxscene.geometry import Quat, Vec3


class TestIntrinsics:
    def test_default_vfov(self):
        intr = Intrinsics.from_vfov()
        assert intr.width == 768 and intr.height == 512
        # 60 degree vertical field of view
        assert intr.fy == pytest.approx(256.0 / math.tan(math.radians(30.0)))
        assert intr.fx == intr.fy
        assert intr.cx == 384.0 and intr.cy == 256.0

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            Intrinsics(0, 512, 100, 100, 0, 0)

    def test_dict_round_trip(self):
        intr = Intrinsics.from_vfov(96, 64, 45.0)
        assert Intrinsics.from_dict(intr.to_dict()) == intr


class TestPixelRay:
    def test_principal_point_is_forward(self):
        intr = Intrinsics.from_vfov(96, 64)
        pose = Pose(Vec3(1, 2, 3), Quat.identity())
        ray = pixel_ray(intr, pose, intr.cx, intr.cy)
        assert ray.origin.as_tuple() == (1, 2, 3)
        assert ray.direction.as_tuple() == pytest.approx((0, 0, 1), abs=1e-12)

    def test_right_of_center_has_positive_x(self):
        intr = Intrinsics.from_vfov(96, 64)
        pose = Pose(Vec3(0, 0, 0), Quat.identity())
        ray = pixel_ray(intr, pose, intr.cx + 10, intr.cy)
        assert ray.direction.x > 0 and abs(ray.direction.y) < 1e-12

    def test_below_center_has_positive_y(self):
        # y points down in the image
        intr = Intrinsics.from_vfov(96, 64)
        pose = Pose(Vec3(0, 0, 0), Quat.identity())
        ray = pixel_ray(intr, pose, intr.cx, intr.cy + 10)
        assert ray.direction.y > 0

    def test_vfov_edge_angle(self):
        intr = Intrinsics.from_vfov(96, 64, 60.0)
        pose = Pose(Vec3(0, 0, 0), Quat.identity())
        top = pixel_ray(intr, pose, intr.cx, 0.0)
        angle = math.acos(top.direction.z)
        # the image border sits half a pixel beyond the outermost pixel center
        assert angle == pytest.approx(math.radians(30.0), abs=1e-9)

    @given(
        px=st.floats(0, 96),
        py=st.floats(0, 64),
    )
    @settings(max_examples=100)
    def test_direction_is_unit(self, px, py):
        intr = Intrinsics.from_vfov(96, 64)
        pose = look_at_pose(Vec3(1, 1, 1), Vec3(0, 2, 0.5))
        ray = pixel_ray(intr, pose, px, py)
        assert ray.direction.norm() == pytest.approx(1.0, abs=1e-12)


class TestLookAt:
    def test_forward_points_at_target(self):
        pose = look_at_pose(Vec3(0, 0, 1), Vec3(3, 4, 1))
        f = pose.forward()
        assert f.as_tuple() == pytest.approx((0.6, 0.8, 0.0), abs=1e-12)

    def test_camera_down_opposes_world_up(self):
        pose = look_at_pose(Vec3(0, 0, 1), Vec3(5, 0, 1))
        down = pose.orientation.rotate(Vec3(0, 1, 0))
        assert down.z < 0  # camera y is image-down, so world -z

    def test_degenerate_target(self):
        with pytest.raises(CameraError) as ei:
            look_at_pose(Vec3(1, 1, 1), Vec3(1, 1, 1))
        assert ei.value.code == "DEGENERATE_LOOKAT"

    def test_degenerate_up(self):
        with pytest.raises(CameraError) as ei:
            look_at_pose(Vec3(0, 0, 0), Vec3(0, 0, 5))
        assert ei.value.code == "DEGENERATE_LOOKAT"

    def test_orientation_is_rotation(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            eye = Vec3(*rng.uniform(-3, 3, 3))
            tgt = Vec3(*rng.uniform(-3, 3, 3))
            if (tgt - eye).norm() < 0.1:
                continue
            pose = look_at_pose(eye, tgt)
            m = np.array(pose.orientation.as_matrix())
            assert np.allclose(m @ m.T, np.eye(3), atol=1e-9)
            assert np.linalg.det(m) == pytest.approx(1.0, abs=1e-9)


class TestSlerp:
    def test_endpoints(self):
        a = Quat.from_axis_angle(Vec3(0, 0, 1), 0.3)
        b = Quat.from_axis_angle(Vec3(0, 1, 0), 1.1)
        assert slerp(a, b, 0.0).as_tuple() == pytest.approx(a.as_tuple(), abs=1e-12)
        assert slerp(a, b, 1.0).as_tuple() == pytest.approx(b.as_tuple(), abs=1e-12)

    def test_half_angle(self):
        a = Quat.identity()
        b = Quat.from_axis_angle(Vec3(0, 0, 1), math.pi / 2)
        mid = slerp(a, b, 0.5)
        expect = Quat.from_axis_angle(Vec3(0, 0, 1), math.pi / 4)
        assert mid.as_tuple() == pytest.approx(expect.as_tuple(), abs=1e-12)

    def test_sign_canonicalization(self):
        a = Quat.from_axis_angle(Vec3(0, 0, 1), 0.2)
        b = Quat.from_axis_angle(Vec3(0, 0, 1), 0.4)
        b_neg = Quat.normalize(-b.w, -b.x, -b.y, -b.z)
        mid = slerp(a, b, 0.5)
        mid_neg = slerp(a, b_neg, 0.5)
        # same rotation either way; compare action on a vector
        v = Vec3(1, 0, 0)
        assert mid.rotate(v).as_tuple() == pytest.approx(mid_neg.rotate(v).as_tuple(), abs=1e-12)

    def test_nearly_parallel_stable(self):
        a = Quat.from_axis_angle(Vec3(0, 0, 1), 0.1)
        b = Quat.from_axis_angle(Vec3(0, 0, 1), 0.1 + 1e-12)
        mid = slerp(a, b, 0.5)
        assert all(math.isfinite(v) for v in mid.as_tuple())

    @given(t=st.floats(0, 1))
    @settings(max_examples=100)
    def test_result_is_unit(self, t):
        a = Quat.from_axis_angle(Vec3(1, 0, 0), 0.7)
        b = Quat.from_axis_angle(Vec3(0, 1, 0), 2.1)
        q = slerp(a, b, t)
        n = math.sqrt(sum(v * v for v in q.as_tuple()))
        assert n == pytest.approx(1.0, abs=1e-12)


class TestTrajectory:
    def keyframes(self):
        return [
            look_at_pose(Vec3(2, 2, 1.5), Vec3(0, 0, 1.0)),
            look_at_pose(Vec3(-2, 2, 1.5), Vec3(0, 0, 1.0)),
            look_at_pose(Vec3(-2, -2, 1.5), Vec3(0, 0, 1.0)),
        ]

    def test_keyframes_reproduced_exactly(self):
        kf = self.keyframes()
        traj = interpolate_trajectory(kf, samples_per_segment=4)
        assert len(traj) == 1 + 2 * 4
        assert traj.poses[0] == kf[0]
        assert traj.poses[4].position.as_tuple() == kf[1].position.as_tuple()
        assert traj.poses[4].orientation.as_tuple() == kf[1].orientation.as_tuple()
        assert traj.poses[8].position.as_tuple() == kf[2].position.as_tuple()

    def test_positions_linear(self):
        kf = self.keyframes()[:2]
        traj = interpolate_trajectory(kf, samples_per_segment=4)
        mid = traj.poses[2].position
        expect = Vec3(
            (kf[0].position.x + kf[1].position.x) / 2,
            (kf[0].position.y + kf[1].position.y) / 2,
            (kf[0].position.z + kf[1].position.z) / 2,
        )
        assert mid.as_tuple() == pytest.approx(expect.as_tuple(), abs=1e-12)

    def test_auto_frame_ids(self):
        traj = interpolate_trajectory(self.keyframes(), samples_per_segment=2)
        assert traj.frame_ids[0] == "frame_00000"
        assert traj.frame_ids[-1] == f"frame_{len(traj) - 1:05d}"

    def test_needs_two_keyframes(self):
        with pytest.raises(ValueError):
            interpolate_trajectory(self.keyframes()[:1], samples_per_segment=2)

    def test_json_round_trip(self, tmp_path):
        traj = interpolate_trajectory(self.keyframes(), samples_per_segment=3)
        p = tmp_path / "traj.json"
        save_trajectory(traj, p)
        back = load_trajectory(p)
        assert back.frame_ids == traj.frame_ids
        assert back.intrinsics == traj.intrinsics
        for a, b in zip(traj.poses, back.poses):
            assert a.position.as_tuple() == pytest.approx(b.position.as_tuple(), abs=1e-12)
            assert a.orientation.as_tuple() == pytest.approx(b.orientation.as_tuple(), abs=1e-12)

    def test_dict_shape(self):
        traj = interpolate_trajectory(self.keyframes()[:2], samples_per_segment=1)
        doc = trajectory_to_dict(traj)
        assert set(doc) == {"intrinsics", "frames"}
        assert set(doc["frames"][0]) == {"frame_id", "position", "rotation_quat"}
        back = trajectory_from_dict(doc)
        assert len(back) == len(traj)
