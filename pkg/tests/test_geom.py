import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rspose.geom import (
    I1,
    I2,
    I3,
    I4,
    CameraIntrinsics,
    FrameId,
    MotionVelocity,
    ProjectionError,
    RowPose,
    StereoRigConfig,
    project_gs,
    project_rs,
    project_rs_many,
    rodrigues,
    row_pose,
    skew,
    small_rotation,
)

vec3 = arrays(np.float64, 3, elements=st.floats(-10, 10))
small_vec3 = arrays(np.float64, 3, elements=st.floats(-0.05, 0.05))


class TestSkew:
    def test_zero(self):
        assert np.array_equal(skew(np.zeros(3)), np.zeros((3, 3)))

    def test_canonical_cross(self):
        assert np.array_equal(skew([1, 0, 0]) @ [0, 1, 0], [0, 0, 1])

    @given(vec3)
    def test_annihilates_own_vector(self, v):
        assert np.allclose(skew(v) @ v, 0, atol=1e-12)

    @given(vec3, vec3)
    def test_matches_cross_product(self, a, b):
        assert np.allclose(skew(a) @ b, np.cross(a, b), atol=1e-9)

    def test_batched(self):
        v = np.arange(6.0).reshape(2, 3)
        S = skew(v)
        assert S.shape == (2, 3, 3)
        assert np.array_equal(S[1], skew(v[1]))


class TestRotations:
    def test_small_rotation_zero_is_identity(self):
        assert np.array_equal(small_rotation(np.zeros(3)), np.eye(3))

    def test_small_rotation_about_axis_3(self):
        th = 0.02
        assert np.array_equal(small_rotation([0, 0, th]), [[1, -th, 0], [th, 1, 0], [0, 0, 1]])

    @given(small_vec3)
    def test_linearization_gap_bounded(self, w):
        gap = np.linalg.norm(small_rotation(w) - rodrigues(w))
        assert gap <= np.dot(w, w) + 1e-15

    @given(small_vec3)
    def test_small_rotation_inverse_up_to_second_order(self, w):
        dev = np.linalg.norm(small_rotation(w) @ small_rotation(-w) - np.eye(3))
        assert dev <= 2 * np.dot(w, w) + 1e-15

    @given(arrays(np.float64, 3, elements=st.floats(-3, 3)))
    def test_rodrigues_is_proper_rotation(self, w):
        R = rodrigues(w)
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert np.isclose(np.linalg.det(R), 1.0)

    def test_rodrigues_quarter_turn(self):
        R = rodrigues([0, 0, np.pi / 2])
        assert np.allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)


class TestFrameIds:
    def test_indices(self):
        assert [f.index for f in (I1, I2, I3, I4)] == [1, 2, 3, 4]
        assert all(FrameId.from_index(f.index) == f for f in (I1, I2, I3, I4))

    def test_bad_index(self):
        with pytest.raises(ValueError):
            FrameId.from_index(5)


class TestRowPose:
    def test_first_row_left(self, rig, motion):
        p = row_pose(rig, I1, 0, motion)
        assert np.array_equal(p.w, np.zeros(3))
        assert np.array_equal(p.d, [0.0, 0.5, 0.0])

    def test_first_row_right(self, rig, motion):
        p = row_pose(rig, I2, 0, motion)
        assert np.array_equal(p.d, [0.0, -0.5, 0.0])

    def test_second_frame_first_row(self, rig, motion):
        p = row_pose(rig, I3, 0, motion)
        assert np.allclose(p.w, motion.w)
        assert np.allclose(p.d, motion.d + [0, 0.5, 0])

    def test_left_right_offset_is_full_baseline(self, rig, motion):
        diff = row_pose(rig, I1, 0, motion).d - row_pose(rig, I2, 0, motion).d
        assert np.array_equal(diff, [0.0, 1.0, 0.0])

    def test_affine_in_row(self, rig, motion):
        u = np.array([0.0, 100.0, 200.0, 450.5])
        p = row_pose(rig, I3, u, motion)
        second = np.diff(p.d, axis=0) / np.diff(u)[:, None]
        assert np.allclose(second, second[0], atol=1e-15)
        assert np.allclose(second[0], rig.row_rate * motion.d)

    def test_row_out_of_range(self, rig, motion):
        with pytest.raises(ValueError):
            row_pose(rig, I1, 900, motion)
        with pytest.raises(ValueError):
            row_pose(rig, I1, -0.5, motion)

    def test_rig_validation(self):
        with pytest.raises(ValueError):
            StereoRigConfig(0.5, 1.2, 900)
        with pytest.raises(ValueError):
            StereoRigConfig(0.0, 0.8, 900)


class TestProjectGS:
    ident = RowPose(np.zeros(3), np.zeros(3))

    def test_optical_axis(self, K):
        uv, z = project_gs(K, self.ident, [0, 0, 5])
        assert np.array_equal(uv, [450, 450]) and z == 5

    def test_row_first_convention(self, K):
        uv, _ = project_gs(K, self.ident, [1, 0, 5])
        assert np.allclose(uv, [450 + 810 / 5, 450])

    def test_translation_along_axis(self, K):
        _, z = project_gs(K, RowPose(np.zeros(3), np.array([0, 0, -1.0])), [0, 0, 5])
        assert z == 4

    def test_behind_camera_raises(self, K):
        with pytest.raises(ProjectionError):
            project_gs(K, self.ident, [0, 0, -1])

    def test_intrinsics_validation(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(-1, 810, 450, 450, 900, 900)


class TestProjectRS:
    def test_zero_motion_equals_gs(self, K, rig, rng):
        X = rng.uniform([-2, -2, 4], [2, 2, 12], (50, 3))
        for fid in (I1, I2, I3, I4):
            uv, z, ok = project_rs_many(K, rig, fid, MotionVelocity.zero(), X)
            uv_gs, z_gs = project_gs(K, row_pose(rig, fid, 0, MotionVelocity.zero()), X)
            assert ok.all()
            assert np.array_equal(uv, uv_gs) and np.array_equal(z, z_gs)

    @pytest.mark.parametrize("model", ["linearized", "exact"])
    def test_fixed_point_residual(self, K, rig, motion, rng, model):
        X = rng.uniform([-2, -2, 4], [2, 2, 12], (50, 3))
        uv, _, ok = project_rs_many(K, rig, I3, motion, X, model)
        assert ok.all()
        for p, x in zip(uv, X):
            again, _ = project_gs(K, row_pose(rig, I3, p[0], motion), x, model)
            assert abs(again[0] - p[0]) < 1e-6

    def test_agrees_with_dense_row_scan(self, K, rig, rng):
        # oracle: scan u in 0.01 steps and take the row whose own projection lands closest
        m = MotionVelocity(np.deg2rad(0.4) * np.array([0.6, 0.0, 0.8]), [0.0, 0.3, 0.0])
        X = rng.uniform([-2, -2, 4], [2, 2, 12], (100, 3))
        uv, _, ok = project_rs_many(K, rig, I1, m, X)
        grid = np.arange(0, 900, 0.01)
        pose = row_pose(rig, I1, grid, m)
        checked = 0
        for p, x, good in zip(uv, X, ok):
            if not good or not 0 <= p[0] < 899:
                continue
            P = np.einsum("nij,j->ni", small_rotation(pose.w), x) + pose.d
            resid = np.abs(K.fx * P[:, 0] / P[:, 2] + K.cu - grid)
            assert abs(grid[np.argmin(resid)] - p[0]) <= 0.02
            checked += 1
        assert checked > 50

    def test_single_point_raises_behind(self, K, rig, motion):
        with pytest.raises(ProjectionError):
            project_rs(K, rig, I1, motion, [0, 0, -3])
