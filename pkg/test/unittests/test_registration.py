"""Unit tests for object-to-scene registration"""

import math

import numpy as np
import pytest
from scenereg.config import RegistrationConfig
from scenereg.errors import AllWeightsZero, DegenerateInput, Diverged, RegistrationError
from scenereg.geometry import Camera, MeshBVH, TriangleMesh, look_at, primitives, sample_surface
from scenereg.physical_metrics import depth_error
from scenereg.pose import RigidTransform, geodesic_angle, quat_from_rotvec
from scenereg.registration import gate_weights, normal_agreement, register, register_stage1, register_stage2, soft_l1

TRUE_POSE = RigidTransform(quat_from_rotvec([0.2, -0.1, 0.4]), [15.0, -10.0, 30.0])
CONFIG = RegistrationConfig(sample_count=400, iterations_per_stage=15, seed=3)


def kicked(pose: RigidTransform) -> RigidTransform:
    kick = RigidTransform(quat_from_rotvec([0.0, math.radians(3.0), 0.0]), [1.5, -1.0, 1.0])
    return kick.compose(pose)


@pytest.fixture
def scene(asymmetric, slab):
    return TriangleMesh.concatenate([asymmetric.transformed(TRUE_POSE), slab])


@pytest.fixture
def tray():
    """Open box with 2 mm walls: 60 x 60 mm footprint, 40 mm tall"""
    return primitives.open_box([60.0, 60.0, 40.0], 2.0)


class TestRobustLoss:
    def test_soft_l1(self):
        assert soft_l1(0.0, 4.5) == pytest.approx(0.0)
        assert soft_l1(4.5**2, 4.5) == pytest.approx(2.0 * (math.sqrt(2.0) - 1.0))
        # Quadratic for small residuals
        assert soft_l1(0.01, 4.5) == pytest.approx(0.01 / 4.5**2, rel=1e-3)

    def test_gate_weights(self):
        weights = gate_weights(np.array([1.0, 0.8, 0.69, -1.0]), 0.7)
        np.testing.assert_allclose(weights, [1.0, 0.8, 0.0, 0.0])

    def test_normal_agreement_at_true_pose(self, asymmetric, scene):
        agreement = normal_agreement(TRUE_POSE, sample_surface(asymmetric, 200, 0), MeshBVH(scene))
        assert np.median(agreement) == pytest.approx(1.0)
        assert np.all(np.abs(agreement) <= 1.0 + 1e-9)


class TestRegister:
    def test_recovers_exact_copy(self, asymmetric, scene):
        result = register(asymmetric, scene, kicked(TRUE_POSE), CONFIG)
        assert np.linalg.norm(result.pose.t - TRUE_POSE.t) < 0.2
        assert geodesic_angle(result.pose.q, TRUE_POSE.q) < math.radians(0.5)
        assert result.mean_residual < 0.1
        assert result.inlier_fraction > 0.9
        assert isinstance(result.pose, RigidTransform)

    def test_cost_history_covers_both_stages(self, asymmetric, scene):
        result = register(asymmetric, scene, kicked(TRUE_POSE), CONFIG)
        assert len(result.cost_history) == 2 * CONFIG.iterations_per_stage
        assert result.stage1_cost is not None
        assert result.final_cost <= result.stage1_cost + 1e-6

    def test_distance_only(self, asymmetric, scene):
        result = register(asymmetric, MeshBVH(scene), kicked(TRUE_POSE), CONFIG, stage="distance-only")
        assert len(result.cost_history) == CONFIG.iterations_per_stage
        np.testing.assert_allclose(result.pose.as_matrix(), result.stage1_pose.as_matrix())
        assert result.final_cost == result.stage1_cost

    def test_stages_separately(self, asymmetric, scene):
        first = register_stage1(asymmetric, scene, kicked(TRUE_POSE), CONFIG)
        second = register_stage2(asymmetric, scene, first.pose, CONFIG)
        assert second.stage1_cost is None
        assert np.linalg.norm(second.pose.t - TRUE_POSE.t) < 0.2

    def test_deterministic(self, asymmetric, scene):
        a = register(asymmetric, scene, kicked(TRUE_POSE), CONFIG)
        b = register(asymmetric, scene, kicked(TRUE_POSE), CONFIG)
        np.testing.assert_array_equal(a.pose.as_matrix(), b.pose.as_matrix())
        assert a.cost_history == b.cost_history

    def test_frame_equivariance(self, asymmetric, scene):
        frame = RigidTransform(quat_from_rotvec([0.5, 1.0, -0.3]), [100.0, -40.0, 7.0])
        init = kicked(TRUE_POSE)
        local = register(asymmetric, scene, init, CONFIG)
        moved = register(asymmetric, scene.transformed(frame), frame.compose(init), CONFIG)
        np.testing.assert_allclose(moved.pose.as_matrix(), frame.compose(local.pose).as_matrix(), atol=1e-6)

    def test_report_dict(self, asymmetric, scene):
        result = register(asymmetric, scene, kicked(TRUE_POSE), CONFIG).to_dict()
        assert set(result) == {
            "stage1_cost", "final_cost", "mean_residual_mm", "inlier_fraction", "stage1_inlier_fraction",
            "cost_history", "pose", "stage1_pose",
        }
        assert result["pose"]["sigma"] == 1.0


class TestThinShell:
    """An open box shifted across its own wall thickness"""

    SHIFT = RigidTransform([1.0, 0.0, 0.0, 0.0], [1.8, 0.0, 0.0])

    @staticmethod
    def side_view():
        pose = look_at([-200.0, 0.0, 20.0], [0.0, 0.0, 20.0])
        return [Camera.from_fov(24, 16, 40.0, pose)]

    def test_distance_stage_settles_between_walls(self, tray):
        # Closest points of one face of each side wall lie on the opposite face
        cfg = RegistrationConfig(sample_count=600, iterations_per_stage=5, seed=1)
        first = register_stage1(tray, tray, self.SHIFT, cfg)
        assert 0.5 < first.pose.t[0] < 1.6
        assert first.stage1_inlier_fraction < 0.9

    def test_normal_stage_recovers(self, tray):
        coarse = RegistrationConfig(sample_count=600, iterations_per_stage=5, seed=1)
        first = register_stage1(tray, tray, self.SHIFT, coarse)
        refine = RegistrationConfig(sample_count=600, iterations_per_stage=25, seed=1)
        second = register_stage2(tray, tray, first.pose, refine)
        assert np.linalg.norm(second.pose.t) < 0.05
        assert second.inlier_fraction > 0.95
        assert second.inlier_fraction > first.stage1_inlier_fraction

        cameras = self.side_view()
        initial = depth_error([(tray, self.SHIFT)], tray, cameras)
        before = depth_error([(tray, first.pose)], tray, cameras)
        after = depth_error([(tray, second.pose)], tray, cameras)
        assert initial.mean_abs > before.mean_abs > 0.5
        assert after.mean_abs < 0.1 * before.mean_abs


class TestFailures:
    def test_rejected_when_shapes_differ(self, cube, sphere):
        cfg = CONFIG.model_copy(update={"reject_mean_residual": 0.01})
        with pytest.raises(Diverged):
            register(cube, sphere, RigidTransform.identity(), cfg)

    def test_flipped_scene_normals(self, cube):
        inward = TriangleMesh(cube.vertices, cube.faces[:, ::-1])
        with pytest.raises(AllWeightsZero):
            register(cube, inward, RigidTransform([1.0, 0.0, 0.0, 0.0], [0.5, 0.0, 0.0]), CONFIG)

    def test_all_closest_points_on_one_vertex(self, cube):
        far = TriangleMesh([[1000.0, 1000.0, 1000.0], [1001.0, 1000.0, 1000.0], [1000.0, 1001.0, 1000.0]], [[0, 1, 2]])
        with pytest.raises(DegenerateInput):
            register(cube, far, RigidTransform.identity(), CONFIG)

    def test_errors_share_a_base(self):
        for error in (Diverged, DegenerateInput, AllWeightsZero):
            assert issubclass(error, RegistrationError)
