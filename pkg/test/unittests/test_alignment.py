"""Unit tests for Sim(3) alignment, object matching and pose supervision"""

import math

import numpy as np
import pytest
from scenereg.alignment import gt_pose_supervision, icp_sim3, match_objects, perturb, umeyama_sim3
from scenereg.config import IcpConfig
from scenereg.errors import DegenerateConfiguration
from scenereg.geometry import MeshBVH, sample_surface
from scenereg.pose import Pose7DoF, RigidTransform, Sim3Transform, geodesic_angle, quat_from_rotvec
from scenereg.rng import make_rng

TIGHT = IcpConfig(max_iterations=200, convergence_tol=1e-9, restarts=1, sample_count=1500, seed=1)


class TestUmeyama:
    def test_recovers_similarity(self):
        rng = make_rng(0)
        source = rng.uniform(-30, 30, (50, 3))
        truth = Sim3Transform(quat_from_rotvec([0.3, -0.2, 1.1]), [4.0, -7.0, 2.5], 1.7)
        fit = umeyama_sim3(source, truth.apply(source))
        np.testing.assert_allclose(fit.as_matrix(), truth.as_matrix(), atol=1e-9)

    def test_without_scale(self):
        rng = make_rng(1)
        source = rng.uniform(-30, 30, (50, 3))
        truth = RigidTransform(quat_from_rotvec([0.1, 0.2, 0.3]), [1.0, 2.0, 3.0])
        fit = umeyama_sim3(source, truth.apply(source), with_scale=False)
        assert fit.sigma == 1.0
        np.testing.assert_allclose(fit.as_matrix(), truth.as_matrix(), atol=1e-9)

    def test_reflection_is_not_returned(self):
        rng = make_rng(2)
        source = rng.uniform(-30, 30, (50, 3))
        mirrored = source * np.array([1.0, 1.0, -1.0])
        fit = umeyama_sim3(source, mirrored)
        assert np.linalg.det(fit.rotation) == pytest.approx(1.0)

    def test_collinear_points(self):
        line = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateConfiguration):
            umeyama_sim3(line, line + 1.0)

    def test_too_few_points(self):
        with pytest.raises(DegenerateConfiguration):
            umeyama_sim3(np.eye(3)[:2], np.eye(3)[:2])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            umeyama_sim3(np.zeros((4, 3)), np.zeros((5, 3)))


class TestIcp:
    def test_converges_from_nearby_start(self, asymmetric):
        truth = Sim3Transform(quat_from_rotvec([0.1, 0.0, 0.3]), [5.0, 2.0, -3.0], 1.1)
        start = Sim3Transform(quat_from_rotvec([0.0, 0.04, 0.0]), [0.5, -0.5, 0.3], 1.02).compose(truth)
        result = icp_sim3(asymmetric, MeshBVH(asymmetric.transformed(truth)), start, TIGHT)
        assert result.rms < 0.05
        assert result.transform.sigma == pytest.approx(1.1, abs=0.01)
        assert np.linalg.norm(result.transform.t - truth.t) < 0.5
        assert geodesic_angle(result.transform.q, truth.q) < math.radians(1.0)

    def test_point_cloud_target(self, asymmetric):
        points = sample_surface(asymmetric, 1500, 5).points
        result = icp_sim3(points, points, None, TIGHT)
        assert result.rms == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(result.transform.as_matrix(), np.eye(4), atol=1e-9)

    def test_restarts_keep_best(self, asymmetric):
        cfg = TIGHT.model_copy(update={"restarts": 4})
        result = icp_sim3(asymmetric, asymmetric, None, cfg)
        assert len(result.restart_rms) == 4
        assert result.rms == min(result.restart_rms)

    def test_rigid_mode(self, asymmetric):
        cfg = TIGHT.model_copy(update={"estimate_scale": False})
        target = asymmetric.transformed(RigidTransform(quat_from_rotvec([0.0, 0.0, 0.05]), [1.0, 0.0, 0.0]))
        result = icp_sim3(asymmetric, target, None, cfg)
        assert result.transform.sigma == 1.0

    def test_perturb_is_seeded(self):
        cfg = IcpConfig()
        a = perturb(Sim3Transform.identity(), np.zeros(3), 100.0, cfg, make_rng([0, 1]))
        b = perturb(Sim3Transform.identity(), np.zeros(3), 100.0, cfg, make_rng([0, 1]))
        np.testing.assert_array_equal(a.as_matrix(), b.as_matrix())
        assert geodesic_angle(a.q, [1.0, 0.0, 0.0, 0.0]) == pytest.approx(math.radians(cfg.restart_rotation_deg))
        assert abs(math.log(a.sigma)) <= cfg.restart_log_scale


def placed(mesh, x):
    return mesh, Pose7DoF([1.0, 0.0, 0.0, 0.0], [x, 0.0, 0.0])


class TestMatching:
    def test_matches_by_position(self, cube, sphere):
        pred = [placed(sphere, 100.0), placed(cube, 0.0)]
        gt = [placed(cube, 1.0), placed(sphere, 99.0)]
        matching = match_objects(pred, gt)
        assert matching.pairs == [(0, 1), (1, 0)]
        assert matching.unmatched_pred == []
        assert matching.cost == pytest.approx(2.0)

    def test_distant_objects_stay_unmatched(self, cube):
        matching = match_objects([placed(cube, 0.0), placed(cube, 500.0)], [placed(cube, 0.0)])
        assert matching.pairs == [(0, 0)]
        assert matching.unmatched_pred == [1]
        assert matching.unmatched_gt == []

    def test_empty_side(self, cube):
        matching = match_objects([], [placed(cube, 0.0)])
        assert matching.pairs == []
        assert matching.unmatched_gt == [0]


class TestSupervision:
    def scene(self, asymmetric, cube):
        return [
            (asymmetric, Pose7DoF(quat_from_rotvec([0.0, 0.0, 0.4]), [-40.0, 0.0, 10.0])),
            (cube, Pose7DoF(quat_from_rotvec([0.2, 0.0, 0.0]), [40.0, 10.0, 10.0])),
        ]

    def test_identical_scenes(self, asymmetric, cube):
        scene = self.scene(asymmetric, cube)
        supervision = gt_pose_supervision(scene, scene, TIGHT)
        assert supervision.global_rms < 1e-6
        np.testing.assert_allclose(supervision.global_transform.as_matrix(), np.eye(4), atol=1e-6)
        assert [(p.pred_index, p.gt_index) for p in supervision.pairs] == [(0, 0), (1, 1)]
        for pair, (_, gt_pose) in zip(supervision.pairs, scene):
            np.testing.assert_allclose(pair.pose.as_matrix(), np.eye(4), atol=1e-6)
            np.testing.assert_allclose(pair.target_pose.as_matrix(), gt_pose.as_matrix(), atol=1e-6)

    def test_globally_displaced_prediction(self, asymmetric, cube):
        gt = self.scene(asymmetric, cube)
        offset = Sim3Transform(quat_from_rotvec([0.0, 0.0, 0.03]), [2.0, -1.0, 0.5], 1.03)
        pred = [(mesh, offset.compose(pose)) for mesh, pose in gt]
        supervision = gt_pose_supervision(pred, gt, TIGHT, threads=2)
        assert len(supervision.pairs) == 2
        assert supervision.global_transform.sigma == pytest.approx(1 / 1.03, abs=0.005)
        for pair, (_, gt_pose) in zip(supervision.pairs, gt):
            assert pair.rms < 0.1
            assert np.linalg.norm(pair.target_pose.t - gt_pose.t) < 0.5
            assert pair.target_pose.sigma == pytest.approx(1.0, abs=0.005)

    def test_report_dict(self, asymmetric, cube):
        scene = self.scene(asymmetric, cube)
        report = gt_pose_supervision(scene, scene, TIGHT).to_dict()
        assert set(report) == {"global", "pairs", "unmatched_pred", "unmatched_gt"}
        assert set(report["pairs"][0]) == {"pred_index", "gt_index", "pose", "target_pose", "rms_mm"}
