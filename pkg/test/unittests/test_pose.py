"""Unit tests for transforms and pose losses"""

import numpy as np
import pytest
from scenereg.pose import (
    PoseModel, Pose7DoF, RigidTransform, Sim3Transform, canonical_quaternion, decompose_sim3,
    geodesic_angle, quat_from_rotvec, quat_multiply, quaternion_loss, random_rotation, retract, retract_sim3
)
from scenereg.rng import make_rng


def random_sim3(rng) -> Sim3Transform:
    return Sim3Transform(random_rotation(rng), rng.uniform(-50, 50, 3), float(np.exp(rng.uniform(-0.5, 0.5))))


class TestQuaternions:
    def test_multiply_matches_matrices(self):
        rng = make_rng(1)
        a, b = random_rotation(rng), random_rotation(rng)
        product = RigidTransform(quat_multiply(a, b), np.zeros(3)).rotation
        expected = RigidTransform(a, np.zeros(3)).rotation @ RigidTransform(b, np.zeros(3)).rotation
        np.testing.assert_allclose(product, expected, atol=1e-12)

    def test_canonical_sign(self):
        q = canonical_quaternion([-1.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(q, [1.0, 0.0, 0.0, 0.0])

    def test_degenerate_quaternion(self):
        with pytest.raises(ValueError):
            RigidTransform([0.0, 0.0, 0.0, 0.0], np.zeros(3))

    def test_quaternion_loss_sign_invariant(self):
        q = random_rotation(make_rng(2))
        assert quaternion_loss(q, q) == pytest.approx(0.0, abs=1e-12)
        assert quaternion_loss(q, -q) == pytest.approx(0.0, abs=1e-12)

    def test_quaternion_loss_orthogonal(self):
        half_turn = quat_from_rotvec([np.pi, 0.0, 0.0])
        assert quaternion_loss([1.0, 0.0, 0.0, 0.0], half_turn) == pytest.approx(1.0)

    def test_geodesic_angle(self):
        q = quat_from_rotvec([0.0, 0.0, 0.3])
        assert geodesic_angle([1.0, 0.0, 0.0, 0.0], q) == pytest.approx(0.3)


class TestSim3Transform:
    def test_apply(self):
        transform = Sim3Transform(quat_from_rotvec([0.0, 0.0, np.pi / 2]), [1.0, 2.0, 3.0], 2.0)
        np.testing.assert_allclose(transform.apply([1.0, 0.0, 0.0]), [1.0, 4.0, 3.0], atol=1e-12)

    def test_compose_order(self):
        rng = make_rng(3)
        a, b = random_sim3(rng), random_sim3(rng)
        points = rng.uniform(-10, 10, (20, 3))
        np.testing.assert_allclose(a.compose(b).apply(points), a.apply(b.apply(points)), atol=1e-9)

    def test_inverse(self):
        rng = make_rng(4)
        transform = random_sim3(rng)
        points = rng.uniform(-10, 10, (20, 3))
        np.testing.assert_allclose(transform.inverse().apply(transform.apply(points)), points, atol=1e-9)

    def test_rigid_compose_stays_rigid(self):
        rng = make_rng(5)
        a = RigidTransform(random_rotation(rng), [1.0, 0.0, 0.0])
        b = RigidTransform(random_rotation(rng), [0.0, 1.0, 0.0])
        assert isinstance(a.compose(b), RigidTransform)
        assert isinstance(a.inverse(), RigidTransform)

    def test_rigid_rejects_scale(self):
        with pytest.raises(ValueError):
            RigidTransform([1.0, 0.0, 0.0, 0.0], np.zeros(3), 2.0)

    def test_non_positive_scale(self):
        with pytest.raises(ValueError):
            Sim3Transform([1.0, 0.0, 0.0, 0.0], np.zeros(3), 0.0)

    def test_matrix_round_trip(self):
        transform = random_sim3(make_rng(6))
        pose = decompose_sim3(transform.as_matrix())
        assert isinstance(pose, Pose7DoF)
        assert pose.q[0] >= 0
        assert pose.sigma == pytest.approx(transform.sigma)
        np.testing.assert_allclose(pose.as_matrix(), transform.as_matrix(), atol=1e-9)

    def test_reflection_is_rejected(self):
        with pytest.raises(ValueError):
            Sim3Transform.from_matrix(np.diag([1.0, 1.0, -1.0, 1.0]))

    def test_fields_are_read_only(self):
        transform = Sim3Transform.identity()
        with pytest.raises(ValueError):
            transform.t[0] = 1.0


class TestRetraction:
    def test_zero_increment(self):
        transform = RigidTransform(random_rotation(make_rng(7)), [1.0, 2.0, 3.0])
        result = retract(transform, np.zeros(6))
        assert isinstance(result, RigidTransform)
        np.testing.assert_allclose(result.as_matrix(), transform.as_matrix(), atol=1e-12)

    def test_translation_increment(self):
        result = retract(RigidTransform.identity(), [0, 0, 0, 1.0, 2.0, 3.0])
        np.testing.assert_allclose(result.t, [1.0, 2.0, 3.0])

    def test_log_scale_increment(self):
        result = retract_sim3(Sim3Transform.identity(), [0, 0, 0, 0, 0, 0, np.log(2.0)])
        assert result.sigma == pytest.approx(2.0)


class TestPoseModel:
    def test_json_encoding(self):
        transform = Pose7DoF(quat_from_rotvec([0.1, 0.2, 0.3]), [1.0, 2.0, 3.0], 1.5)
        model = PoseModel.model_validate(transform.to_dict())
        np.testing.assert_allclose(model.to_pose().as_matrix(), transform.as_matrix(), atol=1e-12)

    def test_defaults_are_identity(self):
        np.testing.assert_allclose(PoseModel().to_rigid().as_matrix(), np.eye(4))

    def test_vector_length_checked(self):
        with pytest.raises(ValueError):
            PoseModel(q=[1.0, 0.0, 0.0], t=[0.0, 0.0, 0.0])

    @pytest.mark.parametrize("q", [[0.0, 0.0, 0.0, 0.0], [float("nan"), 0.0, 0.0, 1.0], [1e-13, 0.0, 0.0, 0.0]])
    def test_quaternion_must_normalize(self, q):
        with pytest.raises(ValueError, match="quaternion"):
            PoseModel(q=q, t=[0.0, 0.0, 0.0])
