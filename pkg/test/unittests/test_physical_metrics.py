"""Unit tests for contact, penetration and depth error"""

import logging

import numpy as np
import pytest
from scenereg.config import ContactConfig
from scenereg.errors import NoValidPixels
from scenereg.geometry import Camera, look_at
from scenereg.physical_metrics import PosedBody, contact_area, contact_report, depth_error, depth_residuals, penetration_area
from scenereg.pose import Pose7DoF, RigidTransform, Sim3Transform

IDENTITY = Pose7DoF([1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0])


def at(x=0.0, y=0.0, z=0.0, sigma=1.0):
    return Pose7DoF([1.0, 0.0, 0.0, 0.0], [x, y, z], sigma)


def top_camera(width=32, height=24):
    return Camera.from_fov(width, height, 60.0, look_at([3.0, 1.0, 100.0], [3.0, 1.0, 0.0], up=(0.0, 1.0, 0.0)))


class TestContact:
    def test_stacked_cubes(self, cube):
        report = contact_report([(cube, at()), (cube, at(z=20.0))])
        # Top face of the lower cube and bottom face of the upper one
        assert report.contact_area == pytest.approx(800.0, rel=0.1)
        assert report.per_object_contact[0] == pytest.approx(400.0, rel=0.1)
        assert report.penetration_area < 10.0
        assert report.ratio < 0.02
        assert report.ratio_defined

    def test_side_faces_do_not_face(self, cube):
        # 2 mm gap between side faces: close enough and facing
        near = contact_area([(cube, at()), (cube, at(x=22.0))])
        assert near.total == pytest.approx(800.0, rel=0.1)
        # Beyond the threshold nothing counts
        far = contact_area([(cube, at()), (cube, at(x=23.0))])
        assert far.total == 0.0

    def test_threshold_override(self, cube):
        breakdown = contact_area([(cube, at()), (cube, at(x=23.0))], threshold=3.5)
        assert breakdown.total == pytest.approx(800.0, rel=0.1)

    def test_pairs_sum_both_directions(self, cube):
        breakdown = contact_area([(cube, at()), (cube, at(z=20.0)), (cube, at(x=100.0))])
        assert [(i, j) for i, j, _ in breakdown.per_pair] == [(0, 1), (0, 2), (1, 2)]
        assert breakdown.per_pair[0][2] == pytest.approx(breakdown.per_object[0] + breakdown.per_object[1])
        assert breakdown.per_pair[1][2] == 0.0
        assert breakdown.per_object[2] == 0.0

    def test_union_per_object(self, cube):
        # The middle cube touches both neighbours; its total counts each sample once
        scene = [(cube, at(z=-20.0)), (cube, at()), (cube, at(z=20.0))]
        breakdown = contact_area(scene)
        assert breakdown.per_object[1] == pytest.approx(800.0, rel=0.1)
        assert breakdown.total == pytest.approx(1600.0, rel=0.1)

    def test_scaled_object_density(self, cube):
        # Sampling density is per mm² of the posed surface
        body = PosedBody(cube, at(sigma=2.0), 0.5, 0)
        assert len(body.samples) == 2 * 2400
        assert body.samples.weights.sum() == pytest.approx(4.0 * cube.surface_area())

    def test_separated_objects(self, cube, caplog):
        with caplog.at_level(logging.WARNING):
            report = contact_report([(cube, at()), (cube, at(x=100.0))])
        assert report.contact_area == 0.0
        assert report.ratio is None
        assert not report.ratio_defined
        assert "undefined" in caplog.text

    def test_single_object(self, cube):
        report = contact_report([(cube, at())])
        assert report.per_pair == []
        assert report.contact_area == 0.0


class TestPenetration:
    def test_overlapping_cubes(self, cube):
        breakdown = penetration_area([(cube, at()), (cube, at(z=15.0))])
        # Each cube has its 20 x 20 face plus a 5 mm band of its sides inside the other
        assert breakdown.total == pytest.approx(1600.0, rel=0.1)
        assert breakdown.per_object[0] == pytest.approx(breakdown.per_object[1], rel=0.1)

    def test_nested_object(self, cube):
        small = cube.transformed(Sim3Transform([1.0, 0.0, 0.0, 0.0], np.zeros(3), 0.25))
        breakdown = penetration_area([(cube, at()), (small, at())])
        assert breakdown.per_object[0] == 0.0
        assert breakdown.per_object[1] == pytest.approx(small.surface_area(), rel=0.02)

    def test_threads_do_not_change_result(self, cube):
        scene = [(cube, at()), (cube, at(z=15.0)), (cube, at(x=15.0))]
        cfg = ContactConfig(samples_per_mm2=1.0)
        single = contact_report(scene, cfg, threads=1).to_dict()
        parallel = contact_report(scene, cfg, threads=3).to_dict()
        assert single == parallel


class TestDepthError:
    def test_perfect_registration(self, cube):
        stats = depth_error([(cube, IDENTITY)], cube, [top_camera()])
        assert stats.pixel_count > 0
        assert stats.mean_abs == pytest.approx(0.0, abs=1e-6)
        assert stats.std == pytest.approx(0.0, abs=1e-6)

    def test_lifted_object(self, cube):
        stats = depth_error([(cube, at(z=1.0))], cube, [top_camera()])
        assert stats.median_abs == pytest.approx(1.0, abs=1e-6)

    def test_instance_filter(self, cube):
        scene = [(cube, at(x=-25.0)), (cube, at(x=25.0, z=2.0))]
        scan = cube.transformed(RigidTransform([1.0, 0.0, 0.0, 0.0], [-25.0, 0.0, 0.0]))
        camera = Camera.from_fov(64, 16, 60.0, look_at([0.0, 0.0, 100.0], [0.0, 0.0, 0.0], up=(0.0, 1.0, 0.0)))
        only_first = depth_residuals(scene, scan, [camera], instance_ids=[1])
        assert len(only_first) > 0
        assert np.abs(only_first).max() == pytest.approx(0.0, abs=1e-6)
        assert len(depth_residuals(scene, scan, [camera], instance_ids=[2])) == 0

    def test_no_overlap(self, cube):
        away = Camera.from_fov(16, 16, 30.0, look_at([0.0, 0.0, 100.0], [0.0, 0.0, 200.0]))
        with pytest.raises(NoValidPixels) as exc_info:
            depth_error([(cube, IDENTITY)], cube, [away])
        assert exc_info.value.exit_code == 3

    def test_needs_cameras(self, cube):
        with pytest.raises(ValueError):
            depth_error([(cube, IDENTITY)], cube, [])
