import json

import allure
import numpy as np
import pytest

FAST = "icp.restarts=1,icp.sample_count=800,icp.max_iterations=100,icp.convergence_tol=1e-9,recon.sample_count=300"


@allure.feature("Supervise Command")
class TestSuperviseCommand:
    """BDD tests for ground-truth pose supervision"""

    @allure.story("Prediction equals ground truth")
    @allure.title("Given identical manifests, When supervised, Then targets equal the poses and the loss vanishes")
    def test_identical_scenes(self, cli, scene_dir, tmp_path):
        with allure.step("Given the same manifest as prediction and ground truth"):
            manifest = scene_dir / "manifest.json"

        with allure.step("When I run supervise"):
            result = cli(
                ["supervise", "--pred", manifest, "--gt", manifest, "-o", tmp_path / "targets.json", "--overrides", FAST]
            )

        with allure.step("Then each object is its own target"):
            assert result.exit_code == 0, result.stderr
            report = json.loads(result.stdout)
            assert [(p["pred_id"], p["gt_id"]) for p in report["pairs"]] == [("part", "part")]
            assert report["unmatched_pred"] == [] and report["unmatched_gt"] == []
            np.testing.assert_allclose(report["pairs"][0]["pose"]["t"], [0.0, 0.0, 0.0], atol=1e-4)
            assert report["loss"]["total"] == pytest.approx(0.0, abs=1e-6)
            assert set(report["loss"]) == {"total", "L_cd", "L_t", "L_s", "L_ip"}
            assert (tmp_path / "targets.json").exists()

    @allure.story("Globally scaled prediction")
    @allure.title("Given a prediction with a global scale offset, When supervised, Then the offset is factored out")
    def test_scaled_prediction(self, cli, scene_dir):
        with allure.step("Given a prediction whose object is scaled about the origin by 1.05"):
            data = json.loads((scene_dir / "manifest.json").read_text(encoding="utf-8"))
            pose = data["objects"][0]["pose"]
            pose["t"] = [1.05 * v for v in pose["t"]]
            pose["sigma"] = 1.05
            pred = scene_dir / "pred.json"
            pred.write_text(json.dumps(data), encoding="utf-8")

        with allure.step("When I run supervise against the ground truth"):
            result = cli(["supervise", "--pred", pred, "--gt", scene_dir / "manifest.json", "--overrides", FAST])

        with allure.step("Then the global transform undoes the scale"):
            assert result.exit_code == 0, result.stderr
            report = json.loads(result.stdout)
            assert report["global_transform"]["sigma"] == pytest.approx(1 / 1.05, abs=0.01)
            assert report["pairs"][0]["target_pose"]["sigma"] == pytest.approx(1.0, abs=0.01)
