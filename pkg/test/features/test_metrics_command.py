import csv
import json

import allure
import pytest

FAST = "contact.samples_per_mm2=1.0,icp.restarts=1,icp.sample_count=500,recon.resolution=24,recon.sample_count=300"


@allure.feature("Metrics Command")
class TestMetricsCommand:
    """BDD tests for physical and reconstruction metrics of a manifest"""

    @allure.story("Contact and penetration of stacked objects")
    @allure.title("Given two stacked cubes, When contacts are measured, Then the touching faces are reported")
    def test_contacts(self, cli, scene_dir):
        with allure.step("When I run metrics --contacts on the stacked manifest"):
            result = cli(["metrics", "-m", scene_dir / "stacked.json", "--contacts", "--overrides", FAST])

        with allure.step("Then both touching faces count as contact"):
            assert result.exit_code == 0, result.stderr
            contacts = json.loads(result.stdout)["contacts"]
            assert contacts["contact_area_mm2"] == pytest.approx(800.0, rel=0.1)
            assert contacts["penetration_area_mm2"] < 10.0
            assert contacts["ratio_defined"]

    @allure.story("Scoring a scene against itself")
    @allure.title("Given the ground truth as prediction, When scored, Then IoU is 1 and depth error is 0")
    def test_self_evaluation(self, cli, scene_dir):
        with allure.step("When I score the manifest against itself with depth error"):
            manifest = scene_dir / "manifest.json"
            result = cli(["metrics", "-m", manifest, "--depth", "--recon", manifest, "--overrides", FAST])

        with allure.step("Then the reconstruction is perfect"):
            assert result.exit_code == 0, result.stderr
            report = json.loads(result.stdout)
            assert report["contacts"] is None
            assert report["recon"]["object_iou"] == pytest.approx(1.0, abs=1e-3)
            assert report["recon"]["scene_cd"] == pytest.approx(0.0, abs=1e-6)
            assert report["depth"]["pixel_count"] > 0
            assert report["depth"]["mean_abs_mm"] == pytest.approx(0.0, abs=1e-6)

    @allure.story("CSV tables")
    @allure.title("Given --csv, When metrics run, Then one table per metric family is written")
    def test_csv_tables(self, cli, scene_dir, tmp_path):
        with allure.step("When I request contact metrics as CSV"):
            tables = tmp_path / "tables"
            result = cli(
                ["metrics", "-m", scene_dir / "stacked.json", "--contacts", "--csv", tables, "--overrides", FAST]
            )

        with allure.step("Then contacts.csv carries the contact columns"):
            assert result.exit_code == 0, result.stderr
            assert sorted(p.name for p in tables.iterdir()) == ["contacts.csv"]
            with (tables / "contacts.csv").open(encoding="utf-8") as f:
                rows = list(csv.reader(f))
            assert rows[0] == ["scene", "C.Area", "P.Area", "Ratio"]
            assert rows[1][0] == "stacked"

    @allure.story("Usage errors")
    @allure.title("Given no metric flag or depth without cameras, When run, Then the command exits with 64")
    def test_usage_errors(self, cli, scene_dir):
        with allure.step("When metrics is called without anything to evaluate"):
            nothing = cli(["metrics", "-m", scene_dir / "stacked.json"])

        with allure.step("And depth error is requested for a manifest without cameras"):
            no_cameras = cli(["metrics", "-m", scene_dir / "stacked.json", "--depth"])

        with allure.step("Then both are usage errors"):
            assert nothing.exit_code == 64
            assert no_cameras.exit_code == 64
            assert "cameras" in no_cameras.stderr

    @allure.story("Invalid overrides")
    @allure.title("Given an override that fails validation, When run, Then the command exits with 64")
    def test_invalid_override(self, cli, scene_dir):
        result = cli(["metrics", "-m", scene_dir / "stacked.json", "--contacts", "--overrides", "contact.threshold=-1"])
        assert result.exit_code == 64
