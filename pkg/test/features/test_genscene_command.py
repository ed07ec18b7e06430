import json

import allure

SMALL = "scenegen.views_per_scene=1,scenegen.contact_density=0.1,render.width=16,render.height=12"


@allure.feature("Genscene Command")
class TestGensceneCommand:
    """BDD tests for synthetic scene generation"""

    @allure.story("Generate an easy scene")
    @allure.title("Given difficulty easy and count 1, When generated, Then one scene with manifest and views is written")
    def test_easy_scene(self, cli, tmp_path):
        with allure.step("When I generate one easy scene"):
            out = tmp_path / "scenes"
            result = cli(["genscene", "-o", out, "-d", "easy", "-n", "1", "--seed", "5", "--overrides", SMALL])

        with allure.step("Then the scene directory and the summary exist"):
            assert result.exit_code == 0, result.stderr
            report = json.loads(result.stdout)
            assert report["difficulties"] == ["easy"]
            assert report["failures"] == []
            assert [scene["name"] for scene in report["scenes"]] == ["easy_000"]
            assert report["summary"]["easy"]["scenes"] == 1
            assert json.loads((out / "summary.json").read_text(encoding="utf-8")) == report

        with allure.step("And the manifest can be evaluated"):
            manifest = out / "easy_000" / "manifest.json"
            assert (out / "easy_000" / "views" / "view_00.depth").exists()
            metrics = cli(["metrics", "-m", manifest, "--depth"])
            assert metrics.exit_code == 0, metrics.stderr
            assert json.loads(metrics.stdout)["depth"]["mean_abs_mm"] < 1e-6

    @allure.story("Invalid count")
    @allure.title("Given --count 0, When generated, Then the command exits with 64")
    def test_invalid_count(self, cli, tmp_path):
        result = cli(["genscene", "-o", tmp_path / "scenes", "-d", "easy", "-n", "0"])
        assert result.exit_code == 64

    @allure.story("Reproducible generation")
    @allure.title("Given the same --seed twice, When generated, Then the manifests are byte-identical")
    def test_same_seed_same_bytes(self, cli, tmp_path):
        with allure.step("When I generate the same medium scene twice, once with two threads"):
            args = ["genscene", "-d", "medium", "-n", "1", "--seed", "11", "--overrides", SMALL]
            first = cli(args + ["-o", tmp_path / "a"])
            second = cli(args + ["-o", tmp_path / "b", "--threads", "2"])
            assert first.exit_code == 0, first.stderr
            assert second.exit_code == 0, second.stderr

        with allure.step("Then the manifests and scans match byte for byte"):
            for name in ("manifest.json", "scan.obj"):
                a = (tmp_path / "a" / "medium_000" / name).read_bytes()
                assert a == (tmp_path / "b" / "medium_000" / name).read_bytes()

        with allure.step("And a different seed gives a different scene"):
            other = cli(args[:4] + ["--seed", "12", "--overrides", SMALL, "-o", tmp_path / "c"])
            assert other.exit_code == 0, other.stderr
            manifest = (tmp_path / "a" / "medium_000" / "manifest.json").read_bytes()
            assert (tmp_path / "c" / "medium_000" / "manifest.json").read_bytes() != manifest
