import json

import allure


@allure.feature("Schema Command")
class TestSchemaCommand:
    """BDD tests for the machine-readable description of the command line"""

    @allure.story("Commands and file schemas")
    @allure.title("Given the scenereg app, When schema runs, Then every command and file model is described")
    def test_full_schema(self, cli):
        with allure.step("When I run schema"):
            result = cli(["schema"])

        with allure.step("Then commands, their options and the file models are listed"):
            assert result.exit_code == 0
            schema = json.loads(result.stdout)
            assert schema["name"] == "scenereg"
            assert set(schema["commands"]) == {"register", "metrics", "supervise", "genscene", "mod"}
            register = schema["commands"]["register"]["parameters"]
            assert register["manifest"]["required"] is True
            assert register["manifest"]["shortcut"] == "m"
            assert register["stage"]["choices"] == ["full", "distance-only"]
            assert schema["commands"]["genscene"]["parameters"]["difficulty"]["multiple"] is True
            assert {"SceneManifest", "RunConfig", "ObjectCatalog", "RegistrationReport"} <= set(schema["models"])

    @allure.story("Single model")
    @allure.title("Given --model RunConfig, When schema runs, Then only that JSON schema is printed")
    def test_single_model(self, cli):
        result = cli(["schema", "--model", "RunConfig"])
        assert result.exit_code == 0
        schema = json.loads(result.stdout)
        assert schema["title"] == "RunConfig"
        assert "seed" in schema["properties"]

    @allure.story("Markdown output")
    @allure.title("Given --format markdown, When schema runs, Then a readable command reference is printed")
    def test_markdown(self, cli):
        result = cli(["schema", "--format", "markdown"])
        assert result.exit_code == 0
        assert "# scenereg CLI" in result.stdout
        assert "### register" in result.stdout
        assert "`--manifest` / `-m`" in result.stdout

    @allure.story("Command help")
    @allure.title("Given a command, When --help is shown, Then its docstring sections are included")
    def test_help(self, cli):
        result = cli(["register", "--help"])
        assert result.exit_code == 0
        assert "Register every object of a manifest" in result.stdout
        assert "Returns" in result.stdout
        assert "--overrides" in result.stdout

    @allure.story("Unknown command")
    @allure.title("Given an unknown command name, When invoked, Then a usage error is reported")
    def test_unknown_command(self, cli):
        result = cli(["register_all"])
        assert result.exit_code == 64
        assert "No such command" in result.stderr
