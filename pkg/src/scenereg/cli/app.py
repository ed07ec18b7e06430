"""The ``scenereg`` executable"""

from .. import __version__
from .commands import add_pipeline_commands, add_schema_command
from .core import PipelineCli


def build_app() -> PipelineCli:
    cli = PipelineCli("scenereg", version=__version__)
    add_pipeline_commands(cli)
    add_schema_command(cli)
    return cli


app = build_app().app


def main() -> None:
    app.main(prog_name="scenereg")
