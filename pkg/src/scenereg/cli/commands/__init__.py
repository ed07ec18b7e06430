"""Commands added to every scenereg command line"""

from .pipeline import add_pipeline_commands
from .schema import add_schema_command

__all__ = ["add_pipeline_commands", "add_schema_command"]
