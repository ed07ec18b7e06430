"""Click framework helper utilities"""

import sys
from typing import Any, Literal, Optional, Union, get_args, get_origin

import click

from ..errors import EXIT_GENERIC, EXIT_IO, EXIT_USAGE, SceneRegError

NoneType = type(None)


class PipelineGroup(click.Group):
    """Command group that maps failures onto process exit codes"""

    def resolve_command(self, ctx, args):
        """Override to suggest the dashed spelling of a command"""
        cmd_name = args[0]
        cmd = self.commands.get(cmd_name)
        if cmd is None:
            dashed = cmd_name.replace("_", "-")
            if dashed != cmd_name and dashed in self.commands:
                ctx.fail(f"No such command '{cmd_name}'. Did you mean '{dashed}'?")
            ctx.fail(f"No such command '{cmd_name}'.")
        return cmd_name, cmd, args[1:]

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        """
        Run the command tree; usage errors exit 64, scenereg errors with
        their own code, file system errors 66
        """
        try:
            rv = super().main(
                args=args,
                prog_name=prog_name,
                complete_var=complete_var,
                standalone_mode=False,
                **extra,
            )
            code = rv if isinstance(rv, int) and not isinstance(rv, bool) else 0
        except click.UsageError as e:
            e.show()
            code = EXIT_USAGE
        except click.ClickException as e:
            e.show()
            code = e.exit_code
        except click.Abort:
            click.echo("Aborted!", err=True)
            code = EXIT_GENERIC
        except SceneRegError as e:
            click.echo(f"Error: {e}", err=True)
            code = e.exit_code
        except OSError as e:
            click.echo(f"Error: {e}", err=True)
            code = EXIT_IO
        if standalone_mode:
            sys.exit(code)
        return code


def unwrap_optional(annotation: Any) -> Any:
    if get_origin(annotation) is Union:
        args = [arg for arg in get_args(annotation) if arg is not NoneType]
        if len(args) == 1:
            return args[0]
    return annotation


def is_sequence(annotation: Any) -> bool:
    return get_origin(unwrap_optional(annotation)) in (list, tuple)


def element_type(annotation: Any) -> Any:
    annotation = unwrap_optional(annotation)
    if is_sequence(annotation):
        args = [arg for arg in get_args(annotation) if arg is not Ellipsis]
        return args[0] if args else str
    return annotation


def get_click_type(annotation: Any) -> Any:
    """Convert a Python type annotation to a Click type; sequences map to their element type"""
    inner = element_type(annotation)
    if get_origin(inner) is Literal:
        return click.Choice([str(choice) for choice in get_args(inner)])
    type_map = {
        int: click.INT,
        float: click.FLOAT,
        str: click.STRING,
        bool: click.BOOL,
    }
    return type_map.get(inner, click.STRING)


def get_param_type_string(click_type) -> str:
    """Convert Click type to schema type string"""
    if click_type == click.INT:
        return "integer"
    elif click_type == click.FLOAT:
        return "float"
    elif click_type == click.BOOL:
        return "boolean"
    elif isinstance(click_type, click.Choice):
        return "enum"
    return "string"


def metavar_for(annotation: Any) -> Optional[str]:
    inner = element_type(annotation)
    if get_origin(inner) is Literal:
        return None
    return getattr(inner, "__name__", None)


class PipelineCommand(click.Command):
    """Click command whose help lists the pydantic models it reads"""

    def __init__(self, *args, models: Optional[dict] = None, returns: str = "", **kwargs):
        super().__init__(*args, **kwargs)
        self.models = models or {}
        self.returns = returns

    def format_help(self, ctx, formatter):
        super().format_help(ctx, formatter)

        if self.returns:
            formatter.write("\n")
            with formatter.section("Returns"):
                formatter.write_text(self.returns)

        if self.models:
            formatter.write("\n")
            with formatter.section("Models"):
                for model_name, model_info in self.models.items():
                    formatter.write_text(f"{model_name}:")
                    if model_info.get("description"):
                        formatter.write_text(model_info["description"])
                    for field_name, field_info in model_info.get("fields", {}).items():
                        line = f"- {field_name} ({field_info['type']})"
                        if field_info.get("description"):
                            line += f": {field_info['description']}"
                        constraints = field_info.get("constraints", {})
                        if constraints:
                            line += " [" + ", ".join(f"{k} {v}" for k, v in constraints.items()) + "]"
                        formatter.write_text(line)
                    formatter.write_text("")
