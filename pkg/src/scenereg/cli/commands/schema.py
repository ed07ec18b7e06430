"""Schema command: command parameters and the JSON schemas of every file the CLI reads or writes"""

from typing import TYPE_CHECKING, Dict, Optional, Type

import click
from pydantic import BaseModel

from ...config import RunConfig, dump_json
from ...manifest import SceneManifest
from ...reports import REPORT_MODELS
from ...scenegen import ObjectCatalog
from ..click_helpers import get_param_type_string

if TYPE_CHECKING:
    from ..core import PipelineCli


def file_models() -> Dict[str, Type[BaseModel]]:
    return {"SceneManifest": SceneManifest, "RunConfig": RunConfig, "ObjectCatalog": ObjectCatalog, **REPORT_MODELS}


def add_schema_command(cli: "PipelineCli") -> None:
    """Add the built-in schema command to a PipelineCli instance"""

    @click.command(name="schema", help="Print command parameters and the JSON schemas of manifests, configs and reports")
    @click.option(
        "--format",
        "output_format",
        type=click.Choice(["json", "markdown"]),
        default="json",
        help="Output format",
    )
    @click.option(
        "--model",
        type=click.Choice(sorted(file_models())),
        default=None,
        help="Print only the JSON schema of this model",
    )
    def schema_command(output_format: str, model: Optional[str]):
        if model is not None:
            click.echo(dump_json(file_models()[model].model_json_schema()), nl=False)
            return
        schema = generate_schema(cli)
        if output_format == "json":
            click.echo(dump_json(schema), nl=False)
        else:
            click.echo(schema_to_markdown(schema))

    cli.app.add_command(schema_command)


def generate_schema(cli: "PipelineCli") -> dict:
    """Parameters of every registered command plus the file schemas"""
    return {
        "name": cli.name,
        "version": cli.version,
        "commands": {
            name: get_command_schema(command, cli.shortcuts.get(name, {}))
            for name, command in sorted(cli.app.commands.items())
            if name in cli.functions
        },
        "models": {name: model.model_json_schema() for name, model in file_models().items()},
    }


def get_command_schema(cmd: click.Command, shortcuts: Dict[str, str]) -> dict:
    """Get schema for a single command"""
    parameters = {}
    for param in cmd.params:
        if not isinstance(param, click.Option):
            continue
        param_schema = {
            "type": "boolean" if param.is_flag else get_param_type_string(param.type),
            "required": param.required,
            "default": list(param.default) if isinstance(param.default, tuple) else param.default,
            "help": param.help or "",
        }
        if isinstance(param.type, click.Choice):
            param_schema["choices"] = list(param.type.choices)
        if param.multiple:
            param_schema["multiple"] = True
        if param.name in shortcuts:
            param_schema["shortcut"] = shortcuts[param.name]
        parameters[param.name] = param_schema
    return {"description": cmd.help or "", "parameters": parameters}


def schema_to_markdown(schema: dict) -> str:
    """Convert the command part of the schema to Markdown"""
    lines = [f"# {schema['name']} CLI"]
    if schema.get("version"):
        lines.append(f"\nVersion: {schema['version']}")
    lines.append("\n## Commands")
    for cmd_name, cmd_info in schema["commands"].items():
        lines.append(f"\n### {cmd_name}\n\n{cmd_info['description']}\n")
        for param_name, param_info in cmd_info["parameters"].items():
            line = f"- `--{param_name.replace('_', '-')}`"
            if param_info.get("shortcut"):
                line += f" / `-{param_info['shortcut']}`"
            line += f" ({param_info['type']})"
            if param_info["required"]:
                line += " [required]"
            elif param_info.get("default") not in (None, False, []):
                line += f" - default: {param_info['default']}"
            lines.append(line)
            if param_info["help"]:
                lines.append(f"  - {param_info['help']}")
    lines.append("\n## File schemas\n")
    lines.extend(f"- {name}" for name in schema["models"])
    return "\n".join(lines)
