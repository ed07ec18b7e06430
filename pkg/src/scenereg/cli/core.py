"""Builder turning typed pipeline functions into click commands"""

import inspect
import logging
import sys
from dataclasses import dataclass
from functools import wraps
from typing import Any, Callable, Dict, Optional, get_type_hints

import click

from ..config import RunConfig, dump_json, resolve_run_config
from .analyzer import describe_command
from .click_helpers import PipelineCommand, PipelineGroup, get_click_type, is_sequence, metavar_for
from .pydantic_utils import get_model_schema, get_pydantic_models_from_function

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"

# Options added for a parameter annotated with RunConfig
RUN_OPTIONS = ("config", "overrides", "seed", "threads")


@dataclass
class CommandOutcome:
    """JSON payload printed on stdout and the exit code of the command"""

    payload: Optional[dict]
    exit_code: int = 0


def configure_logging(verbose: int) -> None:
    level = logging.WARNING if verbose <= 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


class PipelineCli:
    """Collects command functions and exposes them as one click group"""

    def __init__(self, name: str = "scenereg", version: Optional[str] = None):
        """
        Args:
            name: Program name shown in help and schema output
            version: Application version
        """
        self.name = name
        self.version = version
        self.functions: Dict[str, Callable] = {}
        self.shortcuts: Dict[str, Dict[str, str]] = {}

        def root(verbose: int) -> None:
            if verbose:
                configure_logging(verbose)

        self.app = PipelineGroup(
            name=self.name,
            help=f"{self.name}: register objects into scans, supervise, evaluate and generate scenes",
            callback=root,
            params=[
                click.Option(["-v", "--verbose"], count=True, help="Log INFO (-v) or DEBUG (-vv) to stderr"),
            ],
        )
        if self.version:
            self.app = click.version_option(version=self.version, prog_name=self.name)(self.app)

    def register(
        self,
        func: Callable,
        name: Optional[str] = None,
        shortcuts: Optional[Dict[str, str]] = None,
    ) -> click.Command:
        """
        Register a function as a CLI command

        Every parameter becomes an option. A parameter annotated with
        RunConfig is resolved from ``--config``, ``--overrides``, ``--seed``
        and ``--threads``. The function returns a dict, a
        :class:`CommandOutcome` or None.

        Args:
            func: Function to register
            name: Command name (defaults to the function name with dashes)
            shortcuts: Dictionary mapping parameter names to short options
        """
        cmd_name = name or func.__name__.replace("_", "-")
        doc = describe_command(func)
        hints = get_type_hints(func)
        signature = inspect.signature(func)
        run_param = next((p for p in signature.parameters if hints.get(p) is RunConfig), None)

        self.functions[cmd_name] = func
        self.shortcuts[cmd_name] = dict(shortcuts or {})

        @wraps(func)
        def click_command(**kwargs):
            ctx = click.get_current_context()
            if run_param is not None:
                run_values = {key: kwargs.pop(key) for key in RUN_OPTIONS}
                kwargs[run_param] = resolve_run_config(
                    run_values["config"], run_values["overrides"], run_values["seed"], run_values["threads"]
                )
            for key, value in list(kwargs.items()):
                if isinstance(value, tuple):
                    kwargs[key] = list(value)

            result = func(**kwargs)
            outcome = result if isinstance(result, CommandOutcome) else CommandOutcome(result)
            if outcome.payload is not None:
                click.echo(dump_json(outcome.payload), nl=False)
            if outcome.exit_code:
                ctx.exit(outcome.exit_code)

        models = {
            model_name: get_model_schema(model)
            for model_name, model in get_pydantic_models_from_function(func).items()
        }
        command = PipelineCommand(
            name=cmd_name,
            callback=click_command,
            help=doc.summary,
            models=models,
            returns=doc.returns,
        )

        # Options applied to a Command instance keep their application order
        for param_name in signature.parameters:
            if param_name == run_param:
                self._add_run_options(command)
            else:
                self._add_parameter_to_command(
                    command,
                    signature.parameters[param_name],
                    hints.get(param_name, str),
                    doc.parameters.get(param_name, ""),
                    self.shortcuts[cmd_name],
                )

        self.app.add_command(command)
        return command

    def _add_parameter_to_command(
        self,
        command: click.Command,
        param: inspect.Parameter,
        annotation: Any,
        description: str,
        shortcuts: Dict[str, str],
    ) -> None:
        """Add one function parameter to a click command as an option"""
        has_default = param.default is not inspect.Parameter.empty
        default = param.default if has_default else None
        option_names = [f"--{param.name.replace('_', '-')}"]
        if param.name in shortcuts:
            option_names.insert(0, f"-{shortcuts[param.name]}")

        if annotation is bool:
            if default is True:
                dashed = param.name.replace("_", "-")
                option_names = [f"--{dashed}/--no-{dashed}"]
            decorator = click.option(
                *option_names,
                param.name,
                default=bool(default),
                is_flag=True,
                help=description,
            )
        else:
            multiple = is_sequence(annotation)
            decorator = click.option(
                *option_names,
                default=tuple(default) if multiple and default is not None else default,
                required=not has_default,
                type=get_click_type(annotation),
                multiple=multiple,
                help=description,
                show_default=default is not None and default != (),
                metavar=metavar_for(annotation),
            )
        decorator(command)

    @staticmethod
    def _add_run_options(command: click.Command) -> None:
        """Options shared by every pipeline command, resolved into one RunConfig"""
        for decorator in (
            click.option(
                "--config",
                type=click.Path(dir_okay=False),
                default=None,
                help="JSON run configuration (an optional 'defaults' section is applied first)",
            ),
            click.option(
                "--overrides",
                default=None,
                metavar="RunConfig",
                help="Config overrides as JSON, a Python dict or dotted assignments (icp.restarts=5)",
            ),
            click.option("--seed", type=click.INT, default=None, help="Run seed; wins over the config file"),
            click.option(
                "--threads",
                type=click.INT,
                default=None,
                help="Worker threads (default from SCENEREG_THREADS, else 1)",
            ),
        ):
            decorator(command)
