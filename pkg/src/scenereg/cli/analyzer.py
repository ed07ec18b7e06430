"""Help text for commands, pulled from their docstrings by func_analyzer"""

from typing import Callable, Dict, NamedTuple

from func_analyzer import analyze_function

__all__ = ["CommandDoc", "describe_command"]


class CommandDoc(NamedTuple):
    summary: str
    returns: str
    parameters: Dict[str, str]


def describe_command(func: Callable) -> CommandDoc:
    """
    Summary line, return description and per-parameter descriptions of a command function

    func_analyzer exposes only the return annotation, so the description comes
    from the docstring's Returns section and falls back to the annotation.
    """
    info = analyze_function(func)
    parameters = {param["name"]: param.get("description") or "" for param in info.get("parameters", [])}
    summary = info.get("summary") or (func.__doc__ or "").strip().split("\n")[0]
    returns = _returns_section(info.get("docstring") or func.__doc__ or "")
    if not returns:
        returns = _annotation_text(info.get("return_annotation"))
    return CommandDoc(summary, returns, parameters)


def _annotation_text(annotation) -> str:
    text = str(annotation or "")
    if not text or text == "None" or "inspect._empty" in text:
        return ""
    return "Type: " + text.replace("<class '", "").replace("'>", "")


def _returns_section(docstring: str) -> str:
    lines = []
    in_returns = False
    for line in docstring.split("\n"):
        stripped = line.strip()
        if stripped.startswith("Returns:"):
            in_returns = True
            continue
        if in_returns:
            if stripped.endswith(":") and not stripped.startswith("-"):
                break
            if stripped:
                lines.append(stripped)
    return " ".join(lines)
