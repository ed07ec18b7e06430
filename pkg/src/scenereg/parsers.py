"""Flexible parser system for structured option values (config overrides)"""

import ast
import json
import re
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional

from .errors import ParseError


class ParserError(ParseError):
    """Raised when no parser accepts an input string"""


class Parser(ABC):
    """Abstract base class for parsers"""

    @abstractmethod
    def can_parse(self, input_string: str) -> bool:
        """Check if this parser can handle the input string"""

    @abstractmethod
    def parse(self, input_string: str) -> Any:
        """Parse the input string and return a Python object"""

    @property
    @abstractmethod
    def name(self) -> str:
        """Name of the parser"""

    @property
    def description(self) -> str:
        return ""


class JSONParser(Parser):
    """Standard JSON parser - the default"""

    @property
    def name(self) -> str:
        return "json"

    @property
    def description(self) -> str:
        return 'JSON object (e.g., {"registration": {"f_scale": 3.0}})'

    def can_parse(self, input_string: str) -> bool:
        try:
            return isinstance(json.loads(input_string), dict)
        except (json.JSONDecodeError, TypeError):
            return False

    def parse(self, input_string: str) -> Any:
        try:
            result = json.loads(input_string)
        except json.JSONDecodeError as e:
            raise ParserError(f"Invalid JSON: {e}")
        if not isinstance(result, dict):
            raise ParserError("Overrides must be an object")
        return result


class PythonParser(Parser):
    """Python dict literal parser using ast.literal_eval"""

    @property
    def name(self) -> str:
        return "python"

    @property
    def description(self) -> str:
        return "Python dict literal (e.g., {'seed': 3})"

    def can_parse(self, input_string: str) -> bool:
        try:
            return isinstance(ast.literal_eval(input_string), dict)
        except (ValueError, SyntaxError):
            return False

    def parse(self, input_string: str) -> Any:
        try:
            result = ast.literal_eval(input_string)
        except (ValueError, SyntaxError) as e:
            raise ParserError(f"Invalid Python literal: {e}")
        if not isinstance(result, dict):
            raise ParserError("Input must be a dict")
        return result


class DottedAssignmentParser(Parser):
    """Comma separated dotted assignments: ``registration.f_scale=3,seed=7``"""

    _assignment = re.compile(r"^\s*[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*\s*=")

    @property
    def name(self) -> str:
        return "dotted"

    @property
    def description(self) -> str:
        return "Dotted assignments (e.g., registration.f_scale=3.0,seed=7)"

    def can_parse(self, input_string: str) -> bool:
        parts = [p for p in input_string.split(",") if p.strip()]
        return bool(parts) and all(self._assignment.match(p) for p in parts)

    def parse(self, input_string: str) -> Any:
        result: Dict[str, Any] = {}
        for part in input_string.split(","):
            if not part.strip():
                continue
            if not self._assignment.match(part):
                raise ParserError(f"Not an assignment: '{part.strip()}'")
            key, raw = part.split("=", 1)
            path = key.strip().split(".")
            node = result
            for segment in path[:-1]:
                node = node.setdefault(segment, {})
                if not isinstance(node, dict):
                    raise ParserError(f"Conflicting assignment for '{key.strip()}'")
            node[path[-1]] = self._scalar(raw.strip())
        return result

    @staticmethod
    def _scalar(raw: str) -> Any:
        lowered = raw.lower()
        if lowered in ("true", "false"):
            return lowered == "true"
        if lowered in ("null", "none"):
            return None
        try:
            return json.loads(raw)
        except json.JSONDecodeError:
            return raw


class ParserRegistry:
    """Registry for managing multiple parsers"""

    def __init__(self):
        self._parsers: List[Parser] = []
        self._default_parser: Optional[Parser] = None

        self.register(JSONParser(), default=True)
        self.register(PythonParser())
        self.register(DottedAssignmentParser())

    def register(self, parser: Parser, default: bool = False) -> None:
        self._parsers.append(parser)
        if default or self._default_parser is None:
            self._default_parser = parser

    def get_parser(self, name: str) -> Optional[Parser]:
        for parser in self._parsers:
            if parser.name == name:
                return parser
        return None

    def parse(self, input_string: str, parser_name: Optional[str] = None) -> Any:
        """
        Parse input string using specified parser or auto-detect

        Args:
            input_string: The string to parse
            parser_name: Optional specific parser to use

        Returns:
            Parsed dictionary

        Raises:
            ParserError: If parsing fails
        """
        if parser_name:
            parser = self.get_parser(parser_name)
            if not parser:
                raise ParserError(f"Parser '{parser_name}' not found")
            return parser.parse(input_string)

        errors = []
        for parser in self._parsers:
            if parser.can_parse(input_string):
                try:
                    return parser.parse(input_string)
                except ParserError as e:
                    errors.append(f"{parser.name}: {e}")

        if self._default_parser:
            try:
                return self._default_parser.parse(input_string)
            except ParserError as e:
                errors.append(f"{self._default_parser.name} (default): {e}")

        error_msg = "Failed to parse input with any available parser:\n"
        error_msg += "\n".join(f"  - {error}" for error in errors)
        raise ParserError(error_msg)

    def list_parsers(self) -> List[Dict[str, Any]]:
        return [
            {
                "name": parser.name,
                "description": parser.description,
                "default": parser == self._default_parser,
            }
            for parser in self._parsers
        ]


_registry = ParserRegistry()


def parse(input_string: str, parser: Optional[str] = None) -> Any:
    """Parse input string using the global parser registry"""
    return _registry.parse(input_string, parser)


def list_parsers() -> List[Dict[str, Any]]:
    return _registry.list_parsers()
