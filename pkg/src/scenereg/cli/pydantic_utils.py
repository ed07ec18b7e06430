"""Utilities for describing the pydantic models a command reads"""

import inspect
from functools import lru_cache
from typing import Any, Callable, Dict, Literal, Type, Union, get_args, get_origin, get_type_hints

from pydantic import BaseModel
from pydantic.fields import FieldInfo


def is_pydantic_model(type_hint: Any) -> bool:
    """Check if a type hint is a Pydantic BaseModel"""
    try:
        return inspect.isclass(type_hint) and issubclass(type_hint, BaseModel)
    except TypeError:
        return False


def get_pydantic_models_from_function(func: Callable) -> Dict[str, Type[BaseModel]]:
    """Extract the Pydantic models used in a function's parameters (nested models included)"""
    models: Dict[str, Type[BaseModel]] = {}
    hints = get_type_hints(func)
    for name in inspect.signature(func).parameters:
        if name in hints:
            _collect_models_from_type(hints[name], models)
    return models


def _collect_models_from_type(type_hint: Any, models: Dict[str, Type[BaseModel]]) -> None:
    if is_pydantic_model(type_hint):
        if type_hint.__name__ in models:
            return
        models[type_hint.__name__] = type_hint
        for field_info in type_hint.model_fields.values():
            _collect_models_from_type(field_info.annotation, models)
    for arg in get_args(type_hint):
        _collect_models_from_type(arg, models)


@lru_cache(maxsize=128)
def get_model_schema(model: Type[BaseModel]) -> Dict[str, Any]:
    """Field-level description of a model used in command help"""
    schema = {"name": model.__name__, "description": inspect.getdoc(model) or "", "fields": {}}
    for field_name, field_info in model.model_fields.items():
        field_schema = {
            "type": _get_field_type_string(field_info.annotation),
            "required": field_info.is_required(),
            "description": field_info.description or "",
        }
        constraints = _get_field_constraints(field_info)
        if constraints:
            field_schema["constraints"] = constraints
        schema["fields"][field_name] = field_schema
    return schema


def _get_field_type_string(type_hint: Any) -> str:
    """Convert a type hint to a readable string"""
    if type_hint is type(None):
        return "None"
    if type_hint in (str, int, float, bool):
        return type_hint.__name__

    origin = get_origin(type_hint)
    if origin is Union:
        args = get_args(type_hint)
        non_none = [arg for arg in args if arg is not type(None)]
        if len(non_none) == 1 and len(args) == 2:
            return f"Optional[{_get_field_type_string(non_none[0])}]"
        return f"Union[{', '.join(_get_field_type_string(arg) for arg in args)}]"
    if origin is Literal:
        return f"Literal[{', '.join(repr(arg) for arg in get_args(type_hint))}]"
    if origin is not None:
        args = get_args(type_hint)
        name = getattr(origin, "__name__", str(origin))
        if args:
            return f"{name}[{', '.join(_get_field_type_string(arg) for arg in args)}]"
        return name
    return getattr(type_hint, "__name__", str(type_hint))


_CONSTRAINT_SYMBOLS = {"ge": ">=", "gt": ">", "le": "<=", "lt": "<", "min_length": "min length", "max_length": "max length"}


def _get_field_constraints(field_info: FieldInfo) -> Dict[str, Any]:
    """Extract numeric and length constraints stored in the field metadata"""
    constraints = {}
    for metadata in field_info.metadata:
        for attr, symbol in _CONSTRAINT_SYMBOLS.items():
            value = getattr(metadata, attr, None)
            if value is not None:
                constraints[symbol] = value
    return constraints
