"""
Structural Complexity Toolkit - JSON Serialization

Deterministic JSON encoding for reports, plans and run configs.
"""

from pathlib import Path
from typing import Any, Union

import orjson

_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


def _default(value: Any) -> Any:
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    if hasattr(value, "to_dict"):
        return value.to_dict()
    raise TypeError(f"Type is not JSON serializable: {type(value).__name__}")


def dumps(payload: Any) -> bytes:
    """Encode with sorted keys and a trailing newline, so equal inputs give equal bytes"""
    return orjson.dumps(payload, default=_default, option=_OPTIONS) + b"\n"


def loads(data: Union[bytes, str]) -> Any:
    return orjson.loads(data)


def write_json(path: Union[str, Path], payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(payload))
    return path


def read_json(path: Union[str, Path]) -> Any:
    return loads(Path(path).read_bytes())
