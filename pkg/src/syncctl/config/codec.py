"""
Text codec for configurations and reports: a JSON object model parsed with
the lark grammar in ``config.lark``. Serialization writes floats with 17
significant digits so that parse → serialize → parse is lossless.
"""

import json
import math
from enum import Enum
from typing import Any, List

import numpy as np
from lark.exceptions import (
    UnexpectedCharacters,
    UnexpectedEOF,
    UnexpectedInput,
    UnexpectedToken,
    VisitError,
)

from syncctl.config.parser import config_parser
from syncctl.config.transformer import ConfigTransformer
from syncctl.exceptions import ParseError

#: significant digits for every float written
FLOAT_DIGITS: int = 17


def format_float(value: float) -> str:
    """Round-trip-safe decimal text for a float."""
    text = format(float(value), f".{FLOAT_DIGITS}g")
    # keep a float marker so integral floats parse back as floats
    if "." not in text and "e" not in text:
        text += ".0"
    return text


def parse(text: str) -> Any:
    """Parse configuration text into Python objects."""
    if not text or not text.strip():
        raise ParseError("empty document", 1, 1)
    try:
        tree = config_parser.parse(text)
    except UnexpectedCharacters as err:
        raise ParseError(f"unexpected character {err.char!r}", err.line, err.column)
    except UnexpectedEOF as err:
        raise ParseError("unexpected end of input", err.line, err.column)
    except UnexpectedToken as err:
        if err.token.type == "$END":
            raise ParseError("unexpected end of input", err.line, err.column)
        raise ParseError(f"unexpected token {str(err.token)!r}", err.line, err.column)
    except UnexpectedInput as err:
        raise ParseError("malformed input", err.line, err.column)
    try:
        return ConfigTransformer().transform(tree)
    except VisitError as err:
        if isinstance(err.orig_exc, ParseError):
            raise err.orig_exc
        raise


def _quote(text: str) -> str:
    return json.dumps(text, ensure_ascii=False)


def _scalar(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        # JSON has no spelling for inf or nan
        return format_float(value) if math.isfinite(value) else "null"
    if isinstance(value, Enum):
        return _quote(str(value))
    if isinstance(value, str):
        return _quote(value)
    raise TypeError(f"cannot serialize value of type {type(value).__name__}")


def _encode(value: Any, indent: int, level: int, out: List[str]):
    pad = " " * (indent * (level + 1))
    close = " " * (indent * level)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        for i, (key, item) in enumerate(value.items()):
            out.append(f"{pad}{_quote(str(key))}: ")
            _encode(item, indent, level + 1, out)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(close + "}")
    elif isinstance(value, (list, tuple)):
        if not value:
            out.append("[]")
        elif all(not isinstance(item, (dict, list, tuple, np.ndarray)) for item in value):
            # flat lists of numbers stay on one line
            out.append("[" + ", ".join(_scalar(item) for item in value) + "]")
        else:
            out.append("[\n")
            for i, item in enumerate(value):
                out.append(pad)
                _encode(item, indent, level + 1, out)
                out.append(",\n" if i < len(value) - 1 else "\n")
            out.append(close + "]")
    else:
        out.append(_scalar(value))


def to_string(value: Any, indent: int = 2) -> str:
    """Serialize ``value`` (dicts, lists, numbers, strings, numpy arrays)."""
    out: List[str] = []
    _encode(value, indent, 0, out)
    out.append("\n")
    return "".join(out)
