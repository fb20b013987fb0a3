"""Canonical JSON encoding for state documents and store records.

Every object the store writes goes through :func:`canonical_serialize`, so
two documents are equal exactly when their bytes are equal. Keys are sorted
by code point, there is no insignificant whitespace, and numbers use the
shortest decimal form that round-trips.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any

#: Top-level sections every workflow state carries.
RESERVED_SECTIONS: dict[str, type] = {
    "messages": list,
    "tool_calls": list,
    "env": dict,
    "reasoning": list,
    "artifacts": dict,
}

# Integral floats inside this range are written as integers, so 1.0 and 1
# share one encoding.
_EXACT_INT_LIMIT = 2**53


class CanonicalError(ValueError):
    """A value cannot be represented in canonical form."""

    def __init__(self, path: str, reason: str):
        self.path = path
        super().__init__(f"{reason} at {path or '<root>'}")


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _encode_str(s: str, path: str) -> str:
    try:
        s.encode("utf-8")
    except UnicodeEncodeError:
        raise CanonicalError(path, "string is not valid UTF-8") from None
    return json.dumps(s, ensure_ascii=False)


def _encode_number(value: int | float, path: str) -> str:
    if isinstance(value, int):
        return str(value)
    if not math.isfinite(value):
        raise CanonicalError(path, f"non-finite number {value!r}")
    if value.is_integer() and abs(value) < _EXACT_INT_LIMIT:
        return str(int(value))
    # repr() of a float is the shortest string that round-trips.
    return repr(value)


def _encode(value: Any, path: str, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, (int, float)):
        out.append(_encode_number(value, path))
    elif isinstance(value, str):
        out.append(_encode_str(value, path))
    elif isinstance(value, dict):
        for key in value:
            if not isinstance(key, str):
                raise CanonicalError(path, f"non-string key {key!r}")
        out.append("{")
        for i, key in enumerate(sorted(value)):
            if i:
                out.append(",")
            sub = _join(path, key)
            try:
                key.encode("utf-8")
            except UnicodeEncodeError:
                raise CanonicalError(path, "key is not valid UTF-8") from None
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _encode(value[key], sub, out)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _encode(item, f"{path}[{i}]", out)
        out.append("]")
    else:
        raise CanonicalError(path, f"unsupported type {type(value).__name__}")


def canonical_serialize(state: Any) -> bytes:
    """Return the canonical UTF-8 bytes of a JSON-compatible value."""
    out: list[str] = []
    _encode(state, "", out)
    return "".join(out).encode("utf-8")


def _reject_duplicates(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    result: dict[str, Any] = {}
    for key, value in pairs:
        if key in result:
            raise ValueError(f"duplicate key {key!r}")
        result[key] = value
    return result


def _reject_constant(name: str) -> Any:
    raise ValueError(f"non-finite number {name}")


def parse(data: bytes | str) -> Any:
    """Parse JSON, rejecting duplicate keys and NaN/Infinity literals."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(
        data,
        object_pairs_hook=_reject_duplicates,
        parse_constant=_reject_constant,
    )


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def state_hash(state: Any) -> str:
    """SHA-256 of the canonical serialization, lowercase hex."""
    return sha256_hex(canonical_serialize(state))


def with_reserved_sections(state: dict[str, Any] | None) -> dict[str, Any]:
    """Copy ``state`` and add any missing reserved section as an empty value."""
    doc = dict(state or {})
    for name, kind in RESERVED_SECTIONS.items():
        if name not in doc:
            doc[name] = kind()
    return doc
