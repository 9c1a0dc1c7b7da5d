"""Value algebra and records.

A Value is one of: int, float, str, pair (2-tuple of Values), or list of
Values.  Plain Python objects are used directly; a pair is a tuple and a
list is a list, so the two composite shapes stay distinguishable.  Hashing
and ordering go through a canonical byte encoding so results never depend
on PYTHONHASHSEED or on process identity.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from typing import Any, Optional, Union

Value = Union[int, float, str, tuple, list]

_TAG_INT = b"i"
_TAG_FLOAT = b"f"
_TAG_TEXT = b"t"
_TAG_PAIR = b"p"
_TAG_LIST = b"l"


def validate_value(v: Value) -> None:
    """Raise TypeError unless v is a well-formed Value.

    bool is rejected explicitly: it is an int subclass but not part of the
    algebra, and letting it through would make hashing ambiguous.
    """
    if isinstance(v, bool):
        raise TypeError("bool is not a Value")
    if isinstance(v, (int, float, str)):
        return
    if isinstance(v, tuple):
        if len(v) != 2:
            raise TypeError(f"pair must have exactly 2 elements, got {len(v)}")
        validate_value(v[0])
        validate_value(v[1])
        return
    if isinstance(v, list):
        for item in v:
            validate_value(item)
        return
    raise TypeError(f"not a Value: {type(v).__name__}")


def canon_bytes(v: Value) -> bytes:
    """Canonical byte encoding of a Value; injective over well-formed Values."""
    if isinstance(v, bool):
        raise TypeError("bool is not a Value")
    if isinstance(v, int):
        # variable-length two's-complement keeps big ints exact
        body = v.to_bytes((v.bit_length() + 8) // 8 or 1, "big", signed=True)
        return _TAG_INT + len(body).to_bytes(4, "big") + body
    if isinstance(v, float):
        if v == 0.0:
            v = 0.0  # fold -0.0 in, matching == on floats
        return _TAG_FLOAT + struct.pack(">d", v)
    if isinstance(v, str):
        body = v.encode("utf-8")
        return _TAG_TEXT + len(body).to_bytes(4, "big") + body
    if isinstance(v, tuple):
        return _TAG_PAIR + canon_bytes(v[0]) + canon_bytes(v[1])
    if isinstance(v, list):
        out = _TAG_LIST + len(v).to_bytes(4, "big")
        for item in v:
            out += canon_bytes(item)
        return out
    raise TypeError(f"not a Value: {type(v).__name__}")


def stable_hash(v: Value) -> int:
    """64-bit hash of a Value, stable across runs and processes."""
    digest = hashlib.blake2b(canon_bytes(v), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def value_to_json(v: Value) -> Any:
    """JSON-friendly form; pairs become {"p": [a, b]} to stay distinct from lists."""
    if isinstance(v, tuple):
        return {"p": [value_to_json(v[0]), value_to_json(v[1])]}
    if isinstance(v, list):
        return [value_to_json(item) for item in v]
    return v


def value_from_json(obj: Any) -> Value:
    if isinstance(obj, dict):
        if set(obj) != {"p"} or len(obj["p"]) != 2:
            raise ValueError(f"malformed pair object: {obj!r}")
        return (value_from_json(obj["p"][0]), value_from_json(obj["p"][1]))
    if isinstance(obj, list):
        return [value_from_json(item) for item in obj]
    if isinstance(obj, bool):
        raise ValueError("bool is not a Value")
    if isinstance(obj, (int, float, str)):
        return obj
    raise ValueError(f"not a Value: {obj!r}")


@dataclass(frozen=True)
class Record:
    """One data element: an optional key plus a payload Value."""

    key: Optional[Value]
    payload: Value

    @property
    def keyed(self) -> bool:
        return self.key is not None


def record_canon(r: Record) -> bytes:
    kb = b"\x00" if r.key is None else b"\x01" + canon_bytes(r.key)
    return kb + canon_bytes(r.payload)


def record_to_json(r: Record) -> Any:
    obj: dict[str, Any] = {"v": value_to_json(r.payload)}
    if r.key is not None:
        obj["k"] = value_to_json(r.key)
    return obj


def record_from_json(obj: Any) -> Record:
    if not isinstance(obj, dict) or "v" not in obj:
        raise ValueError(f"malformed record object: {obj!r}")
    key = value_from_json(obj["k"]) if "k" in obj else None
    return Record(key, value_from_json(obj["v"]))


def record_sort_key(r: Record) -> bytes:
    return record_canon(r)


def canon_json(obj: Any) -> str:
    """Deterministic JSON dump used everywhere outputs are compared."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
