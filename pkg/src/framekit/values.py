"""Typed values: the datums that live in slots and working memory.

Scalar kinds are integer (64-bit signed), boolean and string; compound kinds
are reference (a frame name) and homogeneous lists of one scalar kind. The
distinguished `unknown` carries no payload. There is no implicit coercion
between kinds.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

from .errors import TypeMismatch

INT64_MIN = -(2 ** 63)
INT64_MAX = 2 ** 63 - 1


class Kind(str, Enum):
    INTEGER = "integer"
    BOOLEAN = "boolean"
    STRING = "string"
    REFERENCE = "reference"
    LIST = "list"
    UNKNOWN = "unknown"

    def __str__(self):
        return self.value


SCALAR_KINDS = (Kind.INTEGER, Kind.BOOLEAN, Kind.STRING)

Payload = Union[int, bool, str, Tuple["Value", ...], None]


@dataclass(frozen=True)
class Value:
    kind: Kind
    payload: Payload = None
    elem: Optional[Kind] = None  # element kind, lists only

    def is_unknown(self) -> bool:
        return self.kind is Kind.UNKNOWN

    def __str__(self):
        if self.kind is Kind.UNKNOWN:
            return "unknown"
        if self.kind is Kind.BOOLEAN:
            return "true" if self.payload else "false"
        if self.kind is Kind.STRING:
            return '"' + str(self.payload).replace("\\", "\\\\").replace('"', '\\"') + '"'
        if self.kind is Kind.LIST:
            return "[" + ", ".join(str(v) for v in self.payload) + "]"
        return str(self.payload)


UNKNOWN = Value(Kind.UNKNOWN)
TRUE = Value(Kind.BOOLEAN, True)
FALSE = Value(Kind.BOOLEAN, False)


def integer(n: int) -> Value:
    return make_value(Kind.INTEGER, n)


def boolean(b: bool) -> Value:
    return Value(Kind.BOOLEAN, bool(b))


def string(s: str) -> Value:
    return Value(Kind.STRING, s)


def reference(frame_name: str) -> Value:
    return Value(Kind.REFERENCE, frame_name)


def _check_scalar(kind: Kind, raw) -> Payload:
    if kind is Kind.INTEGER:
        # bool is an int subclass in Python; it is still a kind mismatch here
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise TypeMismatch(kind, raw)
        if not (INT64_MIN <= raw <= INT64_MAX):
            raise TypeMismatch(kind, raw)
        return raw
    if kind is Kind.BOOLEAN:
        if not isinstance(raw, bool):
            raise TypeMismatch(kind, raw)
        return raw
    if kind is Kind.STRING:
        if not isinstance(raw, str):
            raise TypeMismatch(kind, raw)
        return raw
    raise TypeMismatch(kind, raw)


def make_value(kind, raw, elem=None) -> Value:
    """Build a well-formed Value from a raw payload.

    No cross-kind coercion is applied: the string "4" is not an integer and
    `True` is not 1. List payloads are validated for homogeneity over `elem`
    and the offending index is reported on failure.
    """
    kind = Kind(kind)
    if kind is Kind.UNKNOWN:
        return UNKNOWN
    if kind is Kind.REFERENCE:
        if isinstance(raw, Value) and raw.kind is Kind.REFERENCE:
            return raw
        if not isinstance(raw, str) or not raw:
            raise TypeMismatch(kind, raw)
        return Value(Kind.REFERENCE, raw)
    if kind is Kind.LIST:
        if elem is None:
            raise TypeMismatch(kind, raw)
        elem = Kind(elem)
        if elem not in SCALAR_KINDS:
            raise TypeMismatch(kind, raw)
        if not isinstance(raw, (list, tuple)):
            raise TypeMismatch(kind, raw)
        items = []
        for i, item in enumerate(raw):
            if isinstance(item, Value):
                if item.kind is not elem:
                    raise TypeMismatch(elem, item, index=i)
                items.append(item)
                continue
            try:
                items.append(Value(elem, _check_scalar(elem, item)))
            except TypeMismatch:
                raise TypeMismatch(elem, item, index=i) from None
        return Value(Kind.LIST, tuple(items), elem)
    if isinstance(raw, Value):
        if raw.kind is not kind:
            raise TypeMismatch(kind, raw)
        return raw
    return Value(kind, _check_scalar(kind, raw))


def kind_matches(value: Value, kind: Optional[Kind], elem: Optional[Kind] = None) -> bool:
    """Check a value against a slot type. Unknown matches everything; a slot
    with no declared type (implicitly introduced) accepts everything."""
    if value.kind is Kind.UNKNOWN or kind is None:
        return True
    if value.kind is not kind:
        return False
    if kind is Kind.LIST and elem is not None:
        return value.elem is elem or not value.payload
    return True
