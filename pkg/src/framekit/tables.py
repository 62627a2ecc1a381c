"""Tabular data integration: framesets, frame generation and value queries.

Tables are RFC-4180-style delimited text with a header row. Cells type
themselves: digits parse as integers, true/false as booleans, anything else
stays a string; empty cells are unknown. Rows are pulled lazily and cached by
key, with a rows-read counter so laziness is observable.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .errors import (
    AmbiguousFrameName,
    DuplicateKey,
    MissingKeyColumn,
    NoMatchingRow,
    UnknownColumn,
)
from .model import (
    FRAME_FRAMESET,
    FRAME_LOCAL,
    FRAME_MEMBER,
    FrameDef,
    SlotDef,
    WorldBuild,
)
from .values import UNKNOWN, Kind, Value, make_value


def type_cell(text: str) -> Value:
    if text == "":
        return UNKNOWN
    if text == "true":
        return make_value(Kind.BOOLEAN, True)
    if text == "false":
        return make_value(Kind.BOOLEAN, False)
    body = text[1:] if text.startswith("-") else text
    if body.isdigit():
        try:
            return make_value(Kind.INTEGER, int(text))
        except Exception:
            return make_value(Kind.STRING, text)
    return make_value(Kind.STRING, text)


class TableSource:
    """One delimited file, scanned incrementally. Parsed rows are cached by
    the raw key text; `rows_read` counts data rows actually parsed."""

    def __init__(self, name: str, location: str, key: str):
        self.name = name
        self.location = location
        self.key = key
        self.rows_read = 0
        self._fh = open(location, newline="", encoding="utf-8")
        self._reader = csv.reader(self._fh)
        try:
            self.columns = next(self._reader)
        except StopIteration:
            self._fh.close()
            raise MissingKeyColumn(name, key) from None
        if key not in self.columns:
            self._fh.close()
            raise MissingKeyColumn(name, key)
        self._key_index = self.columns.index(key)
        self._rows: Dict[str, List[str]] = {}
        self._row_order: List[str] = []
        self._exhausted = False
        self._column_types: Optional[Dict[str, Kind]] = None

    def _advance(self) -> Optional[str]:
        """Parse one more row; returns its raw key or None at end of file."""
        if self._exhausted:
            return None
        try:
            row = next(self._reader)
        except StopIteration:
            self._exhausted = True
            self._fh.close()
            return None
        self.rows_read += 1
        row = row + [""] * (len(self.columns) - len(row))
        raw_key = row[self._key_index]
        if raw_key in self._rows:
            raise DuplicateKey(self.name, raw_key)
        self._rows[raw_key] = row
        self._row_order.append(raw_key)
        if self._column_types is None:
            self._column_types = {col: type_cell(cell).kind
                                  for col, cell in zip(self.columns, row)}
        return raw_key

    def row_by_key(self, raw_key: str) -> Optional[List[str]]:
        if raw_key in self._rows:
            return self._rows[raw_key]
        while True:
            got = self._advance()
            if got is None:
                return None
            if got == raw_key:
                return self._rows[raw_key]

    def scan_all(self) -> List[str]:
        while self._advance() is not None:
            pass
        return list(self._row_order)

    def column_type(self, column: str) -> Kind:
        if self._column_types is None:
            self._advance()
        if self._column_types is None:
            return Kind.STRING  # empty table
        return self._column_types.get(column, Kind.STRING)

    def typed_row(self, raw_key: str) -> Optional[Dict[str, Value]]:
        row = self.row_by_key(raw_key)
        if row is None:
            return None
        return {col: type_cell(cell) for col, cell in zip(self.columns, row)}


def bind_table(world: WorldBuild, location: str, key: str, name: str,
               parent: Optional[str] = None) -> WorldBuild:
    """Register a frameset: the table's rows become lazy member frames named
    `<name>_<key>` sharing `parent`. The header is validated now; rows are
    not touched until a member is accessed."""
    path = _resolve(world.base_dir, location)
    probe = TableSource(name, path, key)  # validates existence, header, key column
    probe._fh.close()
    world.add_frame(FrameDef(name, parent=parent, kind=FRAME_FRAMESET,
                             table=location, key=key))
    return world


def _resolve(base_dir: Optional[str], location: str) -> str:
    if os.path.isabs(location) or base_dir is None:
        return location
    return os.path.join(base_dir, location)


def table_for(session, ref: str) -> TableSource:
    """Table handle for a frameset name or a raw location, opened lazily and
    cached per session."""
    handle = session.tables.get(ref)
    if handle is not None:
        return handle
    fd = session.world.frames.get(ref)
    if fd is not None and fd.kind == FRAME_FRAMESET:
        location, key = fd.table, fd.key
    else:
        location, key = ref, None
    path = _resolve(session.base_dir, location)
    if key is None:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), None)
        if not header:
            raise MissingKeyColumn(ref, "<first column>")
        key = header[0]
    handle = TableSource(ref, path, key)
    session.tables[ref] = handle
    return handle


def try_materialize_member(session, name: str) -> Optional[FrameDef]:
    """Resolve `<frameset>_<key>` names to lazily built member frames."""
    for fs_name in session.world.order:
        fs = session.world.frames[fs_name]
        if fs.kind != FRAME_FRAMESET or not name.startswith(fs_name + "_"):
            continue
        raw_key = name[len(fs_name) + 1:]
        handle = table_for(session, fs_name)
        values = handle.typed_row(raw_key)
        if values is None:
            continue
        member = FrameDef(name, parent=fs_name, kind=FRAME_MEMBER, slots={
            col: SlotDef(col, type=handle.column_type(col), declared=True)
            for col in handle.columns
        })
        session.overlay[name] = member
        session._member_rows[name] = values
        return member
    return None


def materialize_all_members(session, fs: FrameDef) -> List[str]:
    handle = table_for(session, fs.name)
    names = []
    for raw_key in handle.scan_all():
        member_name = f"{fs.name}_{raw_key}"
        if member_name not in session.overlay:
            try_materialize_member(session, member_name)
        names.append(member_name)
    return names


def _matches(cell: Value, op: str, needle: Value) -> bool:
    if cell.is_unknown() or needle.is_unknown():
        return False
    if cell.kind is not needle.kind:
        return False
    if op == "=":
        return cell.payload == needle.payload
    if op == "<>":
        return cell.payload != needle.payload
    if cell.kind not in (Kind.INTEGER, Kind.STRING):
        return False
    a, b = cell.payload, needle.payload
    return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]


def _predicate(predicate) -> Tuple[str, str, Value]:
    if len(predicate) == 2:
        column, needle = predicate
        op = "="
    else:
        column, op, needle = predicate
    if not isinstance(needle, Value):
        needle = type_cell(str(needle))
    return column, op, needle


def query_value(session, table: str, column: str, predicate) -> Value:
    """Scalar/list query over a table: no match is unknown, one match is the
    cell value, several matches form a list in file order."""
    handle = table_for(session, table)
    where_col, op, needle = _predicate(predicate)
    if column not in handle.columns:
        raise UnknownColumn(table, column)
    if where_col not in handle.columns:
        raise UnknownColumn(table, where_col)
    hits: List[Value] = []
    for raw_key in handle.scan_all():
        row = handle.typed_row(raw_key)
        if _matches(row[where_col], op, needle):
            hits.append(row[column])
    if not hits:
        return UNKNOWN
    if len(hits) == 1:
        return hits[0]
    elem = hits[0].kind
    return make_value(Kind.LIST, hits, elem)


def generate_frame(session, table: str, predicate, frame_name: str) -> Value:
    """Create a frame from the first row matching the predicate. Unlike
    frameset members, generated frames live in the session overlay as plain
    local frames and can carry later-assigned rules."""
    if session.resolve_frame(frame_name) is not None:
        raise AmbiguousFrameName(frame_name)
    handle = table_for(session, table)
    where_col, op, needle = _predicate(predicate)
    if where_col not in handle.columns:
        raise UnknownColumn(table, where_col)
    for raw_key in handle.scan_all():
        row = handle.typed_row(raw_key)
        if _matches(row[where_col], op, needle):
            frame = FrameDef(frame_name, kind=FRAME_LOCAL, slots={
                col: SlotDef(col, type=row[col].kind if not row[col].is_unknown() else None,
                             declared=True)
                for col in handle.columns
            })
            session.overlay[frame_name] = frame
            for col, value in row.items():
                if not value.is_unknown():
                    session.wm[(frame_name, col)] = value
            return make_value(Kind.REFERENCE, frame_name)
    raise NoMatchingRow(table, f"{where_col} {op} {needle}")


@dataclass
class ExternalObjectAdapter:
    """Bridges an external object into a frame: slot reads call `reader`
    with the slot name; return None for slots the object does not expose."""

    id: str
    reader: callable
    writer: Optional[callable] = None

    def read(self, slot: str):
        return self.reader(slot)

    def write(self, slot: str, value):
        if self.writer is None:
            raise AttributeError("adapter is read-only")
        self.writer(slot, value)
