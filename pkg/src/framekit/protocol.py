"""Wire protocol: one interchange-XML document per message, length-prefixed
by a 4-byte big-endian size, multiplexed with correlation ids.

Either peer may initiate requests on a connection (full duplex): a server
answering a slot query calls back to the origin session for the values the
rules read. Responses echo the request's correlation id.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

from .errors import ProtocolViolation
from .interchange import MAX_DOCUMENT_BYTES, Node, parse_document, render, value_from_element, value_node
from .values import Value

PROTOCOL_VERSION = "1"

MESSAGE_KINDS = ("hello", "get_slot", "slot_value", "get_rules", "rules",
                 "question", "answer", "error", "bye")

_RESERVED_ATTRS = ("kind", "id", "reply")


@dataclass
class Message:
    kind: str
    id: int
    reply: bool = False
    fields: Dict[str, str] = field(default_factory=dict)
    value: Optional[Value] = None
    choices: Tuple[Value, ...] = ()
    violations: Tuple[str, ...] = ()
    rules_doc: Optional[str] = None

    def encode(self) -> bytes:
        attrs: List[Tuple[str, str]] = [("kind", self.kind), ("id", str(self.id))]
        if self.reply:
            attrs.append(("reply", "true"))
        node = Node("message", attrs)
        if self.fields:
            node.add(Node("fields", sorted(self.fields.items())))
        if self.value is not None:
            node.add(Node("value", children=[value_node(self.value)]))
        if self.choices:
            node.add(Node("choices", children=[value_node(v) for v in self.choices]))
        if self.violations:
            node.add(Node("violations",
                          children=[Node("violation", text=t) for t in self.violations]))
        if self.rules_doc is not None:
            node.add(Node("rules-doc", text=self.rules_doc))
        body = render(node).encode("utf-8")
        if len(body) > MAX_DOCUMENT_BYTES:
            raise ProtocolViolation("message exceeds the maximum document size")
        return struct.pack(">I", len(body)) + body


def decode_message(body: bytes) -> Message:
    try:
        root = parse_document(body.decode("utf-8"))
    except Exception as e:
        raise ProtocolViolation(f"undecodable message: {e}") from None
    if root.tag != "message":
        raise ProtocolViolation(f"unexpected root element {root.tag!r}")
    kind = root.get("kind")
    if kind not in MESSAGE_KINDS:
        raise ProtocolViolation(f"unknown message kind {kind!r}")
    try:
        corr = int(root.get("id", ""))
    except ValueError:
        raise ProtocolViolation("missing or bad correlation id") from None
    msg = Message(kind, corr, reply=root.get("reply") == "true")
    for child in root:
        if child.tag == "fields":
            msg.fields = dict(child.attrib)
        elif child.tag == "value":
            kids = list(child)
            if len(kids) != 1:
                raise ProtocolViolation("value payload needs exactly one element")
            msg.value = value_from_element(kids[0], "/message/value")
        elif child.tag == "choices":
            msg.choices = tuple(value_from_element(c, "/message/choices") for c in child)
        elif child.tag == "violations":
            msg.violations = tuple((v.text or "") for v in child)
        elif child.tag == "rules-doc":
            msg.rules_doc = child.text or ""
        else:
            raise ProtocolViolation(f"unknown message element {child.tag!r}")
    return msg


class FrameDecoder:
    """Incremental length-prefixed frame decoder: chunking-independent."""

    def __init__(self):
        self._buffer = bytearray()

    def feed(self, data: bytes) -> Iterator[Message]:
        self._buffer.extend(data)
        while True:
            if len(self._buffer) < 4:
                return
            size = struct.unpack(">I", self._buffer[:4])[0]
            if size > MAX_DOCUMENT_BYTES:
                raise ProtocolViolation(f"frame of {size} bytes exceeds the limit")
            if len(self._buffer) < 4 + size:
                return
            body = bytes(self._buffer[4:4 + size])
            del self._buffer[:4 + size]
            yield decode_message(body)

    @property
    def pending_bytes(self) -> int:
        return len(self._buffer)
