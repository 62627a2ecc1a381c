"""XML knowledge representation: worlds, rule documents and session snapshots.

One encoding serves the persistence layer and the wire protocol. Emission is
hand-rolled so output is byte-deterministic; parsing uses xml.etree with
external-entity and size guards.
"""

from __future__ import annotations

import hashlib
import xml.etree.ElementTree as ET
from dataclasses import replace
from typing import List, Optional, Tuple

from .errors import SchemaError, UnknownFrame, UntypedRemoteSlot, VersionUnsupported
from .model import (
    ACT_ASK,
    ACT_BACKWARD,
    ACT_EXTERN,
    ACT_QUERY,
    ACT_SPECIALIZE,
    Action,
    Binary,
    Call,
    Exists,
    Expr,
    FRAME_EXTERNAL,
    FRAME_FRAMESET,
    FRAME_LOCAL,
    FRAME_REMOTE,
    FrameDef,
    FrameWorld,
    Lit,
    ListExpr,
    QuerySpec,
    Rule,
    SlotDef,
    SlotRef,
    Specialize,
    Unary,
    WorldBuild,
    freeze_world,
)
from .values import Kind, Value, make_value

SCHEMA_VERSION = "1"
MAX_DOCUMENT_BYTES = 16 * 1024 * 1024


# ---------------------------------------------------------------------------
# Deterministic emitter
# ---------------------------------------------------------------------------

class Node:
    __slots__ = ("tag", "attrs", "children", "text")

    def __init__(self, tag: str, attrs: Optional[List[Tuple[str, str]]] = None,
                 children: Optional[List["Node"]] = None, text: Optional[str] = None):
        self.tag = tag
        self.attrs = attrs or []
        self.children = children or []
        self.text = text

    def add(self, child: "Node") -> "Node":
        self.children.append(child)
        return child


def _esc_text(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _esc_attr(s: str) -> str:
    return (_esc_text(s).replace('"', "&quot;").replace("\n", "&#10;")
            .replace("\t", "&#9;").replace("\r", "&#13;"))


def render(node: Node, indent: int = 0) -> str:
    pad = "  " * indent
    attrs = "".join(f' {k}="{_esc_attr(str(v))}"' for k, v in node.attrs)
    if node.children:
        inner = "\n".join(render(c, indent + 1) for c in node.children)
        return f"{pad}<{node.tag}{attrs}>\n{inner}\n{pad}</{node.tag}>"
    if node.text is not None:
        return f"{pad}<{node.tag}{attrs}>{_esc_text(node.text)}</{node.tag}>"
    return f"{pad}<{node.tag}{attrs}/>"


def parse_document(text: str) -> ET.Element:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    if len(text.encode("utf-8")) > MAX_DOCUMENT_BYTES:
        raise SchemaError("/", f"document exceeds {MAX_DOCUMENT_BYTES} bytes")
    if "<!DOCTYPE" in text or "<!ENTITY" in text:
        raise SchemaError("/", "doctype and entity declarations are rejected")
    try:
        return ET.fromstring(text)
    except ET.ParseError as e:
        raise SchemaError("/", f"not well-formed: {e}") from None


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------

_VALUE_TAGS = {"int", "str", "bool", "ref", "list", "unknown"}


def value_node(value: Value) -> Node:
    if value.kind is Kind.UNKNOWN:
        return Node("unknown")
    if value.kind is Kind.INTEGER:
        return Node("int", text=str(value.payload))
    if value.kind is Kind.BOOLEAN:
        return Node("bool", text="true" if value.payload else "false")
    if value.kind is Kind.STRING:
        return Node("str", text=value.payload)
    if value.kind is Kind.REFERENCE:
        return Node("ref", text=value.payload)
    children = [value_node(v) for v in value.payload]
    return Node("list", [("elem", value.elem.value)], children)


def value_from_element(el: ET.Element, path: str) -> Value:
    tag = el.tag
    text = el.text or ""
    if tag == "unknown":
        return Value(Kind.UNKNOWN)
    if tag == "int":
        try:
            return make_value(Kind.INTEGER, int(text))
        except Exception:
            raise SchemaError(path, f"bad integer {text!r}") from None
    if tag == "bool":
        if text not in ("true", "false"):
            raise SchemaError(path, f"bad boolean {text!r}")
        return make_value(Kind.BOOLEAN, text == "true")
    if tag == "str":
        return make_value(Kind.STRING, text)
    if tag == "ref":
        if not text:
            raise SchemaError(path, "empty reference")
        return make_value(Kind.REFERENCE, text)
    if tag == "list":
        elem = el.get("elem")
        if elem is None:
            raise SchemaError(path, "list value without elem attribute")
        items = [value_from_element(c, f"{path}/{c.tag}") for c in el]
        try:
            return make_value(Kind.LIST, items, Kind(elem))
        except Exception as e:
            raise SchemaError(path, str(e)) from None
    raise SchemaError(f"{path}/{tag}", "unknown value element")


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

_BIN_TAG = {"and": "and", "or": "or", "=": "eq", "<>": "ne", "<": "lt", "<=": "le",
            ">": "gt", ">=": "ge", "+": "add", "-": "sub", "*": "mul", "/": "div",
            "in": "in"}
_TAG_BIN = {v: k for k, v in _BIN_TAG.items()}


def expr_node(expr: Expr) -> Node:
    if isinstance(expr, Lit):
        return value_node(expr.value)
    if isinstance(expr, SlotRef):
        attrs = [("name", expr.name)]
        if expr.frame:
            attrs.append(("frame", expr.frame))
        return Node("slotref", attrs)
    if isinstance(expr, Unary):
        return Node("not" if expr.op == "not" else "neg", children=[expr_node(expr.operand)])
    if isinstance(expr, Binary):
        return Node(_BIN_TAG[expr.op], children=[expr_node(expr.left), expr_node(expr.right)])
    if isinstance(expr, Call):
        return Node("call", [("name", expr.name)], [expr_node(a) for a in expr.args])
    if isinstance(expr, Exists):
        return Node("exists", [("var", expr.var), ("root", expr.root)],
                    [expr_node(expr.condition)])
    if isinstance(expr, Specialize):
        return Node("specialize", [("root", expr.root)])
    if isinstance(expr, ListExpr):
        return Node("list", children=[expr_node(i) for i in expr.items])
    raise TypeError(f"cannot serialize expression {type(expr).__name__}")


def expr_from_element(el: ET.Element, path: str) -> Expr:
    tag = el.tag
    p = f"{path}/{tag}"
    if tag == "list" and el.get("elem") is None:
        return ListExpr(tuple(expr_from_element(c, p) for c in el))
    if tag in _VALUE_TAGS:
        return Lit(value_from_element(el, p))
    if tag == "slotref":
        name = el.get("name")
        if not name:
            raise SchemaError(p, "slotref without name")
        return SlotRef(name, frame=el.get("frame"))
    if tag in ("not", "neg"):
        kids = list(el)
        if len(kids) != 1:
            raise SchemaError(p, "unary operator needs exactly one operand")
        return Unary(tag, expr_from_element(kids[0], p))
    if tag in _TAG_BIN:
        kids = list(el)
        if len(kids) != 2:
            raise SchemaError(p, "binary operator needs exactly two operands")
        return Binary(_TAG_BIN[tag], expr_from_element(kids[0], p), expr_from_element(kids[1], p))
    if tag == "call":
        name = el.get("name")
        if not name:
            raise SchemaError(p, "call without name")
        return Call(name, tuple(expr_from_element(c, p) for c in el))
    if tag == "exists":
        var, root = el.get("var"), el.get("root")
        kids = list(el)
        if not var or not root or len(kids) != 1:
            raise SchemaError(p, "exists needs var, root and one condition")
        return Exists(var, root, expr_from_element(kids[0], p))
    if tag == "specialize":
        root = el.get("root")
        if not root:
            raise SchemaError(p, "specialize without root")
        return Specialize(root)
    raise SchemaError(p, "unknown expression element")


# ---------------------------------------------------------------------------
# Rules
# ---------------------------------------------------------------------------

def rule_node(rule: Rule) -> Node:
    node = Node("rule", [("slot", rule.target), ("kind", rule.direction)])
    if rule.condition is not None:
        node.add(Node("when", children=[expr_node(rule.condition)]))
    for slot, value in rule.assignments:
        node.add(Node("set", [("slot", slot)], [expr_node(value)]))
    return node


def rule_from_element(el: ET.Element, path: str) -> Rule:
    slot = el.get("slot")
    kind = el.get("kind", "backward")
    if not slot:
        raise SchemaError(path, "rule without slot")
    if kind not in ("backward", "forward"):
        raise SchemaError(path, f"bad rule kind {kind!r}")
    condition = None
    assignments = []
    for child in el:
        cp = f"{path}/{child.tag}"
        if child.tag == "when":
            kids = list(child)
            if len(kids) != 1:
                raise SchemaError(cp, "when needs exactly one expression")
            condition = expr_from_element(kids[0], cp)
        elif child.tag == "set":
            target = child.get("slot")
            kids = list(child)
            if not target or len(kids) != 1:
                raise SchemaError(cp, "set needs a slot and one expression")
            assignments.append((target, expr_from_element(kids[0], cp)))
        else:
            raise SchemaError(cp, "unknown rule element")
    if not assignments:
        raise SchemaError(path, "rule without assignments")
    try:
        return Rule(slot, tuple(assignments), condition, kind)
    except ValueError as e:
        raise SchemaError(path, str(e)) from None


# ---------------------------------------------------------------------------
# Worlds
# ---------------------------------------------------------------------------

def _slot_node(slot: SlotDef) -> Node:
    attrs = [("name", slot.name)]
    if slot.type is not None:
        attrs.append(("type", slot.type.value))
    if slot.elem is not None:
        attrs.append(("elem", slot.elem.value))
    if not slot.declared:
        attrs.append(("declared", "false"))
    node = Node("slot", attrs)
    if slot.default is not None:
        node.add(Node("default", children=[value_node(slot.default)]))
    for c in slot.constraints:
        node.add(Node("constraint", children=[expr_node(c)]))
    for action in slot.on_need:
        if action.kind == ACT_BACKWARD:
            node.add(rule_node(action.rule))
        elif action.kind == ACT_ASK:
            node.add(Node("ask", [("prompt", slot.prompt or "")]))
        elif action.kind == ACT_EXTERN:
            node.add(Node("call", [("name", action.extern_name),
                                   ("arity", str(action.extern_arity))]))
        elif action.kind == ACT_QUERY:
            q = action.query
            node.add(Node("query", [("table", q.table), ("column", q.column),
                                    ("where-column", q.where_column), ("op", q.op)],
                          [Node("where", children=[expr_node(q.where)])]))
        elif action.kind == ACT_SPECIALIZE:
            node.add(Node("specialize", [("root", action.specialize_root)]))
        else:
            raise TypeError(f"cannot serialize action kind {action.kind}")
    for action in slot.on_change:
        node.add(rule_node(action.rule))
    return node


def _frame_node(frame: FrameDef) -> Node:
    attrs = [("name", frame.name)]
    if frame.parent:
        attrs.append(("parent", frame.parent))
    if frame.kind != FRAME_LOCAL:
        attrs.append(("kind", frame.kind))
    if frame.url:
        attrs.append(("url", frame.url))
    if frame.table:
        attrs.append(("table", frame.table))
    if frame.key:
        attrs.append(("key", frame.key))
    if frame.adapter:
        attrs.append(("adapter", frame.adapter))
    if frame.rules_from:
        attrs.append(("rules-from", frame.rules_from))
    node = Node("frame", attrs)
    for slot in frame.slots.values():
        node.add(_slot_node(slot))
    return node


def world_to_xml(world: FrameWorld) -> str:
    """Serialize a frozen world. Output is deterministic: frames in
    declaration order, attributes in fixed order."""
    root = Node("frameworld", [("version", SCHEMA_VERSION)])
    for name, arity in world.externs.items():
        root.add(Node("extern", [("name", name), ("arity", str(arity))]))
    for frame_name in world.order:
        root.add(_frame_node(world.frames[frame_name]))
    return render(root)


def world_version(world: FrameWorld) -> str:
    return hashlib.sha256(world_to_xml(world).encode("utf-8")).hexdigest()


def _slot_from_element(el: ET.Element, path: str) -> SlotDef:
    name = el.get("name")
    if not name:
        raise SchemaError(path, "slot without name")
    type_attr = el.get("type")
    elem_attr = el.get("elem")
    slot = SlotDef(
        name,
        type=Kind(type_attr) if type_attr else None,
        elem=Kind(elem_attr) if elem_attr else None,
        declared=el.get("declared", "true") != "false",
    )
    on_need: List[Action] = []
    on_change: List[Action] = []
    constraints: List[Expr] = []
    for child in el:
        cp = f"{path}/{child.tag}"
        if child.tag == "default":
            kids = list(child)
            if len(kids) != 1:
                raise SchemaError(cp, "default needs exactly one value")
            slot.default = value_from_element(kids[0], cp)
        elif child.tag == "constraint":
            kids = list(child)
            if len(kids) != 1:
                raise SchemaError(cp, "constraint needs exactly one expression")
            constraints.append(expr_from_element(kids[0], cp))
        elif child.tag == "ask":
            slot.prompt = child.get("prompt", "")
            on_need.append(Action.ask())
        elif child.tag == "rule":
            rule = rule_from_element(child, cp)
            if rule.direction == "forward":
                on_change.append(Action.forward(rule))
            else:
                on_need.append(Action.backward(rule))
        elif child.tag == "call":
            arity = child.get("arity")
            if not child.get("name") or arity is None:
                raise SchemaError(cp, "call action needs name and arity")
            on_need.append(Action.extern(child.get("name"), int(arity)))
        elif child.tag == "query":
            table, column, where_col = child.get("table"), child.get("column"), child.get("where-column")
            kids = list(child)
            if not table or not column or not where_col or len(kids) != 1 or kids[0].tag != "where":
                raise SchemaError(cp, "query action needs table, column, where-column and a where")
            where_kids = list(kids[0])
            if len(where_kids) != 1:
                raise SchemaError(cp, "where needs exactly one expression")
            on_need.append(Action.query_value(QuerySpec(
                table, column, where_col, expr_from_element(where_kids[0], cp),
                child.get("op", "="))))
        elif child.tag == "specialize":
            root = child.get("root")
            if not root:
                raise SchemaError(cp, "specialize action without root")
            on_need.append(Action.specialize(root))
        else:
            raise SchemaError(cp, "unknown slot element")
    slot.constraints = tuple(constraints)
    slot.on_need = tuple(on_need)
    slot.on_change = tuple(on_change)
    return slot


def _frame_from_element(el: ET.Element, path: str) -> FrameDef:
    name = el.get("name")
    if not name:
        raise SchemaError(path, "frame without name")
    kind = el.get("kind", FRAME_LOCAL)
    if kind not in (FRAME_LOCAL, FRAME_REMOTE, FRAME_FRAMESET, FRAME_EXTERNAL):
        raise SchemaError(path, f"bad frame kind {kind!r}")
    frame = FrameDef(
        name,
        parent=el.get("parent"),
        kind=kind,
        url=el.get("url"),
        table=el.get("table"),
        key=el.get("key"),
        adapter=el.get("adapter"),
        rules_from=el.get("rules-from"),
    )
    slot_index = 0
    for child in el:
        if child.tag == "slot":
            slot_index += 1
            slot = _slot_from_element(child, f"{path}/slot[{slot_index}]")
            if slot.name in frame.slots:
                raise SchemaError(f"{path}/slot[{slot_index}]", f"slot {slot.name!r} repeated")
            frame.slots[slot.name] = slot
        else:
            raise SchemaError(f"{path}/{child.tag}", "unknown frame element")
    return frame


def world_from_xml(text: str) -> FrameWorld:
    root = parse_document(text)
    if root.tag != "frameworld":
        raise SchemaError(f"/{root.tag}", "expected frameworld root")
    version = root.get("version")
    if version != SCHEMA_VERSION:
        raise VersionUnsupported(version)
    build = WorldBuild()
    frame_index = 0
    for child in root:
        if child.tag == "extern":
            name, arity = child.get("name"), child.get("arity")
            if not name or arity is None:
                raise SchemaError("/frameworld/extern", "extern needs name and arity")
            build.declare_extern(name, int(arity))
        elif child.tag == "frame":
            frame_index += 1
            build.add_frame(_frame_from_element(child, f"/frameworld/frame[{frame_index}]"))
        else:
            raise SchemaError(f"/frameworld/{child.tag}", "unknown element")
    return freeze_world(build)


# ---------------------------------------------------------------------------
# Rule documents (remote rules, repository serving)
# ---------------------------------------------------------------------------

def rules_to_xml(frame: FrameDef) -> str:
    """Serialize every rule action of a frame into a transferable document."""
    root = Node("rules", [("frame", frame.name)])
    for _, action in frame.rule_actions():
        root.add(rule_node(action.rule))
    return render(root)


def parse_rules_document(text: str) -> List[Rule]:
    root = parse_document(text)
    if root.tag != "rules":
        raise SchemaError(f"/{root.tag}", "expected rules root")
    rules = []
    for i, child in enumerate(root, 1):
        if child.tag != "rule":
            raise SchemaError(f"/rules/{child.tag}", "unknown element")
        rules.append(rule_from_element(child, f"/rules/rule[{i}]"))
    return rules


def _infer_kind(expr: Expr) -> Optional[Tuple[Kind, Optional[Kind]]]:
    if isinstance(expr, Lit):
        if expr.value.kind is Kind.UNKNOWN:
            return None
        return expr.value.kind, expr.value.elem
    if isinstance(expr, Unary):
        return (Kind.BOOLEAN, None) if expr.op == "not" else (Kind.INTEGER, None)
    if isinstance(expr, Binary):
        if expr.op in ("and", "or", "=", "<>", "<", "<=", ">", ">=", "in"):
            return Kind.BOOLEAN, None
        return Kind.INTEGER, None
    if isinstance(expr, (Specialize, Exists)):
        return Kind.REFERENCE, None
    return None


def merge_rules(world: FrameWorld, rules_text: str, target_frame: str) -> FrameWorld:
    """Append remotely obtained rules to a frame, after its local actions.

    Rules for slots not declared anywhere along the static chain implicitly
    declare the slot, with the kind inferred from the value expression when
    decidable (UntypedRemoteSlot otherwise). Returns a new world; the input
    world is untouched.
    """
    if target_frame not in world.frames:
        raise UnknownFrame(target_frame)
    rules = parse_rules_document(rules_text)
    frames = dict(world.frames)
    frame = frames[target_frame]
    new_frame = FrameDef(frame.name, parent=frame.parent, kind=frame.kind, url=frame.url,
                         table=frame.table, key=frame.key, adapter=frame.adapter,
                         rules_from=frame.rules_from,
                         slots={n: replace(s) for n, s in frame.slots.items()})

    def declared_in_chain(slot_name: str) -> bool:
        cur = target_frame
        seen = set()
        while cur is not None and cur not in seen:
            seen.add(cur)
            fd = frames.get(cur)
            if fd is None:
                break
            entry = fd.slot(slot_name) if fd is not frame else new_frame.slot(slot_name)
            if entry is not None and entry.type is not None:
                return True
            cur = fd.parent
        return False

    for rule in rules:
        entry = new_frame.slots.get(rule.target)
        if entry is None:
            entry = SlotDef(rule.target, type=None, declared=False)
            if not declared_in_chain(rule.target):
                inferred = _infer_kind(rule.assignments[0][1])
                if inferred is None:
                    raise UntypedRemoteSlot(target_frame, rule.target)
                entry.type, entry.elem = inferred
            new_frame.slots[rule.target] = entry
        action = Action.forward(rule) if rule.direction == "forward" else Action.backward(rule)
        new_frame.slots[rule.target] = new_frame.slots[rule.target].with_action(action)
    frames[target_frame] = new_frame
    return FrameWorld(frames, world.order, dict(world.externs), base_dir=world.base_dir)


# ---------------------------------------------------------------------------
# Session snapshots
# ---------------------------------------------------------------------------

def snapshot_save(session) -> str:
    """Serialize a consultation so it can be restored later (possibly in a
    different process) with identical observable continuation."""
    root = Node("snapshot", [("version", SCHEMA_VERSION), ("world", session.base_world_version)])
    resolvers = root.add(Node("resolvers", [("default", session.default_resolver)]))
    for frame, rid in session.resolver_map.items():
        resolvers.add(Node("assign", [("frame", frame), ("resolver", rid)]))
    goals = root.add(Node("goals"))
    for frame, slot in session.root_goals:
        goals.add(Node("goal", [("frame", frame), ("slot", slot)]))
    memory = root.add(Node("memory"))
    for (frame, slot), value in session.wm.items():
        memory.add(Node("entry", [("frame", frame), ("slot", slot)], [value_node(value)]))
    q = session.pending_question
    if q is not None:
        attrs = [("id", q.id), ("frame", q.frame), ("slot", q.slot),
                 ("kind", q.kind.value), ("prompt", q.prompt)]
        if q.elem is not None:
            attrs.append(("elem", q.elem.value))
        pending = root.add(Node("pending", attrs))
        if q.choices:
            pending.add(Node("choices", children=[value_node(v) for v in q.choices]))
        if q.violations:
            pending.add(Node("violations",
                             children=[Node("violation", text=str(v)) for v in q.violations]))
    cache = root.add(Node("stubcache", [("hits", str(session.stub_cache.hits)),
                                        ("misses", str(session.stub_cache.misses))]))
    for (origin, frame, slot), value in session.stub_cache.entries.items():
        cache.add(Node("entry", [("origin", origin), ("frame", frame), ("slot", slot)],
                       [value_node(value)]))
    root.add(Node("counters", [(k, str(v)) for k, v in sorted(session.counters.items())]))
    trace = root.add(Node("trace"))
    for event in session.trace:
        trace.add(trace_event_node(event))
    return render(root)


def trace_event_node(event) -> Node:
    attrs = [("seq", str(event.seq)), ("kind", event.kind)]
    attrs.extend((k, str(v)) for k, v in event.payload.items())
    return Node("event", attrs)


def trace_to_xml(events) -> str:
    root = Node("trace")
    for event in events:
        root.add(trace_event_node(event))
    return render(root)


def snapshot_load(world: FrameWorld, text: str, **session_kwargs):
    """Rebuild a session from a snapshot. The world content hash must match
    the one recorded at save time (WorldVersionMismatch otherwise).

    Extern functions and external-object adapters are code, not state: the
    embedder re-registers them on the restored session before resuming."""
    from .engine import InferenceSession, Question, TraceEvent
    from .errors import WorldVersionMismatch

    root = parse_document(text)
    if root.tag != "snapshot":
        raise SchemaError(f"/{root.tag}", "expected snapshot root")
    if root.get("version") != SCHEMA_VERSION:
        raise VersionUnsupported(root.get("version"))
    recorded = root.get("world") or ""
    if recorded != world.version:
        raise WorldVersionMismatch(recorded, world.version)

    session = InferenceSession(world, **session_kwargs)
    for child in root:
        if child.tag == "resolvers":
            session.default_resolver = child.get("default", "first")
            for assign in child:
                session.resolver_map[assign.get("frame")] = assign.get("resolver")
        elif child.tag == "goals":
            for goal in child:
                session.root_goals.append((goal.get("frame"), goal.get("slot")))
        elif child.tag == "memory":
            for i, entry in enumerate(child, 1):
                kids = list(entry)
                if len(kids) != 1:
                    raise SchemaError(f"/snapshot/memory/entry[{i}]", "entry needs one value")
                session.wm[(entry.get("frame"), entry.get("slot"))] = \
                    value_from_element(kids[0], f"/snapshot/memory/entry[{i}]")
        elif child.tag == "pending":
            choices = []
            violations = []
            for sub in child:
                if sub.tag == "choices":
                    choices = [value_from_element(c, "/snapshot/pending/choices") for c in sub]
                elif sub.tag == "violations":
                    violations = [(v.text or "") for v in sub]
            elem = child.get("elem")
            session.pending_question = Question(
                id=child.get("id"), frame=child.get("frame"), slot=child.get("slot"),
                prompt=child.get("prompt", ""), kind=Kind(child.get("kind")),
                elem=Kind(elem) if elem else None,
                choices=tuple(choices), violations=tuple(violations))
        elif child.tag == "stubcache":
            session.stub_cache.hits = int(child.get("hits", "0"))
            session.stub_cache.misses = int(child.get("misses", "0"))
            for i, entry in enumerate(child, 1):
                kids = list(entry)
                session.stub_cache.entries[(entry.get("origin"), entry.get("frame"),
                                            entry.get("slot"))] = \
                    value_from_element(kids[0], f"/snapshot/stubcache/entry[{i}]")
        elif child.tag == "counters":
            for k, v in child.attrib.items():
                session.counters[k] = int(v)
        elif child.tag == "trace":
            for ev in child:
                payload = {k: v for k, v in ev.attrib.items() if k not in ("seq", "kind")}
                session.trace.append(TraceEvent(int(ev.get("seq")), ev.get("kind"), payload))
        else:
            raise SchemaError(f"/snapshot/{child.tag}", "unknown element")
    if session.trace:
        session._seq = max(e.seq for e in session.trace)
    return session
