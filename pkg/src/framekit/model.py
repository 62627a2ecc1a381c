"""Frames, slots, rules and expression trees, plus the frame world registry.

A world is built mutably (`WorldBuild`), then frozen into an immutable
`FrameWorld` that validates the inheritance forest, parent resolution,
default typing and constraint well-formedness. Frozen worlds are safely
shareable between concurrent sessions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Tuple

from .errors import (
    DefaultTypeMismatch,
    DuplicateFrame,
    DynamicInheritanceCycle,
    EvalError,
    InheritanceCycle,
    TypeMismatch,
    UnknownFrame,
    UnknownParent,
    UnknownSlot,
    UnknownSlotInConstraint,
)
from .values import FALSE, TRUE, UNKNOWN, Kind, Value, kind_matches, make_value

PARENT_SLOT = "parent"  # reserved; implicitly a reference slot on every frame


# ---------------------------------------------------------------------------
# Expression trees
# ---------------------------------------------------------------------------

class Expr:
    """Base class for expression tree nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Lit(Expr):
    value: Value


@dataclass(frozen=True)
class SlotRef(Expr):
    name: str
    frame: Optional[str] = None  # qualifier: frame name or exists-variable


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "not" | "neg"
    operand: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # and or = <> < <= > >= + - * / in
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: Tuple[Expr, ...]


@dataclass(frozen=True)
class Exists(Expr):
    var: str
    root: str
    condition: Expr


@dataclass(frozen=True)
class Specialize(Expr):
    root: str


@dataclass(frozen=True)
class ListExpr(Expr):
    items: Tuple[Expr, ...]


def node_count(expr: Optional[Expr]) -> int:
    if expr is None:
        return 0
    if isinstance(expr, (Lit, SlotRef, Specialize)):
        return 1
    if isinstance(expr, Unary):
        return 1 + node_count(expr.operand)
    if isinstance(expr, Binary):
        return 1 + node_count(expr.left) + node_count(expr.right)
    if isinstance(expr, Call):
        return 1 + sum(node_count(a) for a in expr.args)
    if isinstance(expr, Exists):
        return 1 + node_count(expr.condition)
    if isinstance(expr, ListExpr):
        return 1 + sum(node_count(i) for i in expr.items)
    raise TypeError(f"not an expression node: {expr!r}")


def iter_slot_refs(expr: Optional[Expr]) -> Iterator[SlotRef]:
    if expr is None:
        return
    if isinstance(expr, SlotRef):
        yield expr
    elif isinstance(expr, Unary):
        yield from iter_slot_refs(expr.operand)
    elif isinstance(expr, Binary):
        yield from iter_slot_refs(expr.left)
        yield from iter_slot_refs(expr.right)
    elif isinstance(expr, Call):
        for a in expr.args:
            yield from iter_slot_refs(a)
    elif isinstance(expr, Exists):
        yield from iter_slot_refs(expr.condition)
    elif isinstance(expr, ListExpr):
        for i in expr.items:
            yield from iter_slot_refs(i)


# ---------------------------------------------------------------------------
# Rules and actions
# ---------------------------------------------------------------------------

BACKWARD = "backward"
FORWARD = "forward"


@dataclass(frozen=True)
class Rule:
    """One production rule attached to a slot.

    Backward rules have exactly one assignment targeting the slot that needs
    a value; forward rules trigger on assignment to `target` and may set any
    number of slots.
    """

    target: str
    assignments: Tuple[Tuple[str, Expr], ...]
    condition: Optional[Expr] = None
    direction: str = BACKWARD

    def __post_init__(self):
        if self.direction == BACKWARD:
            if len(self.assignments) != 1 or self.assignments[0][0] != self.target:
                raise ValueError("backward rule must have exactly one assignment to its target")
        elif not self.assignments:
            raise ValueError("forward rule needs at least one assignment")


def rule_complexity(rule: Rule) -> int:
    """Expression node count across the condition and every value expression."""
    return node_count(rule.condition) + sum(node_count(e) for _, e in rule.assignments)


ACT_BACKWARD = "backward_rule"
ACT_FORWARD = "forward_rule"
ACT_ASK = "ask_user"
ACT_EXTERN = "external_call"
ACT_QUERY = "query_value"
ACT_SPECIALIZE = "specialize"


@dataclass(frozen=True)
class QuerySpec:
    table: str
    column: str
    where_column: str
    where: Expr
    op: str = "="


@dataclass(frozen=True)
class Action:
    kind: str
    rule: Optional[Rule] = None
    extern_name: Optional[str] = None
    extern_arity: Optional[int] = None
    query: Optional[QuerySpec] = None
    specialize_root: Optional[str] = None

    @classmethod
    def backward(cls, rule: Rule) -> "Action":
        return cls(ACT_BACKWARD, rule=rule)

    @classmethod
    def forward(cls, rule: Rule) -> "Action":
        return cls(ACT_FORWARD, rule=rule)

    @classmethod
    def ask(cls) -> "Action":
        return cls(ACT_ASK)

    @classmethod
    def extern(cls, name: str, arity: int) -> "Action":
        return cls(ACT_EXTERN, extern_name=name, extern_arity=arity)

    @classmethod
    def query_value(cls, spec: QuerySpec) -> "Action":
        return cls(ACT_QUERY, query=spec)

    @classmethod
    def specialize(cls, root: str) -> "Action":
        return cls(ACT_SPECIALIZE, specialize_root=root)


# ---------------------------------------------------------------------------
# Slots and frames
# ---------------------------------------------------------------------------

@dataclass
class SlotDef:
    name: str
    type: Optional[Kind] = None  # None on implicitly introduced slots
    elem: Optional[Kind] = None
    default: Optional[Value] = None
    prompt: Optional[str] = None
    constraints: Tuple[Expr, ...] = ()
    on_need: Tuple[Action, ...] = ()
    on_change: Tuple[Action, ...] = ()
    declared: bool = True  # explicit `slot` declaration; shadows ancestors

    def with_action(self, action: Action) -> "SlotDef":
        if action.kind == ACT_FORWARD:
            return replace(self, on_change=self.on_change + (action,))
        return replace(self, on_need=self.on_need + (action,))


FRAME_LOCAL = "local"
FRAME_REMOTE = "remote"
FRAME_FRAMESET = "frameset"
FRAME_EXTERNAL = "external"
FRAME_MEMBER = "member"  # frameset member, session-materialized


@dataclass
class FrameDef:
    name: str
    parent: Optional[str] = None
    kind: str = FRAME_LOCAL
    url: Optional[str] = None          # remote stubs
    table: Optional[str] = None        # frameset declarations
    key: Optional[str] = None
    adapter: Optional[str] = None      # external-object frames
    rules_from: Optional[str] = None   # remote rule repository
    slots: Dict[str, SlotDef] = field(default_factory=dict)

    def slot(self, name: str) -> Optional[SlotDef]:
        return self.slots.get(name)

    def ensure_slot(self, name: str) -> SlotDef:
        """Return the named slot entry, creating an implicit one if needed."""
        entry = self.slots.get(name)
        if entry is None:
            entry = SlotDef(name, type=None, declared=False)
            self.slots[name] = entry
        return entry

    def own_constraints(self) -> List[Expr]:
        """Constraints declared on this frame, in declaration order.

        Each constraint is attached to every slot it mentions, so the global
        order is recovered by merging the per-slot sequences: emit whichever
        constraint heads every sequence it appears in.
        """
        pending = {name: list(s.constraints) for name, s in self.slots.items()
                   if s.constraints}
        out: List[Expr] = []
        while pending:
            for name in list(pending):
                head = pending[name][0]
                if all(seq[0] == head for seq in pending.values() if head in seq):
                    out.append(head)
                    for other in list(pending):
                        seq = pending[other]
                        if seq and seq[0] == head:
                            seq.pop(0)
                        if not seq:
                            del pending[other]
                    break
            else:
                # inconsistent per-slot orders (hand-built): first-seen fallback
                for seq in pending.values():
                    out.extend(c for c in seq if c not in out)
                break
        return out

    def rule_actions(self) -> List[Tuple[str, Action]]:
        out = []
        for slot in self.slots.values():
            for a in itertools.chain(slot.on_need, slot.on_change):
                if a.rule is not None:
                    out.append((slot.name, a))
        return out


# ---------------------------------------------------------------------------
# World: mutable build, frozen registry
# ---------------------------------------------------------------------------

@dataclass
class WorldBuild:
    frames: Dict[str, FrameDef] = field(default_factory=dict)
    order: List[str] = field(default_factory=list)
    externs: Dict[str, int] = field(default_factory=dict)
    base_dir: Optional[str] = field(default=None, compare=False)

    def add_frame(self, frame: FrameDef) -> "WorldBuild":
        if frame.name in self.frames:
            raise DuplicateFrame(frame.name)
        self.frames[frame.name] = frame
        self.order.append(frame.name)
        return self

    def declare_extern(self, name: str, arity: int) -> "WorldBuild":
        self.externs[name] = arity
        return self


def add_frame(world: WorldBuild, frame: FrameDef) -> WorldBuild:
    return world.add_frame(frame)


@dataclass
class FrameWorld:
    """Immutable (by convention) registry of validated frame definitions."""

    frames: Dict[str, FrameDef]
    order: Tuple[str, ...]
    externs: Dict[str, int]
    base_dir: Optional[str] = field(default=None, compare=False)
    _version: Optional[str] = field(default=None, compare=False, repr=False)

    def frame(self, name: str) -> FrameDef:
        try:
            return self.frames[name]
        except KeyError:
            raise UnknownFrame(name) from None

    def has_frame(self, name: str) -> bool:
        return name in self.frames

    def children(self, name: str) -> List[str]:
        return [f for f in self.order if self.frames[f].parent == name]

    def descendants(self, root: str) -> List[str]:
        """Proper descendants of `root`, depth-first pre-order, children in
        declaration order."""
        out: List[str] = []

        def visit(name):
            for child in self.children(name):
                out.append(child)
                visit(child)

        visit(root)
        return out

    @property
    def version(self) -> str:
        if self._version is None:
            from .interchange import world_version

            self._version = world_version(self)
        return self._version


def _check_default(frame: FrameDef, slot: SlotDef):
    if slot.default is None or slot.type is None:
        return
    if not kind_matches(slot.default, slot.type, slot.elem):
        raise DefaultTypeMismatch(frame.name, slot.name)


_CONSTRAINT_NODES = (Lit, SlotRef, Unary, Binary, ListExpr)


def _check_constraint_expr(frame: FrameDef, expr: Expr):
    if not isinstance(expr, _CONSTRAINT_NODES):
        raise UnknownSlotInConstraint(frame.name, type(expr).__name__)
    for ref in iter_slot_refs(expr):
        if ref.frame is not None:
            raise UnknownSlotInConstraint(frame.name, f"{ref.frame}.{ref.name}")
    if isinstance(expr, Unary):
        _check_constraint_expr(frame, expr.operand)
    elif isinstance(expr, Binary):
        _check_constraint_expr(frame, expr.left)
        _check_constraint_expr(frame, expr.right)
    elif isinstance(expr, ListExpr):
        for item in expr.items:
            _check_constraint_expr(frame, item)


def freeze_world(world) -> FrameWorld:
    """Validate and freeze a world build.

    Checks the static forest property, parent resolution, default typing and
    that constraints only reference slots present along the static chain.
    Freezing an already-frozen world returns an equal world (idempotent).
    """
    if isinstance(world, FrameWorld):
        return FrameWorld(dict(world.frames), tuple(world.order), dict(world.externs),
                          base_dir=world.base_dir)
    frames = world.frames
    for name, frame in frames.items():
        if frame.parent is not None and frame.parent not in frames:
            raise UnknownParent(name, frame.parent)
    for name in frames:
        seen = []
        cur = name
        while cur is not None:
            if cur in seen:
                raise InheritanceCycle(seen[seen.index(cur):] + [cur])
            seen.append(cur)
            cur = frames[cur].parent
    for frame in frames.values():
        for slot in frame.slots.values():
            _check_default(frame, slot)
            for c in slot.constraints:
                _check_constraint_expr(frame, c)
                for ref in iter_slot_refs(c):
                    if ref.name == PARENT_SLOT:
                        continue
                    if not any(lv.slot(ref.name) for lv in _static_chain(frames, frame.name)):
                        raise UnknownSlotInConstraint(frame.name, ref.name)
    return FrameWorld(dict(frames), tuple(world.order), dict(world.externs),
                      base_dir=world.base_dir)


def _static_chain(frames: Mapping[str, FrameDef], name: str) -> Iterator[FrameDef]:
    cur = name
    while cur is not None:
        frame = frames[cur]
        yield frame
        cur = frame.parent


# ---------------------------------------------------------------------------
# Chain walking
# ---------------------------------------------------------------------------

WorkingMemory = Mapping[Tuple[str, str], Value]

FrameResolver = Callable[[str], Optional[FrameDef]]
ParentResolver = Callable[[FrameDef], Optional[str]]


def walk_chain(resolve: FrameResolver, parent_of: ParentResolver, start: str) -> Iterator[FrameDef]:
    """Yield frames from `start` to the root, detecting dynamic cycles."""
    seen: List[str] = []
    cur: Optional[str] = start
    while cur is not None:
        if cur in seen:
            raise DynamicInheritanceCycle(seen[seen.index(cur):] + [cur])
        seen.append(cur)
        frame = resolve(cur)
        if frame is None:
            raise UnknownFrame(cur)
        yield frame
        cur = parent_of(frame)


def wm_parent_resolver(wm: Optional[WorkingMemory]) -> ParentResolver:
    def parent_of(frame: FrameDef) -> Optional[str]:
        if wm is not None:
            override = wm.get((frame.name, PARENT_SLOT))
            if override is not None and override.kind is Kind.REFERENCE:
                return override.payload
        return frame.parent

    return parent_of


def ancestry(world: FrameWorld, frame: str, working_memory: Optional[WorkingMemory] = None) -> List[str]:
    """Frames from `frame` to the root. A reference held in working memory for
    the reserved `parent` slot overrides the static parent from that frame
    upward."""
    return [f.name for f in walk_chain(world.frame, wm_parent_resolver(working_memory), frame)]


def slot_levels(resolve: FrameResolver, parent_of: ParentResolver, frame: str,
                slot: str) -> List[Tuple[FrameDef, SlotDef]]:
    """Chain entries for `slot`, nearest first.

    An explicit redeclaration takes full ownership of the slot: entries above
    the nearest declared one are shadowed (actions, constraints and default
    included). Implicit entries (created by rules, asks or constraints without
    a `slot` declaration) accumulate without cutting the chain.
    """
    levels: List[Tuple[FrameDef, SlotDef]] = []
    for fd in walk_chain(resolve, parent_of, frame):
        entry = fd.slot(slot)
        if entry is not None:
            levels.append((fd, entry))
            if entry.declared:
                break
    return levels


def slot_lookup(world: FrameWorld, frame: str, slot_name: str,
                working_memory: Optional[WorkingMemory] = None) -> Tuple[SlotDef, str]:
    """Nearest definition of a slot along the (dynamic) ancestry.

    Returns (slot def, defining frame name). The reserved `parent` slot is
    implicitly present on every frame.
    """
    levels = slot_levels(world.frame, wm_parent_resolver(working_memory), frame, slot_name)
    for fd, entry in levels:
        if entry.declared:
            return entry, fd.name
    if levels:
        return levels[0][1], levels[0][0].name
    if slot_name == PARENT_SLOT:
        return SlotDef(PARENT_SLOT, type=Kind.REFERENCE, declared=False), frame
    raise UnknownSlot(frame, slot_name)


def effective_type(world_resolve: FrameResolver, parent_of: ParentResolver, frame: str,
                   slot: str) -> Tuple[Optional[Kind], Optional[Kind]]:
    """Slot type as seen from `frame`: the nearest entry that carries a type."""
    if slot == PARENT_SLOT:
        return Kind.REFERENCE, None
    for _, entry in slot_levels(world_resolve, parent_of, frame, slot):
        if entry.type is not None:
            return entry.type, entry.elem
    return None, None


# ---------------------------------------------------------------------------
# Expression evaluation
#
# One evaluator serves rule conditions, rule values and constraint checks;
# the caller chooses how slot references resolve (working memory only for
# constraint gates, full inference in the engine) and may hook calls,
# existential search and specialization.
# ---------------------------------------------------------------------------

SlotReader = Callable[[Optional[str], str], Value]  # (qualifier, name) -> Value

_CMP_OPS = {"=", "<>", "<", "<=", ">", ">="}
_ARITH_OPS = {"+", "-", "*", "/"}


def _int_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def _as_bool(v: Value, what: str) -> Optional[bool]:
    if v.is_unknown():
        return None
    if v.kind is not Kind.BOOLEAN:
        raise EvalError(f"{what} is not boolean")
    return bool(v.payload)


def eval_expr(expr: Expr, read_slot: SlotReader,
              call_hook: Optional[Callable[[str, List[Value]], Value]] = None,
              exists_hook: Optional[Callable[[Exists], Value]] = None,
              specialize_hook: Optional[Callable[[str], Value]] = None) -> Value:
    """Evaluate an expression tree to a Value.

    Strict except `and`/`or`, which short-circuit left to right with
    three-valued logic; comparisons and arithmetic over Unknown operands yield
    Unknown. Cross-kind comparisons, division by zero and overflow raise
    EvalError.
    """

    def ev(node: Expr) -> Value:
        if isinstance(node, Lit):
            return node.value
        if isinstance(node, SlotRef):
            return read_slot(node.frame, node.name)
        if isinstance(node, ListExpr):
            items = [ev(i) for i in node.items]
            if any(v.is_unknown() for v in items):
                return UNKNOWN
            elem = None
            for i, v in enumerate(items):
                if v.kind not in (Kind.INTEGER, Kind.BOOLEAN, Kind.STRING):
                    raise EvalError(f"list element {i} is not scalar")
                if elem is None:
                    elem = v.kind
                elif v.kind is not elem:
                    raise EvalError(f"list element {i} has kind {v.kind}, expected {elem}")
            return Value(Kind.LIST, tuple(items), elem or Kind.STRING)
        if isinstance(node, Unary):
            v = ev(node.operand)
            if node.op == "not":
                b = _as_bool(v, "operand of not")
                return UNKNOWN if b is None else (FALSE if b else TRUE)
            if v.is_unknown():
                return UNKNOWN
            if v.kind is not Kind.INTEGER:
                raise EvalError("negation of a non-integer")
            return make_value(Kind.INTEGER, -v.payload)
        if isinstance(node, Binary):
            if node.op == "and":
                left = _as_bool(ev(node.left), "operand of and")
                if left is False:
                    return FALSE
                right = _as_bool(ev(node.right), "operand of and")
                if right is False:
                    return FALSE
                if left is None or right is None:
                    return UNKNOWN
                return TRUE
            if node.op == "or":
                left = _as_bool(ev(node.left), "operand of or")
                if left is True:
                    return TRUE
                right = _as_bool(ev(node.right), "operand of or")
                if right is True:
                    return TRUE
                if left is None or right is None:
                    return UNKNOWN
                return FALSE
            lv, rv = ev(node.left), ev(node.right)
            if lv.is_unknown() or rv.is_unknown():
                return UNKNOWN
            if node.op == "in":
                if rv.kind is not Kind.LIST:
                    raise EvalError("right operand of `in` is not a list")
                if rv.payload and lv.kind is not rv.elem:
                    raise EvalError(f"`in` over {rv.elem} list with {lv.kind} operand")
                return TRUE if any(item.payload == lv.payload and item.kind is lv.kind
                                   for item in rv.payload) else FALSE
            if node.op in _CMP_OPS:
                if lv.kind is not rv.kind:
                    raise EvalError(f"comparison across kinds {lv.kind} and {rv.kind}")
                if node.op == "=":
                    return TRUE if lv == rv else FALSE
                if node.op == "<>":
                    return TRUE if lv != rv else FALSE
                if lv.kind not in (Kind.INTEGER, Kind.STRING):
                    raise EvalError(f"ordering is not defined on {lv.kind}")
                a, b = lv.payload, rv.payload
                result = {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[node.op]
                return TRUE if result else FALSE
            if node.op in _ARITH_OPS:
                if lv.kind is not Kind.INTEGER or rv.kind is not Kind.INTEGER:
                    raise EvalError(f"arithmetic on {lv.kind} and {rv.kind}")
                a, b = lv.payload, rv.payload
                if node.op == "+":
                    n = a + b
                elif node.op == "-":
                    n = a - b
                elif node.op == "*":
                    n = a * b
                else:
                    if b == 0:
                        raise EvalError("division by zero")
                    n = _int_div(a, b)
                try:
                    return make_value(Kind.INTEGER, n)
                except TypeMismatch:
                    raise EvalError("integer overflow") from None
            raise EvalError(f"unknown operator {node.op!r}")
        if isinstance(node, Call):
            if call_hook is None:
                raise EvalError(f"unknown extern {node.name!r}")
            return call_hook(node.name, [ev(a) for a in node.args])
        if isinstance(node, Exists):
            if exists_hook is None:
                raise EvalError("existential search is not available in this context")
            return exists_hook(node)
        if isinstance(node, Specialize):
            if specialize_hook is None:
                raise EvalError("specialization is not available in this context")
            return specialize_hook(node.root)
        raise EvalError(f"cannot evaluate {type(node).__name__}")

    return ev(expr)


# ---------------------------------------------------------------------------
# Constraint checking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    frame: str
    expr: Expr

    def __str__(self):
        from .fmdl import format_expr

        return f"{self.frame}: constraint {format_expr(self.expr)}"


def check_constraints(world: FrameWorld, frame: str, slot: str, candidate: Value,
                      working_memory: Optional[WorkingMemory] = None,
                      resolve: Optional[FrameResolver] = None) -> List[Violation]:
    """Evaluate every constraint along the chain that mentions `slot`, with
    `candidate` substituted for it.

    Other slots resolve from working memory only; constraints whose operands
    are Unknown are satisfied (they gate what is known). Returns the list of
    violated constraints; empty means the assignment is acceptable.
    """
    wm = working_memory or {}
    resolve = resolve or world.frame

    def read(qualifier, name):
        if name == slot and qualifier is None:
            return candidate
        return wm.get((frame, name), UNKNOWN)

    violations: List[Violation] = []
    try:
        levels = slot_levels(resolve, wm_parent_resolver(wm), frame, slot)
    except (DynamicInheritanceCycle, UnknownFrame):
        return violations
    for fd, entry in levels:
        for c in entry.constraints:
            if not any(r.name == slot for r in iter_slot_refs(c)):
                continue
            try:
                outcome = eval_expr(c, read)
            except EvalError:
                continue  # malformed against current data: treat as not gating
            if outcome == FALSE:
                violations.append(Violation(fd.name, c))
    return violations
