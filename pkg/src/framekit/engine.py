"""Demand-driven inference over slot actions.

Backward chaining walks the (dynamic) ancestry of the origin frame and tries
each level's on-need actions in resolver order; assignments trigger forward
rules. Ancestor rules always read and write the origin's slots, which is what
makes the rule base polymorphic. A session is one consultation: working
memory, trace, counters and caches live here.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Tuple

from .errors import (
    AnswerTypeMismatch,
    CascadeLimitExceeded,
    ConnectError,
    ConstraintViolation,
    DynamicInheritanceCycle,
    EvalError,
    ExternArityMismatch,
    FramekitError,
    NoPendingQuestion,
    ReadOnlySlot,
    RemoteError,
    SchemaError,
    TypeMismatch,
    UnknownFrame,
    UnknownResolver,
    UnknownSlot,
    WireTimeout,
)
from .model import (
    ACT_ASK,
    ACT_BACKWARD,
    ACT_EXTERN,
    ACT_QUERY,
    ACT_SPECIALIZE,
    Action,
    Binary,
    Expr,
    FRAME_EXTERNAL,
    FRAME_FRAMESET,
    FRAME_MEMBER,
    FRAME_REMOTE,
    FrameDef,
    FrameWorld,
    Lit,
    ListExpr,
    PARENT_SLOT,
    SlotRef,
    check_constraints,
    eval_expr,
    rule_complexity,
)
from .values import FALSE, UNKNOWN, Kind, Value, kind_matches, make_value

# ---------------------------------------------------------------------------
# Conflict resolution plugins
# ---------------------------------------------------------------------------

POLICY_ALL = "all"
POLICY_FIRST = "first"


@dataclass(frozen=True)
class ConflictResolver:
    """Orders the candidate actions of one ancestry level.

    The ordering must be a permutation of a subset of the candidates: it may
    filter, it never invents. `forward_policy` decides whether one or all
    applicable on-change rules fire.
    """

    id: str
    order: Callable[[List[Action]], List[Action]]
    forward_policy: str = POLICY_ALL


def _order_identity(candidates: List[Action]) -> List[Action]:
    return list(candidates)


def _order_most_complex(candidates: List[Action]) -> List[Action]:
    rules = [a for a in candidates if a.kind == ACT_BACKWARD]
    others = [a for a in candidates if a.kind != ACT_BACKWARD]
    rules.sort(key=lambda a: -rule_complexity(a.rule))  # stable
    return rules + others


RESOLVERS: Dict[str, ConflictResolver] = {}


def register_resolver(resolver: ConflictResolver):
    RESOLVERS[resolver.id] = resolver


register_resolver(ConflictResolver("first", _order_identity))
register_resolver(ConflictResolver("complex", _order_most_complex))
register_resolver(ConflictResolver("fire-first", _order_identity, POLICY_FIRST))


def get_resolver(resolver_id: str) -> ConflictResolver:
    try:
        return RESOLVERS[resolver_id]
    except KeyError:
        raise UnknownResolver(resolver_id) from None


def select_actions(resolver, candidates: List[Action], session=None) -> List[Action]:
    """Order one level's candidate actions under a resolver (id or object)."""
    if isinstance(resolver, str):
        resolver = get_resolver(resolver)
    return resolver.order(list(candidates))


# ---------------------------------------------------------------------------
# Session plumbing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Question:
    id: str
    frame: str
    slot: str
    prompt: str
    kind: Kind
    elem: Optional[Kind] = None
    choices: Tuple[Value, ...] = ()
    violations: Tuple[str, ...] = ()


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    kind: str
    payload: Dict[str, str]


@dataclass(frozen=True)
class Outcome:
    status: str  # "resolved" | "unknown" | "suspended"
    value: Optional[Value] = None
    question: Optional[Question] = None

    @classmethod
    def of(cls, value: Value) -> "Outcome":
        if value.is_unknown():
            return cls("unknown", value=UNKNOWN)
        return cls("resolved", value=value)

    @classmethod
    def suspended(cls, question: Question) -> "Outcome":
        return cls("suspended", question=question)

    @property
    def resolved(self) -> bool:
        return self.status == "resolved"


class Suspend(Exception):
    """Internal unwinding signal: a question must reach the user."""

    def __init__(self, question: Question):
        self.question = question


class StubCache:
    """Per-session memo of resolved remote slot values (monotonic)."""

    def __init__(self):
        self.entries: Dict[Tuple[str, str, str], Value] = {}
        self.hits = 0
        self.misses = 0

    def get(self, origin: str, frame: str, slot: str) -> Optional[Value]:
        v = self.entries.get((origin, frame, slot))
        if v is None:
            self.misses += 1
        else:
            self.hits += 1
        return v

    def put(self, origin: str, frame: str, slot: str, value: Value):
        key = (origin, frame, slot)
        existing = self.entries.get(key)
        if existing is not None and existing != value:
            raise FramekitError(f"stub cache entry {key} changed within a session")
        self.entries[key] = value


_SKIP = "rule_skipped"


class InferenceSession:
    """Per-consultation working memory, goal stack, trace and caches.

    One session is a single logical thread of control; many sessions may share
    one frozen world concurrently.
    """

    def __init__(self, world: FrameWorld, base_dir: Optional[str] = None,
                 default_resolver: str = "first", network=None,
                 cascade_limit: int = 100, remote_origin: Optional[str] = None,
                 origin_proxy=None):
        self.world = world
        self.base_world_version = world.version
        self.base_dir = base_dir if base_dir is not None else world.base_dir
        self.default_resolver = default_resolver
        self.network = network
        self.cascade_limit = cascade_limit
        self.remote_origin = remote_origin  # set on server-side proxied runs
        self.origin_proxy = origin_proxy

        self.remote_origin_expected: Dict[str, Tuple[Optional[Kind], Optional[Kind]]] = {}
        self.wm: Dict[Tuple[str, str], Value] = {}
        self.overlay: Dict[str, FrameDef] = {}
        self.trace: List[TraceEvent] = []
        self.counters: Dict[str, int] = {
            "rules_fired": 0, "questions_asked": 0, "remote_calls": 0,
            "remote_rule_fetches": 0,
        }
        self.rule_fires_by_frame: Dict[str, int] = {}
        self.resolver_map: Dict[str, str] = {}
        self.root_goals: List[Tuple[str, str]] = []
        self.pending_question: Optional[Question] = None
        self.stub_cache = StubCache()
        self.tables: Dict[str, "object"] = {}
        self.adapters: Dict[str, "object"] = {}
        self.externs: Dict[str, Tuple[int, Callable]] = {}

        self._seq = 0
        self._goals: List[Tuple[str, str]] = []
        self._via: Dict[Tuple[str, str], str] = {}
        self._fetched_rules: set = set()
        self._member_rows: Dict[str, Dict[str, Value]] = {}
        self._parent_action_cache: Dict[str, bool] = {}
        self._broken_framesets: set = set()

    # -- bookkeeping ----------------------------------------------------------

    def emit(self, kind: str, **payload):
        self._seq += 1
        self.trace.append(TraceEvent(self._seq, kind, {k: str(v) for k, v in payload.items()}))

    def set_resolver(self, resolver_id: str, frame: Optional[str] = None):
        get_resolver(resolver_id)  # validate early
        if frame is None:
            self.default_resolver = resolver_id
        else:
            self.resolver_map[frame] = resolver_id

    def resolver_for(self, frame: str) -> ConflictResolver:
        return get_resolver(self.resolver_map.get(frame, self.default_resolver))

    def register_extern(self, name: str, arity: int, fn: Callable):
        declared = self.world.externs.get(name)
        if declared is None or declared != arity:
            raise ExternArityMismatch(name, declared, arity)
        self.externs[name] = (arity, fn)

    def register_adapter(self, frame: str, adapter):
        fd = self.resolve_frame(frame)
        if fd is None or fd.kind != FRAME_EXTERNAL:
            raise UnknownFrame(frame)
        self.adapters[frame] = adapter

    def _ensure_network(self):
        if self.network is None:
            from .node import SessionNet

            self.network = SessionNet()
        return self.network

    def close(self):
        if self.network is not None:
            self.network.close()

    # -- frame resolution -------------------------------------------------------

    def resolve_frame(self, name: str) -> Optional[FrameDef]:
        fd = self.world.frames.get(name)
        if fd is None:
            fd = self.overlay.get(name)
        if fd is None:
            from . import tables

            fd = tables.try_materialize_member(self, name)
        return fd

    def descendants(self, root: str) -> List[Tuple[str, int]]:
        """Proper descendants of `root` with depth, depth-first pre-order,
        children in declaration order. Frameset members are included (their
        frameset is materialized on demand)."""
        from . import tables

        for name in list(self.world.order):
            fd = self.world.frames[name]
            if fd.kind == FRAME_FRAMESET:
                try:
                    tables.materialize_all_members(self, fd)
                except (OSError, FramekitError) as e:
                    if name not in self._broken_framesets:
                        self._broken_framesets.add(name)
                        self.emit(_SKIP, frame=name, reason="frameset_unavailable",
                                  detail=e)
        names = list(self.world.order) + [n for n in self.overlay if n not in self.world.frames]
        by_parent: Dict[Optional[str], List[str]] = {}
        for n in names:
            fd = self.world.frames.get(n) or self.overlay[n]
            by_parent.setdefault(fd.parent, []).append(n)
        out: List[Tuple[str, int]] = []

        def visit(name, depth):
            for child in by_parent.get(name, ()):
                out.append((child, depth + 1))
                visit(child, depth + 1)

        visit(root, 0)
        return out

    def _declaration_index(self, name: str) -> int:
        try:
            return self.world.order.index(name)
        except ValueError:
            return len(self.world.order) + list(self.overlay).index(name)

    # -- ancestry with demand-driven parents -------------------------------------

    def _frame_has_parent_actions(self, name: str) -> bool:
        cached = self._parent_action_cache.get(name)
        if cached is not None:
            return cached
        result = False
        seen = set()
        cur = name
        while cur is not None and cur not in seen:
            seen.add(cur)
            fd = self.resolve_frame(cur)
            if fd is None or fd.kind == FRAME_REMOTE:
                break
            entry = fd.slot(PARENT_SLOT)
            if entry is not None and entry.on_need:
                result = True
                break
            cur = fd.parent
        self._parent_action_cache[name] = result
        return result

    def _dynamic_parent(self, fd: FrameDef) -> Optional[str]:
        held = self.wm.get((fd.name, PARENT_SLOT))
        if held is not None and held.kind is Kind.REFERENCE:
            return held.payload
        if (fd.name, PARENT_SLOT) not in self._goals and self._frame_has_parent_actions(fd.name):
            inferred = self._infer(fd.name, PARENT_SLOT)
            if inferred.kind is Kind.REFERENCE:
                return inferred.payload
        return fd.parent

    def _chain(self, start: str):
        """Yield local frame defs from `start` upward; a remote stub def is
        yielded last and terminates the walk (the remote side owns the rest)."""
        seen: List[str] = []
        cur: Optional[str] = start
        while cur is not None:
            if cur in seen:
                raise DynamicInheritanceCycle(seen[seen.index(cur):] + [cur])
            seen.append(cur)
            fd = self.resolve_frame(cur)
            if fd is None:
                raise UnknownFrame(cur)
            if fd.kind == FRAME_REMOTE:
                yield fd
                return
            fd = self._ensure_remote_rules(fd)
            yield fd
            cur = self._dynamic_parent(fd)

    def _ensure_remote_rules(self, fd: FrameDef) -> FrameDef:
        if not fd.rules_from or fd.name in self._fetched_rules:
            return fd
        self._fetched_rules.add(fd.name)
        self.counters["remote_rule_fetches"] += 1
        from .interchange import merge_rules

        try:
            document = self._ensure_network().fetch_rules(self, fd.rules_from, fd.name)
            self.world = merge_rules(self.world, document, fd.name)
            self._parent_action_cache.clear()
        except (ConnectError, RemoteError, SchemaError, WireTimeout, OSError):
            self.emit(_SKIP, frame=fd.name, reason="remote_rules_unreachable", url=fd.rules_from)
            return fd
        return self.world.frames[fd.name]

    # -- public operations ---------------------------------------------------------

    def infer(self, frame: str, slot: str) -> Outcome:
        """Resolve a slot of a frame: Resolved(value), Unknown or Suspended."""
        if not self.root_goals or self.root_goals[-1] != (frame, slot):
            self.root_goals.append((frame, slot))
        try:
            value = self._infer(frame, slot)
        except Suspend as s:
            self.pending_question = s.question
            return Outcome.suspended(s.question)
        self.pending_question = None
        return Outcome.of(value)

    def answer(self, question_id: str, raw) -> Outcome:
        """Apply the user's answer to the pending question and resume."""
        q = self.pending_question
        if q is None or q.id != question_id:
            raise NoPendingQuestion(question_id)
        try:
            value = raw if isinstance(raw, Value) else make_value(q.kind, raw, q.elem)
            if not kind_matches(value, q.kind, q.elem):
                raise TypeMismatch(q.kind, raw)
        except TypeMismatch:
            raise AnswerTypeMismatch(q.kind, raw) from None

        fd = self.resolve_frame(q.frame)
        if fd is not None and fd.kind == FRAME_REMOTE:
            violations = self._forward_answer(fd, q, value)
        else:
            violations = [str(v) for v in check_constraints(
                self.world, q.frame, q.slot, value, self.wm, resolve=self.resolve_frame)]
        if violations:
            self.pending_question = replace(q, violations=tuple(violations))
            self.emit("question_emitted", frame=q.frame, slot=q.slot, id=q.id,
                      reason="constraint_violation")
            raise ConstraintViolation(violations)

        self.emit("answer_received", frame=q.frame, slot=q.slot, id=q.id, value=value)
        if fd is None or fd.kind != FRAME_REMOTE:
            self._store(q.frame, q.slot, value, via="answer")
        self.pending_question = None
        goal_frame, goal_slot = self.root_goals[-1] if self.root_goals else (q.frame, q.slot)
        return self.infer(goal_frame, goal_slot)

    def _forward_answer(self, fd: FrameDef, q: Question, value: Value) -> List[str]:
        return self._ensure_network().send_answer(self, fd.url, q.frame, q.slot, value)

    def assign(self, frame: str, slot: str, raw) -> None:
        """Directly assign a slot value; constraints gate it, on-change rules
        then fire along the ancestry."""
        value = raw if isinstance(raw, Value) else _value_from_native(raw)
        kind, elem = self._effective_type(frame, slot)
        if not kind_matches(value, kind, elem):
            raise TypeMismatch(kind, raw)
        violations = check_constraints(self.world, frame, slot, value, self.wm,
                                       resolve=self.resolve_frame)
        if violations:
            raise ConstraintViolation([str(v) for v in violations])
        self._store(frame, slot, value, via="api")

    # -- the walk ---------------------------------------------------------------

    def _infer(self, frame: str, slot: str) -> Value:
        held = self.wm.get((frame, slot))
        if held is not None:
            return held
        if self.remote_origin is not None and frame == self.remote_origin:
            return self.origin_proxy.get_slot(self, slot)

        fd = self.resolve_frame(frame)
        if fd is None:
            raise UnknownFrame(frame)
        if fd.kind == FRAME_REMOTE:
            value, source = self._remote_level(fd, frame, slot, origin=frame)
            if not value.is_unknown():
                kind, elem = self._effective_type(frame, slot)
                if not kind_matches(value, kind, elem):
                    self.emit(_SKIP, frame=frame, slot=slot, reason="type_mismatch")
                    return UNKNOWN
                via = "default" if source == "default" else "remote"
                self._store(frame, slot, value, via=via, fire=(source != "default"))
                return value
            return UNKNOWN
        if fd.kind == FRAME_EXTERNAL and frame not in self.adapters:
            self.emit(_SKIP, frame=frame, slot=slot, reason="adapter_unregistered")
            return UNKNOWN
        if fd.kind == FRAME_EXTERNAL:
            return self._adapter_read(frame, slot)

        key = (frame, slot)
        if key in self._goals:
            return UNKNOWN  # cycle: prune this path
        self._goals.append(key)
        self.emit("goal_pushed", frame=frame, slot=slot)
        try:
            return self._run_levels(fd, frame, slot)
        except DynamicInheritanceCycle:
            self.emit(_SKIP, frame=frame, slot=slot, reason="dynamic_cycle")
            return UNKNOWN
        except UnknownFrame as e:
            # dangling dynamic parent: degrade, the consultation survives
            self.emit(_SKIP, frame=frame, slot=slot, reason="dangling_reference",
                      detail=str(e))
            return UNKNOWN
        finally:
            self._goals.pop()

    def infer_from(self, start: str, origin: str, slot: str) -> Value:
        """Walk for `slot` starting at `start`'s level, evaluating and storing
        against `origin`. This is how a serving instance continues a walk whose
        lower levels live on the requesting node."""
        held = self.wm.get((origin, slot))
        if held is not None:
            return held
        start_fd = self.resolve_frame(start)
        if start_fd is None:
            raise UnknownFrame(start)
        key = (origin, slot)
        if key in self._goals:
            return UNKNOWN
        self._goals.append(key)
        self.emit("goal_pushed", frame=origin, slot=slot)
        try:
            return self._run_levels(start_fd, origin, slot)
        except DynamicInheritanceCycle:
            self.emit(_SKIP, frame=origin, slot=slot, reason="dynamic_cycle")
            return UNKNOWN
        except UnknownFrame as e:
            self.emit(_SKIP, frame=origin, slot=slot, reason="dangling_reference",
                      detail=str(e))
            return UNKNOWN
        finally:
            self._goals.pop()

    def _run_levels(self, start_fd: FrameDef, origin: str, slot: str) -> Value:
        levels: List[Tuple[FrameDef, "SlotDef"]] = []
        stub: Optional[FrameDef] = None
        known = False
        for level_fd in self._chain(start_fd.name):
            if level_fd.kind == FRAME_REMOTE:
                stub = level_fd
                break
            if level_fd.kind == FRAME_MEMBER and level_fd.slot(slot) is not None:
                return self._member_read(level_fd, origin, slot)
            entry = level_fd.slot(slot)
            if entry is not None:
                known = True
                levels.append((level_fd, entry))
                if entry.declared:
                    break

        for level_fd, entry in levels:
            resolver = self.resolver_for(level_fd.name)
            for action in resolver.order(list(entry.on_need)):
                result = self._try_action(level_fd, entry, action, origin, slot)
                if result is not None:
                    return result

        remote_default: Optional[Value] = None
        if stub is not None:
            known = True
            value, source = self._remote_level(stub, stub.name, slot, origin=origin)
            if not value.is_unknown():
                kind, elem = self._effective_type(origin, slot)
                if not kind_matches(value, kind, elem):
                    self.emit(_SKIP, frame=origin, slot=slot, level=stub.name,
                              reason="type_mismatch")
                elif source == "default":
                    remote_default = value
                else:
                    self._store(origin, slot, value, via="remote")
                    return value
        for level_fd, entry in levels:
            if entry.default is not None:
                self._store(origin, slot, entry.default, via="default", fire=False)
                return entry.default
        if remote_default is not None:
            self._store(origin, slot, remote_default, via="default", fire=False)
            return remote_default
        if slot == PARENT_SLOT:
            return make_value(Kind.REFERENCE, start_fd.parent) if start_fd.parent else UNKNOWN
        if not known:
            raise UnknownSlot(origin, slot)
        return UNKNOWN

    def _try_action(self, level_fd: FrameDef, entry, action: Action, origin: str,
                    slot: str) -> Optional[Value]:
        where = dict(frame=origin, slot=slot, level=level_fd.name,
                     index=entry.on_need.index(action))
        if action.kind == ACT_BACKWARD:
            rule = action.rule
            self.emit("rule_tried", **where)
            try:
                if rule.condition is not None:
                    cond = self.eval(rule.condition, origin)
                    if cond.is_unknown():
                        self.emit(_SKIP, reason="condition_unknown", **where)
                        return None
                    if cond.kind is not Kind.BOOLEAN:
                        raise EvalError("condition is not boolean")
                    if not cond.payload:
                        self.emit(_SKIP, reason="condition_false", **where)
                        return None
                value_expr = rule.assignments[0][1]
                value = self.eval(value_expr, origin)
            except EvalError as e:
                self.emit(_SKIP, reason="eval_error", detail=e.reason, **where)
                return None
            if value.is_unknown() and not isinstance(value_expr, Lit):
                self.emit(_SKIP, reason="value_unknown", **where)
                return None
            if not self._accept(origin, slot, value, where):
                return None
            self.counters["rules_fired"] += 1
            self.rule_fires_by_frame[level_fd.name] = \
                self.rule_fires_by_frame.get(level_fd.name, 0) + 1
            self.emit("rule_fired", **where)
            self._store(origin, slot, value, via="rule")
            return value
        if action.kind == ACT_ASK:
            self._ask(origin, slot, entry.prompt or f"Value of {slot}?", level_fd.name)
            return None  # unreachable: _ask raises
        if action.kind == ACT_EXTERN:
            try:
                value = self._call_extern(action.extern_name, [])
            except EvalError as e:
                self.emit(_SKIP, reason="eval_error", detail=e.reason, **where)
                return None
            if value.is_unknown() or not self._accept(origin, slot, value, where):
                return None
            self.emit("rule_fired", action="external_call", **where)
            self._store(origin, slot, value, via="extern")
            return value
        if action.kind == ACT_QUERY:
            from . import tables

            try:
                needle = self.eval(action.query.where, origin)
                value = tables.query_value(self, action.query.table, action.query.column,
                                           (action.query.where_column, action.query.op, needle))
            except (EvalError, FramekitError) as e:
                self.emit(_SKIP, reason="eval_error", detail=str(e), **where)
                return None
            if value.is_unknown() or not self._accept(origin, slot, value, where):
                return None
            self.emit("rule_fired", action="query_value", **where)
            self._store(origin, slot, value, via="table")
            return value
        if action.kind == ACT_SPECIALIZE:
            value = self.specify_frame(origin, action.specialize_root)
            if value.is_unknown() or not self._accept(origin, slot, value, where):
                return None
            self.emit("rule_fired", action="specialize", **where)
            self._store(origin, slot, value, via="rule")
            return value
        raise FramekitError(f"unexpected on-need action kind {action.kind}")

    def _accept(self, origin: str, slot: str, value: Value, where: dict) -> bool:
        fd = self.resolve_frame(origin)
        if fd is not None and fd.kind == FRAME_MEMBER and fd.slot(slot) is not None:
            self.emit(_SKIP, reason="read_only_slot", **where)
            return False
        kind, elem = self._effective_type(origin, slot)
        if not kind_matches(value, kind, elem):
            self.emit(_SKIP, reason="type_mismatch", **where)
            return False
        violations = check_constraints(self.world, origin, slot, value, self.wm,
                                       resolve=self.resolve_frame)
        if violations:
            self.emit(_SKIP, reason="constraint_violation", **where)
            return False
        return True

    def _effective_type(self, frame: str, slot: str) -> Tuple[Optional[Kind], Optional[Kind]]:
        """Slot type as seen from `frame`. Types are static schema knowledge,
        so the lookup walks through remote stubs structurally (stubs generated
        from a shared tree carry the declared types)."""
        if slot == PARENT_SLOT:
            return Kind.REFERENCE, None
        if self.remote_origin is not None and frame == self.remote_origin:
            announced = self.remote_origin_expected.get(slot)
            if announced is not None and announced != (None, None):
                return announced
        from .model import slot_levels, wm_parent_resolver

        try:
            for _fd, entry in slot_levels(self.resolve_frame, wm_parent_resolver(self.wm),
                                          frame, slot):
                if entry.type is not None:
                    return entry.type, entry.elem
        except (DynamicInheritanceCycle, UnknownFrame):
            pass
        return None, None

    # -- questions -----------------------------------------------------------------

    def make_question(self, frame: str, slot: str, prompt: str, kind: Optional[Kind],
                      elem: Optional[Kind] = None, choices: Tuple[Value, ...] = ()) -> Question:
        """Mint a question with a deterministic id; the trace and the asked
        counter advance. Used for local asks and for questions propagated from
        remote instances."""
        self.counters["questions_asked"] += 1
        question = Question(
            id=f"q{self.counters['questions_asked']}",
            frame=frame, slot=slot, prompt=prompt,
            kind=kind or Kind.STRING, elem=elem, choices=tuple(choices),
        )
        self.emit("question_emitted", frame=frame, slot=slot, id=question.id)
        return question

    def _ask(self, origin: str, slot: str, prompt: str, level_frame: Optional[str] = None):
        kind, elem = self._effective_type(origin, slot)
        if kind is None and level_frame is not None:
            kind, elem = self._effective_type(level_frame, slot)
        raise Suspend(self.make_question(origin, slot, prompt, kind, elem,
                                         tuple(self._choices(origin, slot))))

    def _choices(self, origin: str, slot: str) -> List[Value]:
        from .model import slot_levels, wm_parent_resolver

        try:
            levels = [entry for _fd, entry in
                      slot_levels(self.resolve_frame, wm_parent_resolver(self.wm),
                                  origin, slot)]
        except (DynamicInheritanceCycle, UnknownFrame):
            return []
        for entry in levels:
            for c in entry.constraints:
                if (isinstance(c, Binary) and c.op == "in"
                        and isinstance(c.left, SlotRef) and c.left.name == slot
                        and c.left.frame is None):
                    items = c.right
                    if isinstance(items, ListExpr) and all(isinstance(i, Lit) for i in items.items):
                        return [i.value for i in items.items]
                    if isinstance(items, Lit) and items.value.kind is Kind.LIST:
                        return list(items.value.payload)
        return []

    # -- storage and forward chaining -------------------------------------------------

    def _store(self, frame: str, slot: str, value: Value, via: str, fire: bool = True,
               depth: int = 0):
        fd = self.resolve_frame(frame)
        if (fd is not None and fd.kind == FRAME_MEMBER and fd.slot(slot) is not None
                and via in ("rule", "answer", "api")):
            raise ReadOnlySlot(frame, slot)
        self.wm[(frame, slot)] = value
        self._via[(frame, slot)] = via
        self.emit("value_assigned", frame=frame, slot=slot, value=value, via=via)
        if slot == PARENT_SLOT:
            self._parent_action_cache.clear()
        if fire and via != "default" and self.remote_origin is None:
            self._fire_on_change(frame, slot, depth + 1)

    def _fire_on_change(self, frame: str, slot: str, depth: int):
        if depth > self.cascade_limit:
            raise CascadeLimitExceeded(self.cascade_limit)
        try:
            levels = []
            for level_fd in self._chain(frame):
                if level_fd.kind == FRAME_REMOTE:
                    break
                entry = level_fd.slot(slot)
                if entry is not None:
                    levels.append((level_fd, entry))
                    if entry.declared:
                        break
        except (DynamicInheritanceCycle, UnknownFrame):
            return
        policy = self.resolver_for(frame).forward_policy
        for level_fd, entry in levels:
            for action in entry.on_change:
                fired = self._try_forward(level_fd, entry, action, frame, depth)
                if fired and policy == POLICY_FIRST:
                    return

    def _try_forward(self, level_fd: FrameDef, entry, action: Action, origin: str,
                     depth: int) -> bool:
        rule = action.rule
        where = dict(frame=origin, slot=rule.target, level=level_fd.name,
                     index=entry.on_change.index(action))
        self.emit("rule_tried", direction="forward", **where)
        try:
            if rule.condition is not None:
                cond = self.eval(rule.condition, origin)
                if cond.is_unknown() or cond == FALSE:
                    self.emit(_SKIP, reason="condition_false_or_unknown", **where)
                    return False
                if cond.kind is not Kind.BOOLEAN:
                    raise EvalError("condition is not boolean")
            results = []
            for target, expr in rule.assignments:
                value = self.eval(expr, origin)
                if value.is_unknown() and not isinstance(expr, Lit):
                    self.emit(_SKIP, reason="value_unknown", **where)
                    return False
                results.append((target, value))
        except EvalError as e:
            self.emit(_SKIP, reason="eval_error", detail=e.reason, **where)
            return False
        for target, value in results:
            if not self._accept(origin, target, value, dict(where, target=target)):
                return False
        self.counters["rules_fired"] += 1
        self.rule_fires_by_frame[level_fd.name] = \
            self.rule_fires_by_frame.get(level_fd.name, 0) + 1
        self.emit("rule_fired", direction="forward", **where)
        for target, value in results:
            try:
                self._store(origin, target, value, via="rule", depth=depth)
            except ReadOnlySlot:
                self.emit(_SKIP, reason="read_only_slot", **dict(where, target=target))
        return True

    # -- evaluation ---------------------------------------------------------------

    def eval(self, expr: Expr, origin: str, bindings: Optional[Dict[str, str]] = None) -> Value:
        bindings = bindings or {}

        def read(qualifier, name):
            target = origin if qualifier is None else bindings.get(qualifier, qualifier)
            try:
                return self._infer(target, name)
            except (UnknownSlot, UnknownFrame) as e:
                raise EvalError(str(e)) from None
            except (ConnectError, RemoteError, WireTimeout, SchemaError) as e:
                raise EvalError(f"remote failure: {e}") from None

        return eval_expr(
            expr, read,
            call_hook=self._call_extern,
            exists_hook=lambda node: self.eval_exists(node.root, node.var, node.condition,
                                                      origin, bindings),
            specialize_hook=lambda root: self.specify_frame(origin, root),
        )

    def _call_extern(self, name: str, args: List[Value]) -> Value:
        entry = self.externs.get(name)
        if entry is None:
            raise EvalError(f"unknown extern {name!r}")
        arity, fn = entry
        if arity != len(args):
            raise EvalError(f"extern {name!r} expects {arity} arguments, got {len(args)}")
        result = fn(*args)
        if not isinstance(result, Value):
            raise EvalError(f"extern {name!r} returned a non-value")
        return result

    def eval_exists(self, root: str, var: str, condition: Expr, origin: str,
                    bindings: Optional[Dict[str, str]] = None) -> Value:
        """First proper descendant of `root` (declaration order, depth-first)
        satisfying the condition, with the candidate bound to `var`."""
        bindings = bindings or {}
        for candidate, _depth in self.descendants(root):
            try:
                v = self.eval(condition, origin, {**bindings, var: candidate})
            except EvalError:
                continue
            if v.kind is Kind.BOOLEAN and v.payload:
                return make_value(Kind.REFERENCE, candidate)
        return UNKNOWN

    def specify_frame(self, origin: str, subtree_root: str) -> Value:
        """Deepest descendant of the subtree whose own constraints all hold
        against the origin's values; at least one constraint must have
        evaluated on known values. Ties break by declaration order."""
        best: Optional[Tuple[int, int, str]] = None  # (-depth, declaration idx, name)
        for candidate, depth in self.descendants(subtree_root):
            if candidate == origin:
                continue
            fd = self.resolve_frame(candidate)
            if fd is None:
                continue
            own = fd.own_constraints()
            if not own:
                continue
            known_true = False
            ok = True
            for c in own:
                try:
                    v = self.eval(c, origin)
                except EvalError:
                    ok = False
                    break
                if v.is_unknown():
                    continue  # unknown operands do not gate
                if v.kind is not Kind.BOOLEAN or not v.payload:
                    ok = False
                    break
                known_true = True
            if ok and known_true:
                rank = (-depth, self._declaration_index(candidate), candidate)
                if best is None or rank < best:
                    best = rank
        return make_value(Kind.REFERENCE, best[2]) if best else UNKNOWN

    # -- data sources ------------------------------------------------------------------

    def _member_read(self, fd: FrameDef, origin: str, slot: str) -> Value:
        row = self._member_rows.get(fd.name, {})
        value = row.get(slot, UNKNOWN)
        if not value.is_unknown():
            self._store(origin, slot, value, via="table", fire=False)
        return value

    def _adapter_read(self, frame: str, slot: str) -> Value:
        adapter = self.adapters[frame]
        try:
            raw = adapter.read(slot)
        except Exception as e:
            self.emit(_SKIP, frame=frame, slot=slot, reason="adapter_error", detail=e)
            return UNKNOWN
        if raw is None:
            self.emit(_SKIP, frame=frame, slot=slot, reason="adapter_slot_unknown")
            return UNKNOWN
        value = raw if isinstance(raw, Value) else _value_from_native(raw)
        self._store(frame, slot, value, via="adapter", fire=False)
        return value

    # -- distribution ---------------------------------------------------------------------

    def _remote_level(self, stub: FrameDef, frame: str, slot: str,
                      origin: str) -> Tuple[Value, str]:
        cached = self.stub_cache.get(origin, frame, slot)
        if cached is not None:
            self.emit("cache_hit", origin=origin, frame=frame, slot=slot)
            return cached, "cache"
        if stub.url is None:
            self.emit(_SKIP, frame=frame, slot=slot, reason="no_url")
            return UNKNOWN, "none"
        self.emit("remote_call", frame=frame, slot=slot, url=stub.url)
        self.counters["remote_calls"] += 1
        try:
            value, source = self._ensure_network().get_slot(self, stub.url, frame, slot, origin)
        except (ConnectError, RemoteError, WireTimeout, OSError) as e:
            self.emit(_SKIP, frame=frame, slot=slot, reason="remote_failure", detail=e)
            return UNKNOWN, "none"
        if not value.is_unknown() and source != "default":
            self.stub_cache.put(origin, frame, slot, value)
        return value, source

    def remote_get_slot(self, frame: str, slot: str, origin: Optional[str] = None,
                        bypass_cache: bool = False):
        """Query a remote frame's slot directly. Returns an Outcome; caching
        and counters behave exactly as for engine-initiated queries."""
        fd = self.resolve_frame(frame)
        if fd is None or fd.kind != FRAME_REMOTE:
            raise UnknownFrame(frame)
        origin = origin or frame
        try:
            if bypass_cache:
                self.emit("remote_call", frame=frame, slot=slot, url=fd.url or "")
                self.counters["remote_calls"] += 1
                value, _source = self._ensure_network().get_slot(self, fd.url, frame, slot, origin)
            else:
                value, _source = self._remote_level(fd, frame, slot, origin)
        except Suspend as s:
            self.pending_question = s.question
            if not self.root_goals:
                self.root_goals.append((frame, slot))
            return Outcome.suspended(s.question)
        return Outcome.of(value)


def _value_from_native(raw) -> Value:
    if isinstance(raw, Value):
        return raw
    if isinstance(raw, bool):
        return make_value(Kind.BOOLEAN, raw)
    if isinstance(raw, int):
        return make_value(Kind.INTEGER, raw)
    if isinstance(raw, str):
        return make_value(Kind.STRING, raw)
    if isinstance(raw, (list, tuple)):
        items = [_value_from_native(i) for i in raw]
        elem = items[0].kind if items else Kind.STRING
        return make_value(Kind.LIST, items, elem)
    raise TypeMismatch("value", raw)
