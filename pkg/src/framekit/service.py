"""HTTP consultation API: resumable question/answer sessions over the engine.

The service is a thin shell: all reasoning state lives in the engine session,
so replaying a recorded (goal, answers...) transcript against a fresh server
reproduces identical results and traces.
"""

from __future__ import annotations

import threading
import time
from typing import Dict, Optional, Tuple

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .engine import InferenceSession, Outcome, Question
from .errors import (
    AnswerTypeMismatch,
    ConstraintViolation,
    FramekitError,
    SchemaError,
    TypeMismatch,
    VersionUnsupported,
    WorldVersionMismatch,
)
from .interchange import snapshot_load, snapshot_save, trace_to_xml
from .model import FRAME_REMOTE, FrameWorld
from .node import new_token
from .values import Kind, Value, make_value

DEFAULT_TTL = 3600.0


def value_to_json(value: Optional[Value]):
    if value is None or value.kind is Kind.UNKNOWN:
        return None
    if value.kind is Kind.LIST:
        return [value_to_json(v) for v in value.payload]
    return value.payload


def value_from_json(raw, kind: Kind, elem: Optional[Kind]) -> Value:
    """Strict JSON-to-value mapping: no coercion between kinds."""
    if kind is Kind.LIST:
        if not isinstance(raw, list):
            raise TypeMismatch(kind, raw)
        return make_value(Kind.LIST, [value_from_json(i, elem or Kind.STRING, None)
                                      for i in raw], elem or Kind.STRING)
    if kind is Kind.REFERENCE:
        if not isinstance(raw, str):
            raise TypeMismatch(kind, raw)
        return make_value(Kind.REFERENCE, raw)
    return make_value(kind, raw)


def question_to_json(q: Question) -> dict:
    body = {"id": q.id, "slot": q.slot, "prompt": q.prompt, "kind": q.kind.value,
            "choices": [value_to_json(c) for c in q.choices] or None}
    if q.violations:
        body["violations"] = list(q.violations)
    return body


def result_to_json(value: Value) -> dict:
    out = {"kind": value.kind.value, "value": value_to_json(value)}
    if value.kind is Kind.LIST and value.elem is not None:
        out["elem"] = value.elem.value
    return out


class StartBody(BaseModel):
    goal: str


class AnswerBody(BaseModel):
    question_id: str
    value: object = None


class SessionRecord:
    def __init__(self, session: InferenceSession, goal: Tuple[str, str]):
        self.id = new_token()
        self.session = session
        self.goal = goal
        self.state = "running"
        self.created = time.time()
        self.updated = time.time()
        self.lock = threading.Lock()
        self.applied: Dict[str, Tuple[str, dict]] = {}  # question id -> (value repr, response)
        self.synced: Dict[str, int] = {}
        self.error: Optional[str] = None

    def outcome_to_response(self, outcome: Outcome) -> dict:
        body = {"session": self.id, "state": self.state}
        if self.state == "awaiting_answer" and outcome.question is not None:
            body["question"] = question_to_json(outcome.question)
        elif self.state == "done":
            body["result"] = result_to_json(outcome.value)
        elif self.state == "failed":
            body["error"] = self.error
        return body


class ConsultationService:
    def __init__(self, world: FrameWorld, base_dir: Optional[str] = None,
                 ttl: float = DEFAULT_TTL, default_resolver: str = "first"):
        self.world = world
        self.base_dir = base_dir
        self.ttl = ttl
        self.default_resolver = default_resolver
        self.records: Dict[str, SessionRecord] = {}
        self.lock = threading.Lock()
        self.metrics = {"sessions_started": 0, "sessions_completed": 0,
                        "questions_asked": 0, "rules_fired": 0, "remote_calls": 0}
        self.per_frame_rules_fired: Dict[str, int] = {}

    # -- bookkeeping -------------------------------------------------------------

    def _sync(self, record: SessionRecord):
        counters = record.session.counters
        for key in ("questions_asked", "rules_fired", "remote_calls"):
            delta = counters[key] - record.synced.get(key, 0)
            if delta:
                self.metrics[key] += delta
                record.synced[key] = counters[key]
        for frame, n in record.session.rule_fires_by_frame.items():
            prev = record.synced.get(f"frame:{frame}", 0)
            if n > prev:
                self.per_frame_rules_fired[frame] = \
                    self.per_frame_rules_fired.get(frame, 0) + (n - prev)
                record.synced[f"frame:{frame}"] = n

    def get_record(self, session_id: str) -> Optional[SessionRecord]:
        with self.lock:
            record = self.records.get(session_id)
            if record is None:
                return None
            if time.time() - record.updated > self.ttl:
                self._drop(session_id)
                return None
            return record

    def _drop(self, session_id: str):
        record = self.records.pop(session_id, None)
        if record is not None:
            record.session.close()

    def new_record(self, session: InferenceSession, goal: Tuple[str, str]) -> SessionRecord:
        record = SessionRecord(session, goal)
        with self.lock:
            self.records[record.id] = record
        self.metrics["sessions_started"] += 1
        return record

    def step(self, record: SessionRecord, runner) -> dict:
        """Run one engine step and translate the outcome to a response."""
        try:
            outcome = runner()
        except (ConstraintViolation, AnswerTypeMismatch):
            self._sync(record)
            raise
        except FramekitError as e:
            record.state = "failed"
            record.error = str(e)
            self._sync(record)
            record.updated = time.time()
            return record.outcome_to_response(Outcome("unknown"))
        self._sync(record)
        record.updated = time.time()
        if outcome.status == "suspended":
            record.state = "awaiting_answer"
        else:
            if record.state != "done":
                self.metrics["sessions_completed"] += 1
            record.state = "done"
        return record.outcome_to_response(outcome)


def parse_goal(goal: str) -> Tuple[str, str]:
    frame, sep, slot = goal.partition(".")
    if not sep or not frame or not slot:
        raise ValueError(f"goal must look like Frame.slot, got {goal!r}")
    return frame, slot


def create_app(world: FrameWorld, base_dir: Optional[str] = None,
               ttl: float = DEFAULT_TTL, cors_origins=("*",),
               default_resolver: str = "first") -> FastAPI:
    service = ConsultationService(world, base_dir, ttl, default_resolver)
    app = FastAPI(title="framekit consultation service")
    app.state.service = service
    app.add_middleware(CORSMiddleware, allow_origins=list(cors_origins),
                       allow_methods=["*"], allow_headers=["*"])

    def err(status: int, message: str, **extra):
        return JSONResponse({"error": message, **extra}, status_code=status)

    @app.post("/api/sessions")
    async def start_session(request: Request, restore: Optional[str] = None):
        if restore is not None:
            body = await request.body()
            try:
                session = snapshot_load(world, body.decode("utf-8"),
                                        base_dir=service.base_dir,
                                        default_resolver=service.default_resolver)
            except WorldVersionMismatch as e:
                return err(410, str(e))
            except (SchemaError, VersionUnsupported) as e:
                return err(422, str(e))
            if not session.root_goals:
                return err(422, "snapshot has no goal to resume")
            record = service.new_record(session, session.root_goals[-1])
            if session.pending_question is not None:
                record.state = "awaiting_answer"
                service._sync(record)
                return record.outcome_to_response(Outcome.suspended(session.pending_question))
            return service.step(record, lambda: session.infer(*record.goal))

        try:
            payload = StartBody(**(await request.json()))
            goal = parse_goal(payload.goal)
        except Exception as e:
            return err(400, f"bad goal: {e}")
        session = InferenceSession(world, base_dir=service.base_dir,
                                   default_resolver=service.default_resolver)
        try:
            frame_def = session.resolve_frame(goal[0])
            if frame_def is None:
                return err(404, f"unknown frame {goal[0]!r}")
            if frame_def.kind != FRAME_REMOTE:
                from .model import slot_levels

                levels = slot_levels(session.resolve_frame, lambda fd: fd.parent,
                                     goal[0], goal[1])
                if not levels and goal[1] != "parent":
                    return err(404, f"frame {goal[0]!r} has no slot {goal[1]!r}")
        except FramekitError as e:
            return err(404, str(e))
        record = service.new_record(session, goal)
        return service.step(record, lambda: session.infer(*goal))

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        record = service.get_record(session_id)
        if record is None:
            return err(404, "unknown or expired session")
        session = record.session
        if record.state == "awaiting_answer" and session.pending_question is not None:
            return record.outcome_to_response(Outcome.suspended(session.pending_question))
        if record.state == "done":
            value = session.wm.get(record.goal, None)
            from .values import UNKNOWN

            return record.outcome_to_response(Outcome.of(value if value is not None else UNKNOWN))
        return record.outcome_to_response(Outcome("unknown"))

    @app.post("/api/sessions/{session_id}/answers")
    def post_answer(session_id: str, body: AnswerBody):
        record = service.get_record(session_id)
        if record is None:
            return err(404, "unknown or expired session")
        if not record.lock.acquire(blocking=False):
            return err(409, "session is busy with another request")
        try:
            value_repr = repr(body.value)
            if body.question_id in record.applied:
                prev_repr, prev_response = record.applied[body.question_id]
                if prev_repr == value_repr:
                    return prev_response  # idempotent retry
                return err(409, "question already answered with a different value")
            q = record.session.pending_question
            if record.state != "awaiting_answer" or q is None:
                return err(409, "session is not awaiting an answer")
            if q.id != body.question_id:
                return err(409, f"expected answer to question {q.id!r}")
            try:
                value = value_from_json(body.value, q.kind, q.elem)
            except TypeMismatch:
                return err(422, "answer does not match the expected kind",
                           expected=q.kind.value)
            try:
                response = service.step(record, lambda: record.session.answer(q.id, value))
            except AnswerTypeMismatch:
                return err(422, "answer does not match the expected kind",
                           expected=q.kind.value)
            except ConstraintViolation as e:
                return err(422, "answer violates the slot constraints",
                           violations=[str(v) for v in e.violations])
            record.applied[body.question_id] = (value_repr, response)
            return response
        finally:
            record.lock.release()

    @app.get("/api/sessions/{session_id}/trace")
    def get_trace(session_id: str):
        record = service.get_record(session_id)
        if record is None:
            return err(404, "unknown or expired session")
        return {"events": [{"seq": e.seq, "kind": e.kind, **e.payload}
                           for e in record.session.trace]}

    @app.get("/api/sessions/{session_id}/trace.xml")
    def get_trace_xml(session_id: str):
        record = service.get_record(session_id)
        if record is None:
            return err(404, "unknown or expired session")
        return Response(trace_to_xml(record.session.trace), media_type="application/xml")

    @app.get("/api/sessions/{session_id}/snapshot")
    def get_snapshot(session_id: str):
        record = service.get_record(session_id)
        if record is None:
            return err(404, "unknown or expired session")
        return Response(snapshot_save(record.session), media_type="application/xml")

    @app.delete("/api/sessions/{session_id}")
    def delete_session(session_id: str):
        record = service.get_record(session_id)
        if record is None:
            return err(404, "unknown or expired session")
        with service.lock:
            service._drop(session_id)
        return {"session": session_id, "state": "deleted"}

    @app.get("/api/kb")
    def knowledge_base():
        frames = []
        for name in world.order:
            fd = world.frames[name]
            frames.append({
                "name": name,
                "parent": fd.parent,
                "kind": fd.kind,
                "slots": [{
                    "name": slot.name,
                    "type": slot.type.value if slot.type else None,
                    "elem": slot.elem.value if slot.elem else None,
                    "prompt": slot.prompt,
                } for slot in fd.slots.values() if slot.declared],
            })
        return {"frames": frames, "version": world.version}

    @app.get("/api/metrics")
    def metrics():
        return {"metrics": dict(service.metrics),
                "per_frame_rules_fired": dict(service.per_frame_rules_fired)}

    return app
