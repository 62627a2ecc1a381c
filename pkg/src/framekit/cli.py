"""Operator entry point: compile and check knowledge sources, run terminal
consultations, serve a knowledge base over the wire and over HTTP, query
remote instances and dump traces.

Exit codes: 0 ok, 1 diagnostics or runtime errors, 2 usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import threading
from typing import List, Optional, Tuple

from .engine import InferenceSession, Outcome
from .errors import AnswerTypeMismatch, ConstraintViolation, FramekitError
from .fmdl import FmdlError, parse, try_parse, validate
from .interchange import parse_document, world_from_xml, world_to_xml
from .model import FrameWorld, freeze_world
from .values import Kind, Value, make_value


class Output:
    """Plain or machine-readable line output: with --json every line is one
    object {type, payload}."""

    def __init__(self, as_json: bool):
        self.as_json = as_json

    def emit(self, type_: str, payload, plain: str):
        if self.as_json:
            print(json.dumps({"type": type_, "payload": payload}, sort_keys=True))
        else:
            print(plain)


def load_world(path: str) -> FrameWorld:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("<"):
        world = world_from_xml(text)
    else:
        world = freeze_world(parse(text, file=path))
    world.base_dir = os.path.dirname(os.path.abspath(path))
    return world


def value_to_plain(value: Value):
    if value.kind is Kind.UNKNOWN:
        return None
    if value.kind is Kind.LIST:
        return [value_to_plain(v) for v in value.payload]
    return value.payload


def parse_answer_text(text: str, kind: Kind, elem: Optional[Kind]) -> Value:
    text = text.strip()
    if kind is Kind.INTEGER:
        return make_value(Kind.INTEGER, int(text))
    if kind is Kind.BOOLEAN:
        if text not in ("true", "false"):
            raise ValueError(f"expected true or false, got {text!r}")
        return make_value(Kind.BOOLEAN, text == "true")
    if kind is Kind.LIST:
        items = json.loads(text)
        return make_value(Kind.LIST, items, elem or Kind.STRING)
    return make_value(kind, text)


class AnswerScript:
    """Scripted answers: `slot=value` per line, consumed in question order."""

    def __init__(self, entries: List[Tuple[str, str]]):
        self.entries = entries
        self.position = 0

    @classmethod
    def load(cls, spec: str) -> "AnswerScript":
        if os.path.exists(spec):
            with open(spec, "r", encoding="utf-8") as fh:
                lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
        else:
            lines = [part.strip() for part in spec.split(",") if part.strip()]
        entries = []
        for line in lines:
            slot, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"bad answer line {line!r}: expected slot=value")
            entries.append((slot.strip(), value.strip()))
        return cls(entries)

    def next_for(self, slot: str) -> Optional[str]:
        if self.position >= len(self.entries):
            return None
        expected_slot, value = self.entries[self.position]
        if expected_slot != slot:
            raise ValueError(
                f"scripted answer {self.position + 1} is for {expected_slot!r}, "
                f"but the question asks for {slot!r}")
        self.position += 1
        return value


def run_consultation(session: InferenceSession, frame: str, slot: str,
                     script: Optional[AnswerScript], out: Output) -> int:
    outcome = session.infer(frame, slot)
    while outcome.status == "suspended":
        q = outcome.question
        payload = {"id": q.id, "slot": q.slot, "prompt": q.prompt, "kind": q.kind.value,
                   "choices": [value_to_plain(c) for c in q.choices] or None}
        if q.violations:
            payload["violations"] = list(q.violations)
        out.emit("question", payload, f"? {q.prompt} [{q.slot}: {q.kind.value}]")
        if script is not None:
            try:
                text = script.next_for(q.slot)
            except ValueError as e:
                out.emit("error", {"message": str(e)}, f"error: {e}")
                return 1
            if text is None:
                out.emit("error", {"message": f"no scripted answer for {q.slot!r}",
                                   "pending": q.prompt},
                         f"error: unanswered question: {q.prompt}")
                return 1
        else:
            try:
                text = input("> ")
            except EOFError:
                out.emit("error", {"message": "input closed"}, "error: input closed")
                return 1
        try:
            value = parse_answer_text(text, q.kind, q.elem)
            outcome = session.answer(q.id, value)
        except (ValueError, AnswerTypeMismatch) as e:
            out.emit("error", {"message": str(e)}, f"error: {e}")
            if script is not None:
                return 1
            outcome = Outcome.suspended(q)
        except ConstraintViolation as e:
            out.emit("error", {"message": "constraint violated",
                               "violations": [str(v) for v in e.violations]},
                     "error: " + "; ".join(str(v) for v in e.violations))
            if script is not None:
                return 1
            outcome = Outcome.suspended(session.pending_question)
    value = outcome.value
    out.emit("result", {"slot": slot, "kind": value.kind.value,
                        "value": value_to_plain(value)},
             f"{slot} = {value}")
    return 0


def cmd_compile(args, out: Output) -> int:
    try:
        world = load_world(args.input)
    except (FmdlError, FramekitError) as e:
        print(str(e), file=sys.stderr)
        return 1
    document = world_to_xml(world)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(document + "\n")
    out.emit("compiled", {"input": args.input, "output": args.output,
                          "frames": len(world.order)},
             f"compiled {len(world.order)} frames to {args.output}")
    return 0


def cmd_check(args, out: Output) -> int:
    try:
        with open(args.input, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        print(str(e), file=sys.stderr)
        return 1
    build, diagnostics = try_parse(text, file=args.input)
    if build is not None:
        diagnostics = diagnostics + validate(build, file=args.input)
    errors = 0
    for d in diagnostics:
        print(str(d), file=sys.stderr)
        errors += d.severity == "error"
    if errors:
        return 1
    if build is not None:
        try:
            freeze_world(build)
        except FramekitError as e:
            print(str(e), file=sys.stderr)
            return 1
    return 0


def cmd_consult(args, out: Output) -> int:
    try:
        world = load_world(args.kb)
        frame, _, slot = args.goal.partition(".")
        if not slot:
            print(f"bad goal {args.goal!r}: expected Frame.slot", file=sys.stderr)
            return 2
        script = AnswerScript.load(args.answers) if args.answers is not None else None
        session = InferenceSession(world, default_resolver=args.resolver)
        code = run_consultation(session, frame, slot, script, out)
        session.close()
        return code
    except (FramekitError, OSError, ValueError) as e:
        print(str(e), file=sys.stderr)
        return 1


def cmd_serve(args, out: Output) -> int:
    from .node import serve

    try:
        world = load_world(args.kb)
        server = serve(world, args.listen, base_dir=world.base_dir)
    except (FramekitError, OSError) as e:
        print(str(e), file=sys.stderr)
        return 1
    out.emit("serving", {"listen": f"{server.host}:{server.port}"},
             f"serving knowledge on kb://{server.host}:{server.port}/")
    try:
        if args.http:
            import uvicorn

            from .service import create_app

            host, _, port = args.http.partition(":")
            app = create_app(world, base_dir=world.base_dir)
            uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080),
                        log_level="warning")
        else:
            threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def cmd_query(args, out: Output) -> int:
    from .node import connect

    try:
        handle = connect(args.url)
        session = handle.open_session()
        script = AnswerScript.load(args.answers) if args.answers is not None else None
        code = run_consultation(session, handle.frame, args.slot, script, out)
        handle.close()
        return code
    except (FramekitError, OSError, ValueError) as e:
        print(str(e), file=sys.stderr)
        return 1


def cmd_export_trace(args, out: Output) -> int:
    try:
        with open(args.snapshot, "r", encoding="utf-8") as fh:
            root = parse_document(fh.read())
    except (OSError, FramekitError) as e:
        print(str(e), file=sys.stderr)
        return 1
    if root.tag != "snapshot":
        print(f"not a snapshot document: <{root.tag}>", file=sys.stderr)
        return 1
    for section in root:
        if section.tag != "trace":
            continue
        for event in section:
            payload = dict(event.attrib)
            seq, kind = payload.pop("seq"), payload.pop("kind")
            rest = " ".join(f"{k}={v}" for k, v in payload.items())
            out.emit("trace", {"seq": int(seq), "kind": kind, **payload},
                     f"{seq:>4} {kind} {rest}".rstrip())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="framekit",
        description="frame/production knowledge-based-system toolkit")
    parser.add_argument("--json", action="store_true",
                        help="wrap every output line as a JSON object {type, payload}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="translate a knowledge source to interchange XML")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("check", help="parse and validate a knowledge source")
    p.add_argument("input")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("consult", help="run a consultation in the terminal")
    p.add_argument("kb", help="knowledge base (.fmdl source or compiled XML)")
    p.add_argument("--goal", required=True, help="Frame.slot to derive")
    p.add_argument("--answers", help="answers file or inline slot=value[,slot=value...]")
    p.add_argument("--resolver", default="first",
                   help="conflict resolver id (first, complex, fire-first)")
    p.set_defaults(fn=cmd_consult)

    p = sub.add_parser("serve", help="host a knowledge base for remote instances")
    p.add_argument("kb")
    p.add_argument("--listen", default="127.0.0.1:7601", help="HOST:PORT for the wire protocol")
    p.add_argument("--http", help="HOST:PORT for the HTTP consultation service")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("query", help="consult a remote instance")
    p.add_argument("url", help="kb://host:port/Frame")
    p.add_argument("slot")
    p.add_argument("--answers")
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("export-trace", help="print the trace stored in a session snapshot")
    p.add_argument("snapshot")
    p.set_defaults(fn=cmd_export_trace)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args, Output(args.json))


if __name__ == "__main__":
    sys.exit(main())
