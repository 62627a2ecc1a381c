"""Knowledge server and client for distributed frame hierarchies.

One running engine plus its world is an instance; instances exchange slot
values (static knowledge) and rule documents (dynamic knowledge). A slot
query carries the origin session's token; while the serving side evaluates
rules it calls back over the same connection for every value the origin owns,
so ancestor rules keep reading the origin's slots across the network. A node
that is neither the origin nor the owner relays callbacks upstream, which is
what lets chains of instances (A querying B querying C) resolve without any
node knowing the whole topology.

Questions unwind as replies hop by hop to the origin, whose user answers;
answers are routed back by frame locality and remembered per session token,
so the origin's deterministic re-run converges without re-asking.
"""

from __future__ import annotations

import secrets
import socket
import threading
from typing import Dict, List, Optional, Tuple

from .engine import InferenceSession, Suspend
from .errors import (
    BindError,
    ConnectError,
    FramekitError,
    ProtocolViolation,
    RemoteError,
    UnknownFrame,
    UnknownRemoteFrame,
    UnknownSlot,
    VersionMismatch,
    WireTimeout,
)
from .interchange import rules_to_xml
from .model import FRAME_REMOTE, FrameWorld, check_constraints
from .protocol import PROTOCOL_VERSION, FrameDecoder, Message
from .values import UNKNOWN, Kind, Value

DEFAULT_TIMEOUT = 30.0


def new_token() -> str:
    return secrets.token_urlsafe(16)


def parse_kb_url(url: str) -> Tuple[str, int, str]:
    if not url.startswith("kb://"):
        raise ConnectError(f"not a kb:// url: {url!r}")
    rest = url[len("kb://"):]
    hostport, _, frame = rest.partition("/")
    host, _, port = hostport.partition(":")
    if not host or not port or not frame:
        raise ConnectError(f"malformed kb:// url: {url!r}")
    try:
        return host, int(port), frame
    except ValueError:
        raise ConnectError(f"bad port in {url!r}") from None


class MessageChannel:
    """One socket carrying length-prefixed messages, with per-kind counters."""

    def __init__(self, sock: socket.socket, stats: Optional[Dict] = None):
        self.sock = sock
        self.decoder = FrameDecoder()
        self._pending: List[Message] = []
        self._next_id = 0
        self.sent: Dict[str, int] = {}
        self.received: Dict[str, int] = {}
        self._stats = stats
        self.closed = False
        self.busy = False  # a pump owns this channel; parallel calls open another

    def next_id(self) -> int:
        self._next_id += 1
        return self._next_id

    def send(self, msg: Message):
        self.sent[msg.kind] = self.sent.get(msg.kind, 0) + 1
        if self._stats is not None:
            out = self._stats.setdefault("out", {})
            out[msg.kind] = out.get(msg.kind, 0) + 1
        self.sock.sendall(msg.encode())

    def recv(self, timeout: Optional[float] = DEFAULT_TIMEOUT) -> Optional[Message]:
        if self._pending:
            msg = self._pending.pop(0)
        else:
            self.sock.settimeout(timeout)
            while True:
                try:
                    data = self.sock.recv(65536)
                except socket.timeout:
                    raise WireTimeout("no message within the timeout") from None
                except OSError as e:
                    raise ConnectError(str(e)) from None
                if not data:
                    return None
                got = list(self.decoder.feed(data))
                if got:
                    msg = got[0]
                    self._pending.extend(got[1:])
                    break
        self.received[msg.kind] = self.received.get(msg.kind, 0) + 1
        if self._stats is not None:
            inn = self._stats.setdefault("in", {})
            inn[msg.kind] = inn.get(msg.kind, 0) + 1
        return msg

    def close(self):
        if not self.closed:
            self.closed = True
            try:
                self.sock.close()
            except OSError:
                pass


def _error_reply(msg: Message, code: str, text: str = "",
                 violations: Tuple[str, ...] = ()) -> Message:
    return Message("error", msg.id, reply=True,
                   fields={"code": code, "text": text}, violations=violations)


class SessionNet:
    """Per-session network state: links to peers, the session token, and the
    dispatch context used while pumping a connection for a reply."""

    def __init__(self, token: Optional[str] = None, timeout: float = DEFAULT_TIMEOUT,
                 server: Optional["KnowledgeServer"] = None):
        self.token = token or new_token()
        self.timeout = timeout
        self.server = server
        self.links: Dict[Tuple[str, int], List[MessageChannel]] = {}
        self.session_stack: List[InferenceSession] = []
        self.upstream_stack: List[MessageChannel] = []
        self.answers: Dict[Tuple[str, str], Value] = {}

    # -- links -----------------------------------------------------------------

    def link(self, url: str) -> MessageChannel:
        host, port, frame = parse_kb_url(url)
        pool = self.links.setdefault((host, port), [])
        pool[:] = [c for c in pool if not c.closed]
        for channel in pool:
            if not channel.busy:
                return channel
        try:
            sock = socket.create_connection((host, port), timeout=self.timeout)
        except OSError as e:
            raise ConnectError(f"cannot reach {host}:{port}: {e}") from None
        stats = self.server.stats_sink if self.server is not None else None
        channel = MessageChannel(sock, stats)
        hello = Message("hello", channel.next_id(),
                        fields={"version": PROTOCOL_VERSION, "token": self.token,
                                "frame": frame})
        channel.send(hello)
        reply = channel.recv(self.timeout)
        if reply is None:
            raise ConnectError("connection closed during hello")
        if reply.kind == "error":
            channel.close()
            code = reply.fields.get("code")
            if code == "version":
                raise VersionMismatch(PROTOCOL_VERSION, reply.fields.get("text", "?"))
            if code == "unknown_frame":
                raise UnknownRemoteFrame(frame)
            raise ConnectError(reply.fields.get("text", code or "hello rejected"))
        if reply.kind != "hello" or reply.fields.get("version") != PROTOCOL_VERSION:
            channel.close()
            raise VersionMismatch(PROTOCOL_VERSION, reply.fields.get("version", "?"))
        pool.append(channel)
        return channel

    def close(self):
        for pool in self.links.values():
            for channel in pool:
                if not channel.closed:
                    try:
                        channel.send(Message("bye", channel.next_id()))
                    except (OSError, FramekitError):
                        pass
                    channel.close()
        self.links.clear()

    # -- request/response with cooperative re-entrancy ----------------------------

    def call(self, channel: MessageChannel, msg: Message,
             session: Optional[InferenceSession]) -> Message:
        was_busy = channel.busy
        channel.busy = True
        channel.send(msg)
        if session is not None:
            self.session_stack.append(session)
        try:
            while True:
                inbound = channel.recv(self.timeout)
                if inbound is None:
                    raise ConnectError("connection closed while awaiting a reply")
                if inbound.reply:
                    if inbound.id != msg.id:
                        raise ProtocolViolation(
                            f"reply id {inbound.id} does not match request {msg.id}")
                    return inbound
                self.dispatch(inbound, channel)
        finally:
            channel.busy = was_busy
            if session is not None:
                self.session_stack.pop()

    def dispatch(self, msg: Message, channel: MessageChannel):
        """Handle a request arriving while this side awaits a reply."""
        if msg.kind == "get_slot" and msg.fields.get("callback") == "true":
            token = msg.fields.get("token")
            # Answer from the live session only when it holds origin authority:
            # a session proxying a remote origin must relay the callback toward
            # the true origin instead.
            if (token == self.token and self.session_stack
                    and self.session_stack[-1].remote_origin is None):
                self._handle_callback(msg, channel)
                return
            if token == self.token and self.upstream_stack:
                self._relay(msg, channel)
                return
            channel.send(_error_reply(msg, "unknown_token", "no origin for this token here"))
            return
        if self.server is not None:
            self.server.dispatch_request(channel, msg)
            return
        channel.send(_error_reply(msg, "unexpected", f"cannot serve {msg.kind} here"))

    def _handle_callback(self, msg: Message, channel: MessageChannel):
        session = self.session_stack[-1]
        frame = msg.fields.get("frame", "")
        slot = msg.fields.get("slot", "")
        try:
            value = session._infer(frame, slot)
        except Suspend as s:
            channel.send(_question_reply(msg, s.question))
            return
        except (UnknownSlot, UnknownFrame) as e:
            channel.send(_error_reply(msg, "unknown_slot", str(e)))
            return
        source = "default" if session._via.get((frame, slot)) == "default" else (
            "none" if value.is_unknown() else "value")
        channel.send(Message("slot_value", msg.id, reply=True,
                             fields={"source": source}, value=value))

    def _relay(self, msg: Message, channel: MessageChannel):
        upstream = self.upstream_stack[-1]
        forwarded = Message(msg.kind, upstream.next_id(), fields=dict(msg.fields),
                            value=msg.value)
        reply = self.call(upstream, forwarded, session=None)
        channel.send(Message(reply.kind, msg.id, reply=True, fields=dict(reply.fields),
                             value=reply.value, choices=reply.choices,
                             violations=reply.violations, rules_doc=reply.rules_doc))

    # -- engine hooks -----------------------------------------------------------------

    def get_slot(self, session: InferenceSession, url: str, frame: str, slot: str,
                 origin: str) -> Tuple[Value, str]:
        channel = self.link(url)
        msg = Message("get_slot", channel.next_id(),
                      fields={"frame": frame, "slot": slot, "origin": origin,
                              "token": self.token, "callback": "false"})
        reply = self.call(channel, msg, session)
        if reply.kind == "slot_value":
            return reply.value if reply.value is not None else UNKNOWN, \
                reply.fields.get("source", "value")
        if reply.kind == "question":
            raise Suspend(_question_from_wire(session, reply))
        if reply.kind == "error":
            raise RemoteError(reply.fields.get("code", "?"), reply.fields.get("text", ""))
        raise ProtocolViolation(f"unexpected reply kind {reply.kind!r}")

    def fetch_rules(self, session: Optional[InferenceSession], url: str, frame: str) -> str:
        channel = self.link(url)
        msg = Message("get_rules", channel.next_id(),
                      fields={"frame": frame, "token": self.token})
        reply = self.call(channel, msg, session)
        if reply.kind == "rules" and reply.rules_doc is not None:
            return reply.rules_doc
        if reply.kind == "error":
            raise RemoteError(reply.fields.get("code", "?"), reply.fields.get("text", ""))
        raise ProtocolViolation(f"unexpected reply kind {reply.kind!r}")

    def send_answer(self, session: Optional[InferenceSession], url: str, frame: str,
                    slot: str, value: Value) -> List[str]:
        channel = self.link(url)
        msg = Message("answer", channel.next_id(),
                      fields={"frame": frame, "slot": slot, "token": self.token},
                      value=value)
        reply = self.call(channel, msg, session)
        if reply.kind == "answer":
            return list(reply.violations)
        if reply.kind == "error":
            if reply.fields.get("code") == "constraint":
                return list(reply.violations) or [reply.fields.get("text", "constraint")]
            raise RemoteError(reply.fields.get("code", "?"), reply.fields.get("text", ""))
        raise ProtocolViolation(f"unexpected reply kind {reply.kind!r}")

    def stats(self) -> Dict[str, Dict[str, int]]:
        totals: Dict[str, Dict[str, int]] = {"in": {}, "out": {}}
        for pool in self.links.values():
            for channel in pool:
                for kind, n in channel.sent.items():
                    totals["out"][kind] = totals["out"].get(kind, 0) + n
                for kind, n in channel.received.items():
                    totals["in"][kind] = totals["in"].get(kind, 0) + n
        return totals


def _question_reply(msg: Message, question) -> Message:
    fields = {"frame": question.frame, "slot": question.slot, "prompt": question.prompt,
              "kind": question.kind.value}
    if question.elem is not None:
        fields["elem"] = question.elem.value
    return Message("question", msg.id, reply=True, fields=fields,
                   choices=question.choices)


def _question_from_wire(session: InferenceSession, reply: Message):
    kind = Kind(reply.fields.get("kind", "string"))
    elem_text = reply.fields.get("elem")
    return session.make_question(
        reply.fields.get("frame", ""), reply.fields.get("slot", ""),
        reply.fields.get("prompt", ""), kind,
        Kind(elem_text) if elem_text else None, reply.choices)


class _TokenRecord:
    def __init__(self, server: "KnowledgeServer", token: str):
        self.net = SessionNet(token=token, timeout=server.timeout, server=server)

    @property
    def answers(self):
        return self.net.answers


class KnowledgeServer:
    """Hosts a frozen world: answers slot queries (running local inference
    with the remote caller as origin authority), serves rule documents, and
    meters every request."""

    def __init__(self, world: FrameWorld, host: str = "127.0.0.1", port: int = 0,
                 timeout: float = DEFAULT_TIMEOUT, base_dir: Optional[str] = None):
        self.world = world
        self.timeout = timeout
        self.base_dir = base_dir
        self.stats_sink: Dict[str, Dict[str, int]] = {}
        self.metrics = {"rules_served": 0, "errors": 0, "rules_fired": 0,
                        "questions_relayed": 0}
        self.tokens: Dict[str, _TokenRecord] = {}
        self._lock = threading.Lock()
        try:
            self._listener = socket.create_server((host, port))
        except OSError as e:
            raise BindError(f"cannot bind {host}:{port}: {e}") from None
        self.host, self.port = self._listener.getsockname()[:2]
        self._threads: List[threading.Thread] = []
        self._running = False

    def url_for(self, frame: str) -> str:
        return f"kb://{self.host}:{self.port}/{frame}"

    def start(self) -> "KnowledgeServer":
        self._running = True
        thread = threading.Thread(target=self._accept_loop, daemon=True)
        thread.start()
        self._threads.append(thread)
        return self

    def stop(self):
        self._running = False
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            for record in self.tokens.values():
                record.net.close()
            self.tokens.clear()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def _accept_loop(self):
        while self._running:
            try:
                sock, _addr = self._listener.accept()
            except OSError:
                return
            thread = threading.Thread(target=self._serve_connection, args=(sock,),
                                      daemon=True)
            thread.start()
            self._threads.append(thread)

    def _serve_connection(self, sock: socket.socket):
        channel = MessageChannel(sock, self.stats_sink)
        try:
            hello = channel.recv(self.timeout)
            if hello is None or hello.kind != "hello":
                channel.close()
                return
            if hello.fields.get("version") != PROTOCOL_VERSION:
                channel.send(_error_reply(hello, "version", PROTOCOL_VERSION))
                channel.close()
                return
            frame = hello.fields.get("frame", "")
            if frame and not self._hosts(frame):
                channel.send(_error_reply(hello, "unknown_frame", frame))
                channel.close()
                return
            channel.send(Message("hello", hello.id, reply=True,
                                 fields={"version": PROTOCOL_VERSION}))
            while self._running:
                msg = channel.recv(timeout=None)
                if msg is None or msg.kind == "bye":
                    break
                self.dispatch_request(channel, msg)
        except (ConnectError, WireTimeout, ProtocolViolation):
            pass
        finally:
            channel.close()

    def _hosts(self, frame: str) -> bool:
        fd = self.world.frames.get(frame)
        if fd is not None:
            return fd.kind != FRAME_REMOTE
        probe = self._fresh_session(_TokenRecord(self, "probe"))
        return probe.resolve_frame(frame) is not None

    def _record(self, token: str) -> _TokenRecord:
        with self._lock:
            record = self.tokens.get(token)
            if record is None:
                record = _TokenRecord(self, token)
                self.tokens[token] = record
            return record

    def _fresh_session(self, record: _TokenRecord) -> InferenceSession:
        session = InferenceSession(self.world, base_dir=self.base_dir,
                                   network=record.net)
        session.wm.update(record.answers)
        return session

    # -- request dispatch ---------------------------------------------------------

    def dispatch_request(self, channel: MessageChannel, msg: Message):
        try:
            if msg.kind == "get_slot":
                self._serve_get_slot(channel, msg)
            elif msg.kind == "get_rules":
                self._serve_get_rules(channel, msg)
            elif msg.kind == "answer":
                self._serve_answer(channel, msg)
            elif msg.kind == "hello":
                channel.send(Message("hello", msg.id, reply=True,
                                     fields={"version": PROTOCOL_VERSION}))
            else:
                self.metrics["errors"] += 1
                channel.send(_error_reply(msg, "unexpected", f"cannot serve {msg.kind}"))
        except (ProtocolViolation, FramekitError) as e:
            self.metrics["errors"] += 1
            try:
                channel.send(_error_reply(msg, "schema", str(e)))
            except OSError:
                pass

    def _serve_get_slot(self, channel: MessageChannel, msg: Message):
        token = msg.fields.get("token", "")
        frame = msg.fields.get("frame", "")
        slot = msg.fields.get("slot", "")
        origin = msg.fields.get("origin", frame)
        record = self._record(token)
        if msg.fields.get("callback") == "true":
            # a callback reached the listener: only valid if we can relay
            record.net.dispatch(msg, channel)
            return
        session = self._fresh_session(record)
        origin_fd = session.resolve_frame(origin)
        if origin_fd is None or origin_fd.kind == FRAME_REMOTE:
            session.remote_origin = origin
            session.origin_proxy = _OriginProxy(record.net, channel)
            # the origin's effective slot type, as far as this node can see it
            expected = session._effective_type(origin, slot)
            if expected == (None, None):
                expected = session._effective_type(frame, slot)
            session.remote_origin_expected[slot] = expected
        record.net.upstream_stack.append(channel)
        record.net.session_stack.append(session)
        try:
            value = session.infer_from(frame, origin, slot)
        except Suspend as s:
            self.metrics["questions_relayed"] += 1
            channel.send(_question_reply(msg, s.question))
            return
        except (UnknownFrame, UnknownSlot) as e:
            self.metrics["errors"] += 1
            channel.send(_error_reply(msg, "unknown_slot", str(e)))
            return
        finally:
            record.net.session_stack.pop()
            record.net.upstream_stack.pop()
            self.metrics["rules_fired"] += session.counters["rules_fired"]
        source = "default" if session._via.get((origin, slot)) == "default" else (
            "none" if value.is_unknown() else "value")
        channel.send(Message("slot_value", msg.id, reply=True,
                             fields={"source": source}, value=value))

    def _serve_get_rules(self, channel: MessageChannel, msg: Message):
        frame = msg.fields.get("frame", "")
        fd = self.world.frames.get(frame)
        if fd is None or fd.kind == FRAME_REMOTE:
            self.metrics["errors"] += 1
            channel.send(_error_reply(msg, "unknown_frame", frame))
            return
        document = rules_to_xml(fd)
        self.metrics["rules_served"] += len(fd.rule_actions())
        channel.send(Message("rules", msg.id, reply=True, fields={"frame": frame},
                             rules_doc=document))

    def _serve_answer(self, channel: MessageChannel, msg: Message):
        token = msg.fields.get("token", "")
        frame = msg.fields.get("frame", "")
        slot = msg.fields.get("slot", "")
        value = msg.value if msg.value is not None else UNKNOWN
        record = self._record(token)
        session = self._fresh_session(record)
        fd = session.resolve_frame(frame)
        if fd is None:
            self.metrics["errors"] += 1
            channel.send(_error_reply(msg, "unknown_frame", frame))
            return
        if fd.kind == FRAME_REMOTE:
            record.net.upstream_stack.append(channel)
            try:
                violations = record.net.send_answer(None, fd.url, frame, slot, value)
            finally:
                record.net.upstream_stack.pop()
        else:
            violations = [str(v) for v in check_constraints(
                self.world, frame, slot, value, record.answers,
                resolve=session.resolve_frame)]
            if not violations:
                record.answers[(frame, slot)] = value
        channel.send(Message("answer", msg.id, reply=True,
                             fields={"ok": "false" if violations else "true"},
                             violations=tuple(violations)))


class _OriginProxy:
    """Reaches back toward the origin session for slot values the serving
    rules read (the polymorphic callback)."""

    def __init__(self, net: SessionNet, channel: MessageChannel):
        self.net = net
        self.channel = channel

    def get_slot(self, session: InferenceSession, slot: str) -> Value:
        msg = Message("get_slot", self.channel.next_id(),
                      fields={"frame": session.remote_origin, "slot": slot,
                              "token": self.net.token, "callback": "true"})
        session.emit("remote_call", frame=session.remote_origin, slot=slot, url="origin")
        session.counters["remote_calls"] += 1
        reply = self.net.call(self.channel, msg, session)
        if reply.kind == "slot_value":
            value = reply.value if reply.value is not None else UNKNOWN
            if not value.is_unknown():
                session.wm[(session.remote_origin, slot)] = value
                if reply.fields.get("source") == "default":
                    session._via[(session.remote_origin, slot)] = "default"
            return value
        if reply.kind == "question":
            raise Suspend(_question_from_wire(session, reply))
        if reply.kind == "error":
            code = reply.fields.get("code", "?")
            if code == "unknown_slot":
                raise UnknownSlot(session.remote_origin, slot)
            raise RemoteError(code, reply.fields.get("text", ""))
        raise ProtocolViolation(f"unexpected reply kind {reply.kind!r}")


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------

def serve(world: FrameWorld, address: str = "127.0.0.1:0",
          base_dir: Optional[str] = None, timeout: float = DEFAULT_TIMEOUT) -> KnowledgeServer:
    host, _, port = address.partition(":")
    server = KnowledgeServer(world, host or "127.0.0.1", int(port or 0),
                             timeout=timeout, base_dir=base_dir)
    return server.start()


class RemoteHandle:
    """A validated connection bound to one remote frame."""

    def __init__(self, url: str, timeout: float = DEFAULT_TIMEOUT):
        self.url = url
        self.host, self.port, self.frame = parse_kb_url(url)
        self.net = SessionNet(timeout=timeout)
        self.net.link(url)  # hello now: surfaces version/frame errors eagerly

    def open_session(self, world: Optional[FrameWorld] = None) -> InferenceSession:
        if world is None:
            from .model import FrameDef, WorldBuild, freeze_world

            build = WorldBuild()
            build.add_frame(FrameDef(self.frame, kind=FRAME_REMOTE, url=self.url))
            world = freeze_world(build)
        return InferenceSession(world, network=self.net)

    def message_stats(self) -> Dict[str, Dict[str, int]]:
        return self.net.stats()

    def close(self):
        self.net.close()


def connect(url: str, timeout: float = DEFAULT_TIMEOUT) -> RemoteHandle:
    return RemoteHandle(url, timeout=timeout)


def message_stats(handle) -> Dict[str, Dict[str, int]]:
    if isinstance(handle, RemoteHandle):
        return handle.message_stats()
    if isinstance(handle, KnowledgeServer):
        return handle.stats_sink
    if isinstance(handle, SessionNet):
        return handle.stats()
    raise TypeError(f"no message stats on {type(handle).__name__}")
