"""Partitioning helpers: split one world across loopback instances.

Every node receives the full tree shape; foreign frames become stubs carrying
the parent link and constraint set (the shared static knowledge) while slots,
defaults and rules stay with the owning node.
"""

from framekit import InferenceSession, freeze_world, parse
from framekit.model import FrameDef, WorldBuild
from framekit.node import KnowledgeServer, SessionNet


def _make_stub(fd, url=None):
    """Stub for a foreign frame: the shared static knowledge travels with it
    (parent link, declared slot types, constraint sets); defaults, rules and
    prompts stay with the owner."""
    from framekit.model import SlotDef

    stub = FrameDef(fd.name, parent=fd.parent, kind="remote", url=url)
    for slot in fd.slots.values():
        if slot.declared and slot.type is not None:
            stub.slots[slot.name] = SlotDef(slot.name, type=slot.type, elem=slot.elem,
                                            constraints=slot.constraints, declared=True)
        elif slot.constraints:
            entry = stub.ensure_slot(slot.name)
            entry.constraints = slot.constraints
    return stub


def split_world(source, assignment):
    base = parse(source)
    nodes = {}
    for node_name in set(assignment.values()):
        build = WorldBuild()
        for frame_name in base.order:
            fd = base.frames[frame_name]
            if assignment[frame_name] == node_name:
                build.add_frame(fd)
            else:
                build.add_frame(_make_stub(fd))
        for name, arity in base.externs.items():
            build.declare_extern(name, arity)
        nodes[node_name] = build
    return nodes


def start_cluster(node_builds, assignment):
    started = {}
    for node_name, build in node_builds.items():
        started[node_name] = KnowledgeServer(freeze_world(build))
    for node_name, build in node_builds.items():
        for frame_name, fd in build.frames.items():
            if fd.kind == "remote":
                fd.url = started[assignment[frame_name]].url_for(frame_name)
        started[node_name].world = freeze_world(build)
        started[node_name].start()
    return started


def stop_cluster(servers):
    for server in servers.values():
        server.stop()


def all_stub_client_world(source, assignment, servers):
    base = parse(source)
    build = WorldBuild()
    for frame_name in base.order:
        fd = base.frames[frame_name]
        build.add_frame(_make_stub(
            fd, url=servers[assignment[frame_name]].url_for(frame_name)))
    return freeze_world(build)


def consult(world, frame, slot, answers=(), resolver="first"):
    """Run one consultation; returns (final outcome, question summaries)."""
    session = InferenceSession(world, network=SessionNet(), default_resolver=resolver)
    questions = []
    out = session.infer(frame, slot)
    answer_queue = list(answers)
    while out.status == "suspended":
        q = out.question
        questions.append((q.frame, q.slot, q.prompt, q.kind.value,
                          tuple(str(c) for c in q.choices)))
        if not answer_queue:
            break
        out = session.answer(q.id, answer_queue.pop(0))
    session.close()
    return out, questions
