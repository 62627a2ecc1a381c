"""Concurrent sessions: one frozen world, many independent consultations."""

import threading

from framekit import InferenceSession
from framekit.node import SessionNet

from cluster import split_world, start_cluster, stop_cluster
from conftest import F1_SOURCE, world_from


def run_threads(worker, count):
    results = [None] * count
    errors = []

    def wrap(i):
        try:
            results[i] = worker(i)
        except Exception as e:  # surfaced by the assertion below
            errors.append((i, e))

    threads = [threading.Thread(target=wrap, args=(i,)) for i in range(count)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=60)
    assert not errors, errors
    return results


def test_parallel_sessions_share_one_frozen_world():
    world = world_from(F1_SOURCE)

    def worker(i):
        session = InferenceSession(world)
        out = session.infer("Thing", "big")
        answer = i + 1  # thread-specific answers must not bleed across sessions
        final = session.answer(out.question.id, answer)
        return final.value.payload, session.wm[("Thing", "size")].payload

    results = run_threads(worker, 8)
    for i, (big, size) in enumerate(results):
        assert size == i + 1
        assert big is (i + 1 > 10)


def test_parallel_remote_consultations_against_one_server():
    assignment = {"Thing": "A", "Box": "B", "Crate": "B"}
    servers = start_cluster(split_world(F1_SOURCE, assignment), assignment)
    try:
        def worker(i):
            session = InferenceSession(servers["B"].world, network=SessionNet())
            out = session.infer("Thing", "big")
            assert out.status == "suspended"
            final = session.answer(out.question.id, 5 + i * 10)  # 5, 15, 25, ...
            session.close()
            return final.value.payload

        results = run_threads(worker, 6)
        assert results == [i * 10 + 5 > 10 for i in range(6)]
        assert len(servers["A"].tokens) >= 6  # one record per session token
    finally:
        stop_cluster(servers)
