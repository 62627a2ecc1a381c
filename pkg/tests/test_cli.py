import json
import subprocess
import sys

import pytest

from conftest import F1_SOURCE, F4_SOURCE

RUN = [sys.executable, "-m", "framekit.cli"]


def cli(*args, cwd=None):
    return subprocess.run(RUN + list(args), capture_output=True, text=True, cwd=cwd,
                          timeout=60)


@pytest.fixture
def f1_path(tmp_path):
    path = tmp_path / "f1.fmdl"
    path.write_text(F1_SOURCE, encoding="utf-8")
    return path


def test_check_clean_fixture(f1_path):
    result = cli("check", str(f1_path))
    assert result.returncode == 0
    assert result.stdout == ""


def test_check_reports_errors(tmp_path):
    bad = tmp_path / "bad.fmdl"
    bad.write_text("frame X : Nowhere {}", encoding="utf-8")
    result = cli("check", str(bad))
    assert result.returncode == 1
    assert "unknown-parent" in result.stderr


def test_check_usage_error():
    assert cli("check").returncode == 2


def test_consult_crate_big(f1_path, tmp_path):
    empty = tmp_path / "empty"
    empty.write_text("", encoding="utf-8")
    result = cli("consult", str(f1_path), "--goal", "Crate.big", "--answers", str(empty))
    assert result.returncode == 0
    assert result.stdout.strip() == "big = true"


def test_consult_with_scripted_answer(f1_path):
    result = cli("consult", str(f1_path), "--goal", "Thing.big", "--answers", "size=12")
    assert result.returncode == 0
    assert result.stdout.splitlines()[-1] == "big = true"


def test_consult_unanswered_question_fails(f1_path, tmp_path):
    empty = tmp_path / "empty"
    empty.write_text("", encoding="utf-8")
    result = cli("consult", str(f1_path), "--goal", "Thing.big", "--answers", str(empty))
    assert result.returncode == 1
    assert "Enter size" in result.stdout


def test_consult_json_lines(f1_path):
    result = cli("--json", "consult", str(f1_path), "--goal", "Thing.big",
                 "--answers", "size=12")
    lines = [json.loads(line) for line in result.stdout.splitlines()]
    assert [l["type"] for l in lines] == ["question", "result"]
    assert lines[0]["payload"]["prompt"] == "Enter size"
    assert lines[1]["payload"] == {"slot": "big", "kind": "boolean", "value": True}


def test_compile_then_consult_is_byte_identical(f1_path, tmp_path):
    compiled = tmp_path / "f1.fwx"
    result = cli("compile", str(f1_path), "-o", str(compiled))
    assert result.returncode == 0
    from_source = cli("--json", "consult", str(f1_path), "--goal", "Thing.big",
                      "--answers", "size=12")
    from_compiled = cli("--json", "consult", str(compiled), "--goal", "Thing.big",
                        "--answers", "size=12")
    assert from_source.stdout == from_compiled.stdout
    assert from_source.returncode == from_compiled.returncode == 0


def test_scripted_consultations_are_deterministic(f1_path):
    runs = [cli("--json", "consult", str(f1_path), "--goal", "Box.big",
                "--answers", "").stdout for _ in range(2)]
    assert runs[0] == runs[1]


def test_consult_unknown_result(tmp_path):
    path = tmp_path / "f4.fmdl"
    path.write_text(F4_SOURCE, encoding="utf-8")
    result = cli("consult", str(path), "--goal", "Loop.p")
    assert result.returncode == 0
    assert result.stdout.strip() == "p = unknown"


def test_consult_resolver_flag(tmp_path):
    from conftest import F2_SOURCE

    path = tmp_path / "f2.fmdl"
    path.write_text(F2_SOURCE, encoding="utf-8")
    first = cli("consult", str(path), "--goal", "Gauge.x")
    complex_ = cli("consult", str(path), "--goal", "Gauge.x", "--resolver", "complex")
    assert first.stdout.strip() == "x = 5"
    assert complex_.stdout.strip() == "x = 10"


def test_export_trace(tmp_path, f1_world):
    from framekit import InferenceSession, snapshot_save

    session = InferenceSession(f1_world)
    session.infer("Box", "big")
    snapshot = tmp_path / "session.xml"
    snapshot.write_text(snapshot_save(session), encoding="utf-8")
    result = cli("export-trace", str(snapshot))
    assert result.returncode == 0
    lines = result.stdout.splitlines()
    assert "goal_pushed" in lines[0]
    assert any("rule_fired" in line for line in lines)


def test_serve_and_query(tmp_path, f1_path):
    import socket
    import subprocess as sp
    import time

    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    proc = sp.Popen(RUN + ["serve", str(f1_path), "--listen", f"127.0.0.1:{port}"],
                    stdout=sp.PIPE, stderr=sp.PIPE, text=True)
    try:
        deadline = time.time() + 10
        while time.time() < deadline:
            try:
                with socket.create_connection(("127.0.0.1", port), timeout=0.2):
                    break
            except OSError:
                time.sleep(0.05)
        result = cli("query", f"kb://127.0.0.1:{port}/Crate", "big")
        assert result.returncode == 0, result.stderr
        assert result.stdout.strip() == "big = true"
    finally:
        proc.terminate()
        proc.wait(timeout=10)
