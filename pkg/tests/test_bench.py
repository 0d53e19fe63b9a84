import csv
import io
import json
import socket
import subprocess
import sys
import threading

import numpy as np
import pytest

from privinfer.bench import (ROW_FIELDS, SCHEMA_VERSION, BenchReport, BenchSpec, check_report,
                             emit_report, load_report, merge_reports, run_bench, summarize)
from privinfer.bench import cli, runner
from privinfer.errors import ValidationError
from privinfer.model import ModelConfig
from privinfer.transport.link import LinkProfile

SMALL = ModelConfig(n_vocab=64, d_model=16, n_heads=2, n_layers=1, d_ffn=32, max_seq=32)


def free_ports(n):
    socks = [socket.socket() for _ in range(n)]
    for s in socks:
        s.bind(("127.0.0.1", 0))
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return ports


@pytest.fixture(scope="module")
def nonlinear_report():
    return run_bench(BenchSpec("nonlinear", 1000))


def test_spec_validation():
    with pytest.raises(ValidationError):
        BenchSpec("nope")
    with pytest.raises(ValidationError):
        BenchSpec("nonlinear", reps=2)
    with pytest.raises(ValidationError):
        BenchSpec("nonlinear", size=0)


def test_nonlinear_row(nonlinear_report):
    r = nonlinear_report
    assert not r.failed and len(r.rows) == 1
    row = r.rows[0]
    assert row.online_rounds == 3 and row.reps == 3 and row.status == "ok"
    assert row.online_mb <= 0.015 and row.time_mean_s > 0
    assert r.totals["online_rounds"] == 3
    assert check_report(r) == []


def test_argmax_row():
    r = run_bench(BenchSpec("argmax", 1000, scheme="stub"))
    assert r.rows[0].online_rounds == 4 and check_report(r) == []


def test_generate_rows():
    r = run_bench(BenchSpec("generate", 20, model=SMALL, prompt_len=4, scheme="stub"))
    assert [row.step for row in r.rows] == list(range(1, 21))
    assert all(row.status == "ok" and row.reps == 3 for row in r.rows)
    assert check_report(r) == []
    later = [row.online_bytes for row in r.rows[1:]]
    assert np.std(later) / np.mean(later) < 0.05


def test_layer_small():
    r = run_bench(BenchSpec("layer", 256))
    assert r.rows[0].online_rounds == 16 and check_report(r) == []


def test_nonlinear_bytes_scale_linearly():
    sizes = [1000, 10_000, 100_000]
    mb = [run_bench(BenchSpec("nonlinear", n)).rows[0].online_mb for n in sizes]
    slope, icpt = np.polyfit(sizes, mb, 1)
    resid = np.array(mb) - (slope * np.array(sizes) + icpt)
    r2 = 1 - (resid ** 2).sum() / ((np.array(mb) - np.mean(mb)) ** 2).sum()
    assert r2 > 0.999


def test_formats_agree(nonlinear_report):
    doc = json.loads(emit_report(nonlinear_report, "json"))
    assert doc["schema_version"] == SCHEMA_VERSION and "raw" not in doc
    rows = list(csv.DictReader(io.StringIO(emit_report(nonlinear_report, "csv").decode())))
    assert list(rows[0]) == ["schema_version", *ROW_FIELDS]
    for k in ROW_FIELDS:
        want = doc["rows"][0][k]
        got = rows[0][k]
        if isinstance(want, float):
            assert float(got) == pytest.approx(want)
        else:
            assert got == ("" if want is None else str(want))
    table = emit_report(nonlinear_report, "table").decode()
    assert table.startswith(f"schema_version: {SCHEMA_VERSION}") and "online_rounds" in table
    back = load_report(emit_report(nonlinear_report, "json"))
    assert back.rows == nonlinear_report.rows
    with pytest.raises(ValidationError):
        emit_report(nonlinear_report, "xml")
    with pytest.raises(ValidationError):
        load_report(json.dumps({"schema_version": "0"}))


def test_empty_report():
    r = summarize(BenchReport(spec=BenchSpec("nonlinear").to_dict()))
    assert r.rows == [] and r.totals == {}
    assert json.loads(emit_report(r))["rows"] == []
    assert emit_report(r, "csv").decode().count("\n") == 1
    assert "schema_version" in emit_report(r, "table").decode()


class _Boom:
    calls = 0

    def __init__(self, spec):
        self.inner = runner._Nonlinear(spec)

    def __call__(self, sess):
        with threading.Lock():
            _Boom.calls += 1
        if _Boom.calls > 3:  # second repetition
            raise RuntimeError("injected fault")
        return self.inner(sess)


def test_failure_marker(monkeypatch, capsys):
    monkeypatch.setitem(runner.WORKLOADS, "nonlinear", _Boom)
    _Boom.calls = 0
    r = run_bench(BenchSpec("nonlinear", 100))
    assert r.failed and "injected fault" in r.error
    assert r.rows[0].status == "failed after 1 reps"
    assert check_report(r)
    _Boom.calls = 3
    assert cli.main(["--suite", "nonlinear", "--size", "100", "--format", "json"]) == cli.EXIT_ERROR
    doc = json.loads(capsys.readouterr().out)
    assert doc["failed"] and doc["rows"][0]["status"] == "failed"


def test_cli_assert_exit_codes(monkeypatch, capsys, tmp_path):
    out = tmp_path / "r.csv"
    assert cli.main(["--suite", "nonlinear", "--size", "500", "--assert",
                     "--format", "csv", "--out", str(out)]) == cli.EXIT_OK
    assert out.read_text().startswith("schema_version,")
    monkeypatch.setattr(cli, "check_report", lambda r: ["synthetic violation"])
    assert cli.main(["--suite", "nonlinear", "--size", "500", "--assert"]) == cli.EXIT_ASSERT
    assert "synthetic violation" in capsys.readouterr().err


def test_cli_model_file_and_wan(tmp_path, capsys):
    cfg = tmp_path / "m.cfg"
    SMALL.save(cfg)
    assert cli.main(["--suite", "generate", "--size", "3", "--model", str(cfg), "--prompt-len", "2",
                     "--scheme", "stub", "--rtt-ms", "5", "--bandwidth-mbps", "100",
                     "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["spec"]["rtt_ms"] == 5 and len(doc["rows"]) == 3
    # every round is one one-way flight of rtt/2
    for row in doc["rows"]:
        assert row["time_mean_s"] >= row["online_rounds"] * 0.0025


def test_tcp_threads(capsys):
    port = free_ports(1)[0]
    # PORT..PORT+2 must be free as well; retry on the rare clash
    assert cli.main(["--suite", "nonlinear", "--size", "200", "--listen", f"127.0.0.1:{port}",
                     "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["rows"][0]["online_rounds"] == 3


def test_tcp_processes_and_merge(tmp_path):
    ports = dict(zip(("p0", "p1", "p2"), free_ports(3)))
    procs = []
    for role, port in ports.items():
        cmd = [sys.executable, "-m", "privinfer.bench.cli", "--suite", "nonlinear", "--size", "300",
               "--role", role, "--listen", f"127.0.0.1:{port}", "--format", "json",
               "--out", str(tmp_path / f"{role}.json")]
        cmd += [a for peer, pp in ports.items() if peer != role
                for a in ("--connect", f"{peer}=127.0.0.1:{pp}")]
        procs.append(subprocess.Popen(cmd, stderr=subprocess.PIPE))
    for p in procs:
        assert p.wait(timeout=120) == 0, p.stderr.read().decode()
    parts = [load_report((tmp_path / f"{r}.json").read_bytes()) for r in ports]
    assert all(p.raw for p in parts)
    merged = merge_reports(parts)
    assert merged.rows[0].online_rounds == 3 and merged.rows[0].status == "ok"
    local = run_bench(BenchSpec("nonlinear", 300))
    assert merged.rows[0].online_bytes == local.rows[0].online_bytes
    code = cli.main(["--merge", *(str(tmp_path / f"{r}.json") for r in ports), "--assert",
                     "--out", str(tmp_path / "m.txt")])
    assert code == 0
    with pytest.raises(ValidationError):
        merge_reports([parts[0], run_bench(BenchSpec("nonlinear", 301))])


def test_deterministic_bytes():
    a = run_bench(BenchSpec("nonlinear", 1000, seed=4, profile=LinkProfile.from_mbps(0, 0)))
    b = run_bench(BenchSpec("nonlinear", 1000, seed=4))
    assert a.rows[0].online_bytes == b.rows[0].online_bytes
