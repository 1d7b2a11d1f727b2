import csv
import json
import socket
import subprocess
import sys
from pathlib import Path

import pytest

from vbqc_aces.cli import main
from vbqc_aces.estimator import ESTIMATE_COLUMNS, HISTOGRAM_COLUMNS, STATS_COLUMNS
from vbqc_aces.experiment import ExperimentSpec, SpecError, parse_noise_spec

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def header(path):
    with open(path) as fh:
        return next(csv.reader(fh))


def write_json(path, data):
    path.write_text(json.dumps(data))
    return path


def test_plan_kite(tmp_path, capsys):
    assert main(["plan", str(CONFIGS / "kite.json"), "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "parameters covered: 10/10" in out
    assert "structurally rejected equations: 0" in out
    assert json.loads((tmp_path / "plan.json").read_text())["orderings"]


def test_plan_grid(tmp_path, capsys):
    assert main(["plan", str(CONFIGS / "grid12.json"), "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "parameters covered: 528/528" in out
    assert "quoted ordering bounds (not asserted): 16, 28" in out


def test_plan_path(tmp_path, capsys):
    assert main(["plan", str(CONFIGS / "path3.json"), "--out-dir", str(tmp_path)]) == 0
    plan = json.loads((tmp_path / "plan.json").read_text())
    ids = [o["id"] for o in plan["orderings"]]
    assert sum(i.startswith("c") for i in ids) == 2
    assert any(i.startswith("d") for i in ids)


def test_plan_invalid_file(tmp_path, capsys):
    bad = write_json(tmp_path / "g.json", {"vertices": 2, "edges": [[0, 5]]})
    assert main(["plan", str(bad), "--out-dir", str(tmp_path)]) == 1
    assert main(["plan", str(tmp_path / "missing.json")]) == 1


def test_experiment_kite_exact(tmp_path, capsys):
    assert main(["experiment", str(CONFIGS / "kite_exact.json"), "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "P_1(C)=0.9867376" in out
    assert "P_1(C')=0.9893759" in out
    assert "=0.997333" in out
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert abs(summary["probes"][0]["ratio"] - 0.997333) < 1e-6
    assert header(tmp_path / "estimates_exact.csv") == ESTIMATE_COLUMNS


def test_experiment_smoke_outputs_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["experiment", str(CONFIGS / "grid_smoke.json"), "--shots", "500", "--shots", "5000"]
    assert main(args + ["--out-dir", str(a)]) == 0
    assert main(args + ["--out-dir", str(b)]) == 0
    out = capsys.readouterr().out
    assert "mean diff" in out and "std diff" in out and "rejected rows" in out
    files = sorted(p.name for p in a.glob("*.csv"))
    assert "histogram_std0.002_shots500.csv" in files
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert header(a / "trap_stats_std0.002_shots500.csv") == STATS_COLUMNS
    assert header(a / "histogram_std0.002_shots5000.csv") == HISTOGRAM_COLUMNS


def test_experiment_rejects_zero_shots(tmp_path, capsys):
    assert main(["experiment", str(CONFIGS / "grid_smoke.json"), "--shots", "0", "--out-dir", str(tmp_path)]) == 1
    spec = write_json(tmp_path / "s.json", {"graph": {"named": "path", "n": 3}, "noise": {"uniform": {"p": 0.01}}, "shots": 0})
    assert main(["experiment", str(spec), "--out-dir", str(tmp_path)]) == 1
    assert "shots" in capsys.readouterr().err


def test_noise_spec_needs_exactly_one_kind():
    with pytest.raises(SpecError):
        parse_noise_spec({"uniform": {"p": 0.1}, "gaussian": {"mean": 0.1, "std": 0}})
    with pytest.raises(SpecError):
        parse_noise_spec({})
    with pytest.raises(SpecError):
        ExperimentSpec.from_dict({"graph": {"named": "path", "n": 3}, "mode": "bogus", "shots": 5})


def test_estimate_round_trip(tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["experiment", str(CONFIGS / "grid_smoke.json"), "--shots", "3000", "--out-dir", str(run)]) == 0
    graph = write_json(tmp_path / "g.json", {"lattice": {"width": 4, "height": 4}})
    out = tmp_path / "est"
    code = main(["estimate", str(run / "trap_stats_std0.002_shots3000.csv"), "--graph", str(graph),
                 "--plan", str(run / "plan.json"), "--bootstrap", "20", "--out-dir", str(out)])
    assert code == 0
    assert "parameters=48" in capsys.readouterr().out
    assert header(out / "estimates.csv") == ESTIMATE_COLUMNS


def test_protocol_noiseless_accepts(tmp_path, capsys):
    assert main(["protocol", str(CONFIGS / "kite_protocol.json"), "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "verdict: accept" in out and "failed test rounds: 0" in out
    assert header(tmp_path / "trap_stats.csv") == STATS_COLUMNS


def test_protocol_attack_aborts(tmp_path, capsys):
    assert main(["protocol", str(CONFIGS / "kite_attack.json"), "--out-dir", str(tmp_path)]) == 2
    assert "verdict: abort" in capsys.readouterr().out


def test_protocol_transports_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    spec = str(CONFIGS / "kite_protocol_noisy.json")
    assert main(["protocol", spec, "--seed", "3", "--out-dir", str(a)]) == 0
    assert main(["protocol", spec, "--seed", "3", "--transport", "tcp", "--out-dir", str(b)]) == 0
    for name in ("records.json", "trap_stats.csv", "estimates.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_protocol_split_roles_match_inprocess(tmp_path, capsys):
    spec = str(CONFIGS / "kite_protocol.json")
    ref = tmp_path / "ref"
    assert main(["protocol", spec, "--out-dir", str(ref)]) == 0
    addr = f"127.0.0.1:{_free_port()}"
    cmd = [sys.executable, "-m", "vbqc_aces.cli", "protocol", spec]
    server = subprocess.Popen(cmd + ["--role", "server", "--listen", addr, "--out-dir", str(tmp_path / "srv")],
                              stdout=subprocess.PIPE, text=True)
    client = subprocess.run(cmd + ["--role", "client", "--connect", addr, "--out-dir", str(tmp_path / "cli")],
                            capture_output=True, text=True, timeout=120)
    server_out, _ = server.communicate(timeout=120)
    assert client.returncode == 0 and server.returncode == 0
    assert "verdict: accept" in client.stdout and "verdict: accept" in server_out
    assert (tmp_path / "srv" / "trap_stats.csv").read_bytes() == (ref / "trap_stats.csv").read_bytes()
    records = json.loads((ref / "records.json").read_text())
    assert json.loads((tmp_path / "cli" / "client_records.json").read_text()) == records["client_records"]
    assert json.loads((tmp_path / "srv" / "server_records.json").read_text()) == records["server_records"]


def test_protocol_missing_field(tmp_path, capsys):
    spec = write_json(tmp_path / "p.json", {"N": 3, "d": 1, "graph": {"named": "diamond_kite"}})
    assert main(["protocol", str(spec), "--out-dir", str(tmp_path)]) == 1
