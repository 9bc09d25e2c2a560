import json
import subprocess
import sys

import pytest

from mbrl.cli import EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, main


@pytest.fixture
def workdir(tmp_path):
    cfg = {"mode": "offline", "env": {"family": "random_stochastic", "S": 3, "A": 2, "H": 3}, "K": 25,
           "num_seeds": 2, "sweep": {"K": [10, 20]}, "model_class": {"size": 5, "scale": 0.5}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    return tmp_path


def run(*args):
    return main([str(a) for a in args])


def test_gen_offline_analyze(workdir, capsys):
    c, m, k, d = (workdir / n for n in ("c.json", "m.json", "k.json", "d.jsonl"))
    assert run("gen", "env", "--config", c, "--out", m) == EXIT_OK
    assert run("gen", "class", "--config", c, "--out", k) == EXIT_OK
    assert run("gen", "data", "--config", c, "--out", d) == EXIT_OK
    assert len(d.read_text().splitlines()) == 25
    out = workdir / "res.json"
    assert run("offline", "--config", c, "--data", d, "--out", out) == EXIT_OK
    res = json.loads(out.read_text())
    assert res["gap"] >= 0 and "chosen_policy" in res
    # same result when the artifacts are passed explicitly
    assert run("offline", "--config", c, "--data", d, "--mdp", m, "--class", k, "--out", out) == EXIT_OK
    assert json.loads(out.read_text())["beta"] == res["beta"]
    capsys.readouterr()
    assert run("analyze", "--mdp", m, "--class", k, "--epsilon", "0.1") == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert set(report) == {"psi_envelope", "de1_by_epsilon", "simulation_checks", "variance_checks"}


def test_gen_class_for_given_mdp(workdir):
    c, m, k = (workdir / n for n in ("c.json", "m.json", "k.json"))
    run("gen", "env", "--config", c, "--out", m, "--replica", 1)
    assert run("gen", "class", "--config", c, "--mdp", m, "--out", k) == EXIT_OK


def test_online_outputs(tmp_path, capsys):
    cfg = {"env": {"family": "chain", "S": 3, "A": 2, "H": 3}, "K": 12, "num_seeds": 2,
           "outputs": {"csv": str(tmp_path / "run.csv"), "json": str(tmp_path / "run.json")}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert run("online", "--config", tmp_path / "c.json") == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert len(summary["runs"]) == 2
    assert (tmp_path / "run.seed1.csv").read_text().startswith("# schema_version=1")
    assert json.loads((tmp_path / "run.seed0.json").read_text())["schema_version"] == 1


def test_sweep(workdir, capsys):
    assert run("sweep", "--config", workdir / "c.json", "--axis", "K") == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "# schema_version=1" and len(lines) == 6


def test_config_error_exit_code(tmp_path, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({"delta": 1.5}))
    assert run("online", "--config", tmp_path / "bad.json") == EXIT_CONFIG
    assert run("online", "--config", tmp_path / "missing.json") == EXIT_CONFIG
    (tmp_path / "junk.json").write_text("{not json")
    assert run("sweep", "--config", tmp_path / "junk.json", "--axis", "K") == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_invariant_exit_code(tmp_path, workdir):
    c, m, k = (workdir / n for n in ("c.json", "m.json", "k.json"))
    run("gen", "env", "--config", c, "--out", m)
    run("gen", "class", "--config", c, "--out", k)
    doc = json.loads(m.read_text())
    doc["P"][0][0] = [1.0, 1.0, 0.0]
    (tmp_path / "broken.json").write_text(json.dumps(doc))
    assert run("analyze", "--mdp", tmp_path / "broken.json", "--class", k) == EXIT_INVARIANT
    bad_data = tmp_path / "bad.jsonl"
    bad_data.write_text('{"steps": [[0, 0, 1], [2, 0, 1], [1, 0, 0]]}\n')
    assert run("offline", "--config", c, "--data", bad_data) == EXIT_INVARIANT


def test_console_entry_point(workdir):
    proc = subprocess.run([sys.executable, "-m", "mbrl.cli", "sweep", "--config", str(workdir / "c.json"),
                           "--axis", "K"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("# schema_version=1")
    proc = subprocess.run([sys.executable, "-m", "mbrl.cli", "online", "--config", "/nonexistent.json"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
