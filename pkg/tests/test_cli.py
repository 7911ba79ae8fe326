import csv
import json
import subprocess
import sys

import pytest

from poissonrep import harness
from poissonrep.cli import main

REQUIRED = {"example-1.5", "pairs-coding-budget", "return-times"}


def test_list_prints_scenarios(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    names = [line.split()[0] for line in out.splitlines() if line and not line.startswith("bundled")]
    assert len(names) >= 8
    assert REQUIRED <= set(names)
    assert "bundled specs:" in out


def test_every_scenario_has_an_anchor():
    for name, anchor in harness.list_scenarios():
        assert anchor and "§" not in anchor


def test_oracle_run_writes_tables_and_manifest(tmp_path, capsys):
    out = tmp_path / "o"
    code = main(["oracle", "--spec", "pair-0.5", "--seed", "3", "--replicas", "2000", "--out", str(out)])
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 3 and man["replicas"] == 2000
    assert man["config"]["kind"] == "oracle"
    assert man["backend"] in ("cython", "python")
    for f in man["files"]:
        assert (out / f).exists()
    with open(out / man["files"][0]) as fh:
        rows = list(csv.reader(fh))
    assert len(rows) >= 2


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["scenario", "oracle-pair", "--replicas", "5000", "--out", str(d)]) == 0
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_seed_changes_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["sample", "--seed", "1", "--replicas", "500", "--out", str(a)])
    main(["sample", "--seed", "2", "--replicas", "500", "--out", str(b)])
    assert any((a / f.name).read_bytes() != f.read_bytes() for f in b.iterdir() if f.suffix == ".csv")


@pytest.mark.parametrize("argv", [
    ["scenario", "no-such-scenario"],
    ["sample", "--spec", "no-such-spec"],
    ["markov", "--replicas", "0"],
])
def test_config_errors_exit_two(argv, capsys):
    assert main(argv) == 2
    assert "config error" in capsys.readouterr().err


def test_bad_config_file(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"kind": "sample", "seed": 1, "replicas": 10, "params": {"bogus": 1}}))
    assert main(["sample", "--config", str(p)]) == 2
    p.write_text("{not json")
    assert main(["sample", "--config", str(p)]) == 2
    p.write_text(json.dumps({"kind": "oracle", "seed": 1, "replicas": 10}))
    assert main(["sample", "--config", str(p)]) == 2


def test_config_file_is_used(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"kind": "censored", "spec": "censor-4-9", "seed": 4, "replicas": 4000,
                             "params": {"L": [0, 1], "window": [0, 1], "levels": 8}}))
    assert main(["censored", "--config", str(p)]) == 0


def test_assertion_failure_exits_three(monkeypatch, capsys):
    def boom(cfg):
        raise AssertionError("forced")

    monkeypatch.setitem(harness.RUNNERS, "oracle", boom)
    assert main(["oracle", "--replicas", "10"]) == 3
    assert "forced" in capsys.readouterr().err


def test_tolerance_failure_exits_four(monkeypatch):
    def failing(cfg):
        res = harness.Result()
        res.check("always fails", False, "forced")
        return res

    monkeypatch.setitem(harness.RUNNERS, "oracle", failing)
    assert main(["oracle", "--replicas", "10"]) == 4


def test_make_config_validation():
    with pytest.raises(harness.ConfigError):
        harness.make_config({"kind": "sample", "seed": 1})
    with pytest.raises(harness.ConfigError):
        harness.make_config({"kind": "sample", "seed": -1, "replicas": 3})
    with pytest.raises(harness.ConfigError):
        harness.make_config({"kind": "nope", "seed": 1, "replicas": 3})
    with pytest.raises(harness.ConfigError):
        harness.make_config({"kind": "sample", "seed": 1, "replicas": 3, "extra": 1})
    cfg = harness.make_config({"kind": "markov", "seed": 1, "replicas": 3}, seed=9)
    assert cfg.seed == 9 and cfg.params["t_cap"] == 200


def test_inline_spec_in_config():
    spec = harness.bundled_spec("mixed-1d").to_json()
    cfg = harness.make_config({"kind": "oracle", "spec": spec, "seed": 1, "replicas": 2000})
    status, res = harness.run(cfg)
    assert status == 0 and res.passed


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "poissonrep", "list"], capture_output=True, text=True)
    assert out.returncode == 0 and "example-1.5" in out.stdout
