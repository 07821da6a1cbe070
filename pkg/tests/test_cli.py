from __future__ import annotations

import json

import pytest

from alphadla import EventLog, green, load_table
from alphadla.cli import main, parse_set


def test_green(capsys, tmp_path, table05):
    path = tmp_path / "g05.npz"
    assert main(["green", "--alpha", "0.5", "--x", "0", "7", "--save", str(path)]) == 0
    out = capsys.readouterr().out
    assert f"G(7) = {green(table05, 7)!r}" in out
    assert load_table(path).fingerprint() == table05.fingerprint()
    assert main(["green", "--alpha", "0.5", "--table", str(path), "--x", "3"]) == 0
    assert f"G(3) = {green(table05, 3)!r}" in capsys.readouterr().out


def test_capa(capsys, table05):
    assert main(["capa", "--alpha", "0.5", "--set", "interval:0", "--show-w"]) == 0
    out = capsys.readouterr().out
    cap = float(out.split("capacity=")[1].split()[0])
    assert cap == pytest.approx(1 / table05.g0, rel=1e-14)
    assert main(["capa", "--alpha", "0.5", "--set", "bogus:3"]) == 2


def test_parse_set(tmp_path):
    f = tmp_path / "pts.txt"
    f.write_text("3\n-1\n\n8\n")
    assert parse_set(f"file:{f}") == [3, -1, 8]
    assert parse_set("interval:3") == [0, 1, 2, 3]
    assert parse_set("cantor:1") == [0, 2]
    assert parse_set("progression:4,3") == [0, 4, 8, 12]


def test_dla_run(capsys, tmp_path):
    out = tmp_path / "run.jsonl"
    assert main(["dla", "run", "--alpha", "0.5", "--n", "32", "--seed", "4", "--out", str(out),
                 "--split-threshold", "value:100"]) == 0
    log = EventLog.load(out)
    assert log.final_size == 32 and log.header["seed"] == 4 and log.header["split_threshold"] == 100
    assert capsys.readouterr().out.startswith("n=32 ")
    # global flags are accepted before the subcommand too
    assert main(["--out-dir", str(tmp_path / "d"), "dla", "run", "--alpha", "0.5", "--n", "8"]) == 0
    assert (tmp_path / "d" / "dla_0.5_8_0.jsonl").exists()


def test_sdla_run_and_couple(capsys, tmp_path):
    assert main(["sdla", "run", "--alpha", "0.25", "--n", "32", "--q", "1", "--D", "1000",
                 "--runs", "2"]) == 0
    lines = [json.loads(s) for s in capsys.readouterr().out.splitlines()]
    assert [r["seed"] for r in lines] == [0, 1] and all(r["D"] == 1000 for r in lines)
    out = tmp_path / "c.jsonl"
    assert main(["sdla", "couple", "--alpha", "0.25", "--n", "32", "--q", "2", "--D", "1000",
                 "--out", str(out)]) == 0
    reps = [json.loads(s) for s in out.read_text().splitlines()]
    assert len(reps) == 1 and reps[0]["q"] == 2


def test_exp_exit_codes(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"alphas": [0.5], "levels": 3}))
    out_dir = tmp_path / "r"
    assert main(["exp", "cantor", "--config", str(cfg), "--out-dir", str(out_dir)]) == 0
    assert "[PASS]" in capsys.readouterr().out
    assert (out_dir / "exp_cantor.csv").exists() and (out_dir / "exp_cantor.provenance.json").exists()
    cfg.write_text(json.dumps({"alphas": [0.5], "runs": 2, "coupling_n": [32], "D": 100}))
    assert main(["exp", "coupling", "--config", str(cfg), "--out-dir", str(out_dir)]) == 2
    assert "1/3" in capsys.readouterr().err
    cfg.write_text(json.dumps({"alphas": [0.5], "nope": 1}))
    assert main(["exp", "cantor", "--config", str(cfg)]) == 2


def test_exp_failing_check_exits_1(tmp_path, monkeypatch):
    from alphadla import harness

    def fake(config):
        return harness.ExperimentResult("exp_cantor", checks=[harness.Check("x", 5.0, None, 1.0)])

    monkeypatch.setitem(harness.EXPERIMENTS, "cantor", fake)
    assert main(["exp", "cantor", "--out-dir", str(tmp_path)]) == 1


def test_usage_errors():
    with pytest.raises(SystemExit):
        main(["green"])
