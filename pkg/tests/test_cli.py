import json
import subprocess
import sys

import pytest

from cvrplab.cli import main


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture
def inst_dir(tmp_path):
    assert run("gen", "--n", 6, "--count", 3, "--seed", 4, "--out", tmp_path / "inst") == 0
    return tmp_path / "inst"


def test_gen_writes_files(inst_dir):
    assert len(list(inst_dir.iterdir())) == 3


@pytest.mark.parametrize("cmd", [["solve", "--method", "insertion", "--ls"],
                                 ["decode", "--strategy", "beam", "--beam", "3", "--aug", "fold4"],
                                 ["rrc", "--iterations", "10"],
                                 ["oracle"]])
def test_subcommands(cmd, inst_dir, tmp_path):
    out = tmp_path / "rows.jsonl"
    assert run(*cmd, inst_dir, "--out", out, "--format", "jsonl") == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(rows) == 3 and all(r["status"] == "ok" for r in rows)


def test_solve_not_below_oracle(inst_dir, tmp_path, capsys):
    run("oracle", inst_dir, "--format", "jsonl")
    opt = [json.loads(line)["cost"] for line in capsys.readouterr().out.splitlines()]
    run("solve", inst_dir, "--method", "sweep", "--format", "jsonl")
    heur = [json.loads(line)["cost"] for line in capsys.readouterr().out.splitlines()]
    assert all(h >= o - 1e-9 for h, o in zip(heur, opt))


def test_train_then_decode(tmp_path):
    ckpt = tmp_path / "p.npz"
    assert run("train-toy", "--n", 5, "--count", 3, "--epochs", 2, "--checkpoint", ckpt,
               "--out", tmp_path / "hist.csv", "--embed-dim", 4, "--heads", 1, "--layers", 1) == 0
    assert ckpt.exists()
    assert (tmp_path / "hist.csv").read_text().startswith("epoch,value")
    assert run("train-toy", "--mode", "reinforce", "--n", 5, "--count", 2, "--epochs", 1,
               "--checkpoint", tmp_path / "r.npz", "--embed-dim", 4, "--heads", 1, "--layers", 1) == 0
    assert run("decode", "--n", 5, "--count", 2, "--policy", ckpt) == 0


def test_bench_and_exit_codes(tmp_path):
    out = tmp_path / "b"
    assert run("bench", "--n", 6, "--count", 2, "--method", "construct:method=sweep",
               "--reference", "oracle", "--out", out) == 0
    assert (out / "results.csv").exists() and (out / "summary.json").exists()
    broken = tmp_path / "broken.npz"
    broken.write_bytes(b"junk")
    assert run("bench", "--n", 5, "--count", 2, "--method", "decode:strategy=argmax",
               "--policy", broken, "--out", tmp_path / "c") == 2
    assert run("bench", "--n", 12, "--method", "construct:method=sweep", "--reference", "oracle") == 1
    assert run("oracle", "--n", 12, "--count", 1) == 2  # per-instance failure, not a bad request
    assert run("solve", tmp_path / "nothing.txt") == 1


def test_bench_config_file(tmp_path):
    cfg = tmp_path / "spec.json"
    cfg.write_text(json.dumps({"methods": ["construct:method=savings_sequential"], "n": 5, "count": 2}))
    assert run("bench", "--config", cfg, "--out", tmp_path / "o") == 0
    cfg.write_text(json.dumps({"methods": ["x"], "bogus": 1}))
    assert run("bench", "--config", cfg) == 1


def test_bad_arguments_exit_one():
    proc = subprocess.run([sys.executable, "-m", "cvrplab", "solve", "--method", "nope"],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert "invalid choice" in proc.stderr
