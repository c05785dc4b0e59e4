import csv
import json
import logging

import pytest

from cvrplab import bench
from cvrplab.core import Solution, evaluate_cost, optimality_gap
from cvrplab.decode import DistanceHeuristicPolicy, rollout
from cvrplab.instances import generate_many, write_instance
from cvrplab.rrc import RrcConfig, rrc_run

STRATEGY_BY_AUG = [f"decode:strategy={s},aug={a}" for s in ("argmax", "beam,beam=4") for a in ("none", "fold8_flip")]


def test_two_by_two_matrix(tmp_path):
    spec = bench.ExperimentSpec(STRATEGY_BY_AUG, n=10, count=3, out_dir=str(tmp_path))
    table = bench.run_experiment(spec)
    assert len(table.summary) == 4
    assert all(s["runs"] == 3 and s["errors"] == 0 for s in table.summary.values())
    s = table.summary
    assert s["decode:strategy=argmax,aug=fold8_flip"]["mean_cost"] <= s["decode:strategy=argmax,aug=none"]["mean_cost"]


def test_oracle_gaps_nonnegative(tmp_path):
    spec = bench.ExperimentSpec(["construct:method=savings_parallel"], n=7, count=6, reference="oracle")
    rows = bench.run_experiment(spec).rows
    assert all(r["gap"] is not None and r["gap"] >= -1e-9 for r in rows)


def test_gap_iff_reference(tmp_path):
    insts = generate_many(6, 3, seed=1)
    ref = tmp_path / "ref.csv"
    ref.write_text(f"name,cost\n{insts[0].name},100\n")
    spec = bench.ExperimentSpec(["construct:method=sweep"], n=6, count=3, seed=1, reference=str(ref))
    rows = bench.run_experiment(spec).rows
    for r in rows:
        if r["instance"] == insts[0].name:
            assert r["gap"] == pytest.approx(optimality_gap(r["cost"], 100).gap)
        else:
            assert r["gap"] is None


def test_byte_identical_outputs(tmp_path):
    methods = ["construct:method=insertion,ls=1", "decode:strategy=softmax_sample,pomo=4",
               "rrc:iters=15"]
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        bench.run_experiment(bench.ExperimentSpec(methods, n=8, count=3, seed=42, repetitions=2,
                                                  out_dir=str(d)))
        outs.append(d)
    for name in ("results.csv", "summary.json", "solutions.jsonl", "plots/series_rrc.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_workers_do_not_change_results(tmp_path):
    methods = ["decode:strategy=gumbel_softmax", "construct:method=sweep_2opt"]
    a = bench.run_experiment(bench.ExperimentSpec(methods, n=8, count=4, seed=3))
    b = bench.run_experiment(bench.ExperimentSpec(methods, n=8, count=4, seed=3, workers=2))
    assert bench.rows_to_text(a.rows, fields=bench.RESULT_FIELDS) == bench.rows_to_text(b.rows, fields=bench.RESULT_FIELDS)


def test_costs_reverify_from_dump(tmp_path):
    inst_dir = tmp_path / "inst"
    inst_dir.mkdir()
    insts = generate_many(9, 3, seed=5)
    for i in insts:
        write_instance(i, inst_dir / f"{i.name}.txt")
    spec = bench.ExperimentSpec(["construct:method=nearest_parallel", "decode:strategy=beam,beam=2"],
                                instance_dir=str(inst_dir), out_dir=str(tmp_path / "out"), fmt="jsonl")
    bench.run_experiment(spec)
    by_name = {i.name: i for i in insts}
    results = [json.loads(line) for line in open(tmp_path / "out" / "results.jsonl")]
    dump = [json.loads(line) for line in open(tmp_path / "out" / "solutions.jsonl")]
    assert len(dump) == len(results) == 6
    costs = {(r["instance"], r["method"]): r["cost"] for r in results}
    for s in dump:
        inst = by_name[s["instance"]]
        assert evaluate_cost(inst, Solution.build(inst, s["routes"])) == costs[(s["instance"], s["method"])]


def test_failures_become_rows(tmp_path):
    broken = tmp_path / "broken.npz"
    broken.write_bytes(b"not a checkpoint")
    spec = bench.ExperimentSpec(["construct:method=sweep", "decode:strategy=argmax"], n=5, count=2,
                                policy=str(broken))
    table = bench.run_experiment(spec)
    errs = [r for r in table.rows if r["status"] == "error"]
    assert len(errs) == 2 and all(r["method"].startswith("decode") for r in errs)
    assert table.summary["construct:method=sweep"]["errors"] == 0


@pytest.mark.parametrize("kwargs", [dict(methods=[], n=5),
                                    dict(methods=["construct:method=sweep"]),
                                    dict(methods=["construct:method=nope"], n=5),
                                    dict(methods=["decode:aug=fold3"], n=5),
                                    dict(methods=["construct:method=sweep"], n=12, reference="oracle"),
                                    dict(methods=["rrc:iters=5"], n=5, policy="nowhere.npz")])
def test_spec_errors(kwargs):
    with pytest.raises(bench.SpecError):
        bench.run_experiment(bench.ExperimentSpec(**kwargs))


def test_plot_series(tmp_path):
    table = bench.run_experiment(bench.ExperimentSpec(STRATEGY_BY_AUG, n=8, count=3))
    paths = bench.emit_plot_data(table.rows, "strategy", tmp_path, x="aug")
    assert sorted(p.split("/")[-1] for p in paths) == ["series_argmax.csv", "series_beam.csv"]
    with open(paths[0]) as f:
        rows = list(csv.DictReader(f))
    assert [r["x"] for r in rows] == ["fold8_flip", "none"]
    assert all(int(r["count"]) == 3 for r in rows)


def test_rrc_budget_series_decreases(tmp_path):
    pol = DistanceHeuristicPolicy()
    rows = []
    for inst in generate_many(12, 10, seed=0):
        init = rollout(pol, inst, "argmax", first=1).solution(inst)
        trace = rrc_run(pol, inst, init, RrcConfig(iterations=40, seed=1)).trace
        for budget in (0, 10, 20, 40):
            cost = init.cost if budget == 0 else trace[budget - 1].best_cost
            rows.append({"method": "rrc:iters=40", "budget": budget, "cost": cost, "status": "ok"})
    [path] = bench.emit_plot_data(rows, "family", tmp_path, x="budget")
    with open(path) as f:
        means = [float(r["mean"]) for r in csv.DictReader(f)]
    assert len(means) == 4
    assert all(b <= a for a, b in zip(means, means[1:]))


def test_empty_group_skipped(tmp_path, caplog):
    rows = [{"method": "construct:method=sweep", "cost": 1.0, "status": "ok"},
            {"method": "decode:strategy=argmax", "cost": None, "status": "error"}]
    with caplog.at_level(logging.WARNING):
        paths = bench.emit_plot_data(rows, "family", tmp_path)
    assert [p.split("/")[-1] for p in paths] == ["series_construct.csv"]
    assert "decode" in caplog.text


def test_plot_needs_rows(tmp_path):
    with pytest.raises(ValueError):
        bench.emit_plot_data([], "family", tmp_path)
