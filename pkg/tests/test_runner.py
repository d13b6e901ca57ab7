import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from gradslide import gen_portfolio, gen_quadratic, save_instance
from gradslide.errors import BudgetTooSmall, ConfigError, IoError, SolverError
from gradslide.runner import (
    CostModel,
    RunConfig,
    load_config,
    main,
    race,
    run,
    trace_csv,
)
from gradslide.sliding import schedule_cor2


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_solve_smooth_writes_one_row_per_iteration(tmp_path):
    out = tmp_path / "run"
    summary = run(RunConfig("solve-smooth", generator={"n": 50}, N=100, out=str(out)))
    rows = _rows(out / "trace.csv")
    assert len(rows) == 100
    assert rows[-1]["n_grad_f"] == "100"
    assert list(rows[0]) == ["k", "n_grad_f", "n_grad_h", "n_apply_K", "n_apply_Kt", "cost"]
    assert summary["counters"]["n_grad_f"] == 100 and summary["iterations"] == 100
    # schedule constants are echoed and match the closed forms
    c = summary["constants"]
    sched = schedule_cor2(1.0, 100.0)
    assert c["gamma_1"] == 1.0 and c["beta_1"] == pytest.approx(sched.beta(1))
    assert (c["T_1"], c["T_k"]) == (sched.T(1), sched.T(2))
    assert c["alpha"] == pytest.approx(sched.alpha) and c["p"] == pytest.approx(sched.p)
    assert summary["cost"] == pytest.approx(2500 * 100 + 50 * (sched.T(1) + 99 * sched.T(2)))
    assert json.loads((out / "timing.json").read_text())["wall_seconds"] >= 0


def test_outputs_are_byte_identical_across_reruns(tmp_path):
    cfg = dict(generator={"n": 12, "M": 30.0}, N=25, trace_objective=True, solver="ags-cor1")
    run(RunConfig("solve-smooth", out=str(tmp_path / "a"), **cfg))
    run(RunConfig("solve-smooth", out=str(tmp_path / "b"), **cfg))
    for name in ("trace.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    raw = (tmp_path / "a" / "trace.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    assert raw.splitlines()[0].endswith(b",objective")


def test_csv_float_format():
    from gradslide.sliding import RunTrace, TraceRow
    tr = RunTrace(rows=[TraceRow(1, 0, 1, 3, 0, 0, 0.5, 0.1)])
    text = trace_csv(tr, CostModel(0.1, 0.2, 0.0), with_objective=True)
    assert text == "k,n_grad_f,n_grad_h,n_apply_K,n_apply_Kt,cost,objective\n" \
                   "1,1,3,0,0,0.70000000000000007,0.10000000000000001\n"
    assert float(text.split(",")[-1]) == 0.1


def test_gen_tv_then_solve_spp(tmp_path):
    assert main(["gen-tv", "--rows", "8", "--cols", "8", "--eta", "0.1", "--seed", "3",
                 "--out", str(tmp_path / "gen")]) == 0
    inst_path = tmp_path / "gen" / "instance.json"
    gen = json.loads((tmp_path / "gen" / "summary.json").read_text())
    assert gen["instance"]["rows"] == 8 and gen["instance"]["K_norm"] == pytest.approx(0.1 * 8**0.5)
    assert main(["solve-spp", "--instance", str(inst_path), "--eps", "1e-2",
                 "--out", str(tmp_path / "spp")]) == 0
    s = json.loads((tmp_path / "spp" / "summary.json").read_text())
    Omega = 64 / 2
    rho = 1e-2 / (2 * Omega)
    assert s["constants"]["rho"] == pytest.approx(rho, rel=1e-15)
    assert s["constants"]["M"] == pytest.approx(0.01 * 8 / rho, rel=1e-12)
    assert s["constants"]["Omega"] == Omega
    rows = _rows(tmp_path / "spp" / "trace.csv")
    assert len(rows) == s["constants"]["N"]
    last = rows[-1]
    assert int(last["n_apply_K"]) == int(last["n_apply_Kt"]) == s["counters"]["n_grad_h"]


def test_solve_mags_and_dyn(tmp_path):
    s = run(RunConfig("solve-mags", generator={"n": 10, "mu": 0.2, "M": 20.0}, eps=1e-6,
                      out=str(tmp_path / "m")))
    plan_S, N0 = s["constants"]["S"], s["constants"]["N0"]
    assert s["counters"]["n_grad_f"] == plan_S * N0
    inst = gen_quadratic(10, mu=0.2, M=20.0)
    x_star = np.linalg.solve(inst.Qf + inst.Qh, -inst.c)
    assert s["final_objective"] - inst.objective(x_star) <= 1e-6
    d = run(RunConfig("solve-dyn", generator={"rows": 4, "cols": 4, "mu": 0.5, "eta": 1.0},
                      eps=1e-2, out=str(tmp_path / "d")))
    assert d["solver"] == "mags-dyn" and len(d["constants"]["stage_M"]) == d["constants"]["S"]
    with pytest.raises(ConfigError):
        run(RunConfig("solve-dyn", generator={"rows": 4, "cols": 4}, out=str(tmp_path / "x")))


def test_race_identical_solvers_is_exactly_even():
    inst = gen_portfolio(30, 4, 16.0, seed=0)
    res = race(inst, ("ags-cor2", "ags-cor2"), budget=5000.0)
    assert res.ratio == 1.0
    assert res.entries[0].counters == res.entries[1].counters


def test_race_spends_budget_and_free_inner_steps_help():
    inst = gen_portfolio(60, 6, 64.0, seed=1)
    base = race(inst)
    assert base.budget == 300 * (60 + 6) and base.entries[0].N == 300
    nest, ags = base.entries
    assert nest.cost == base.budget
    T = schedule_cor2(inst.L, inst.M).T(2)
    assert ags.cost <= base.budget < ags.cost + 60 + 6 * T  # the next step would not fit
    # zero-priced inner steps against the run where both gradients cost the same
    for seed in range(4):
        inst = gen_portfolio(60, 6, 64.0, seed=seed)
        equal = race(inst, budget=200.0, costs=CostModel(1.0, 1.0, 0.0))
        free = race(inst, budget=200.0, costs=CostModel(1.0, 0.0, 0.0))
        assert free.ratio >= equal.ratio
    s = base.summary()
    assert s["solvers"][0]["solver"] == "nest" and "within_one_percent" in s


def test_race_errors():
    inst = gen_portfolio(30, 4, 16.0, seed=0)
    with pytest.raises(BudgetTooSmall):
        race(inst, budget=10.0)
    with pytest.raises(ConfigError):
        race(inst, ("nest",))
    with pytest.raises(ConfigError):
        race(inst, costs=CostModel(0.0, 0.0, 0.0))


def test_race_command_writes_both_traces(tmp_path):
    rc = main(["race", "--n", "30", "--m", "4", "--ratio", "16", "--budget", "3000",
               "--out", str(tmp_path)])
    assert rc == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    for i, e in enumerate(s["race"]["solvers"]):
        rows = _rows(tmp_path / f"trace_{i}_{e['solver']}.csv")
        assert len(rows) == e["N"]
        assert float(rows[-1]["cost"]) == pytest.approx(e["cost"])


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"schema": "gradslide.config/1", "command": "solve-smooth",
                               "generator": {"n": 8}, "N": 5, "solver": "nest"}))
    c = load_config(cfg, N=7)
    assert (c.N, c.solver, c.generator) == (7, "nest", {"n": 8})
    assert main(["solve-smooth", "--config", str(cfg), "--N", "9", "--out", str(tmp_path / "o")]) == 0
    assert len(_rows(tmp_path / "o" / "trace.csv")) == 9
    # config for another command is rejected
    assert main(["race", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 2


@pytest.mark.parametrize("data", [
    {"command": "solve-smooth", "schema": "gradslide.config/0"},
    {"command": "fly"},
    {"command": "solve-smooth", "solver": "newton"},
    {"command": "solve-smooth", "N": 0},
    {"command": "solve-smooth", "eps": -1.0},
    {"command": "solve-smooth", "seed": -3},
    {"command": "solve-smooth", "colour": "red"},
    {"command": "race", "solvers": ["nest"]},
    {},
])
def test_config_validation(data, tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ConfigError):
        load_config(path)


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve-smooth", "--config", str(bad)]) == 2
    assert main(["solve-smooth", "--config", str(tmp_path / "missing.json")]) == 4
    assert main(["solve-smooth", "--instance", str(tmp_path / "missing.json")]) == 4
    assert main(["solve-spp", "--n", "5", "--out", str(tmp_path)]) == 2
    assert main(["gen-tv", "--rows", "1", "--cols", "3", "--out", str(tmp_path)]) == 2
    # budget too small for one iteration is a solver failure
    assert main(["race", "--n", "20", "--m", "2", "--ratio", "4", "--budget", "1", "--out", str(tmp_path)]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["solve-smooth", "--n", "4", "--N", "2", "--out", str(blocker / "sub")]) == 4
    assert main([]) == 2
    err = capsys.readouterr().err
    assert "gradslide:" in err


def test_solver_failure_maps_to_solver_error(tmp_path):
    # the simplex-constrained QP is fine for AGS but a bad start point is not
    inst = gen_quadratic(4, set_kind="simplex")
    inst.Qh[:] = np.nan
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    with pytest.raises(SolverError):
        run(RunConfig("solve-smooth", instance=str(path), N=3, out=str(tmp_path / "o")))


def test_instance_file_errors(tmp_path):
    p = tmp_path / "i.json"
    p.write_text(json.dumps({"schema": "gradslide.instance/1", "kind": "lasso"}))
    with pytest.raises(ConfigError):
        run(RunConfig("solve-smooth", instance=str(p), out=str(tmp_path)))
    with pytest.raises(IoError):
        run(RunConfig("solve-smooth", instance=str(tmp_path / "nope.json"), out=str(tmp_path)))


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gradslide", "solve-smooth", "--n", "6",
                           "--N", "3", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert math.isfinite(json.loads((tmp_path / "summary.json").read_text())["final_objective"])
