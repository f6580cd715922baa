import json
import os
import warnings

import numpy as np
import pytest

from helpers import freq_trace
from rsfkit import nets
from rsfkit.cli import export_plotdata, main
from rsfkit.models import SystemModel, load_model, save_model
from rsfkit.rsf import EpsilonQuery, epsilon_bound, load_certificate
from rsfkit.specs import Shutdown, save_spec
from rsfkit.symbolic import GridAbstraction, load_controller

CERT = nets.data_path("nets_area1_nonlinear.cert.json")


def test_usage_errors(capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["rsf", "epsilon", "--cert", CERT, "--bogus"]) == 2
    assert main(["monitor", "--trace", "/nonexistent.csv", "--spec", "spec_area1.json"]) == 2
    assert "usage" in capsys.readouterr().err


def test_rsf_epsilon_prints_value(capsys):
    assert main(["rsf", "epsilon", "--cert", CERT, "--dmax", "1", "--u2max", "0.5"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("epsilon = ")
    m1 = load_model(nets.data_path("nets_area1_nonlinear.json"))
    m2 = load_model(nets.data_path("nets_area1_nonlinear_abstract.json"))
    want = epsilon_bound(load_certificate(CERT), m1, m2, EpsilonQuery(1.0, 0.5))
    assert abs(float(out.split("=")[1]) - want) <= 5e-5


def test_rsf_verify_exit_codes(capsys, tmp_path):
    # printed equalities hold only to rounding, the LMIs hold outright
    assert main(["rsf", "verify", "--cert", CERT, "--json", str(tmp_path / "v.json")]) == 1
    assert main(["rsf", "verify", "--cert", CERT, "--lmi-only"]) == 0
    rep = json.loads((tmp_path / "v.json").read_text())
    assert rep["lmis_passed"] and not rep["equalities_passed"]


def test_monitor_shutdown_dip(tmp_path, capsys):
    t = np.arange(0, 5.0 + 1e-9, 0.01)
    f = np.where(t >= 1.234, 46.9, 50.0)
    freq_trace(t, f).to_csv(tmp_path / "bad.csv")
    save_spec(Shutdown(), tmp_path / "shutdown.json")
    code = main(["monitor", "--trace", str(tmp_path / "bad.csv"), "--spec", str(tmp_path / "shutdown.json")])
    assert code == 1
    err = capsys.readouterr().err
    assert "violated at t = 1.24" in err
    freq_trace(t, np.full_like(t, 50.0)).to_csv(tmp_path / "ok.csv")
    assert main(["monitor", "--trace", str(tmp_path / "ok.csv"), "--spec", str(tmp_path / "shutdown.json")]) == 0


def test_monitor_needs_loss(tmp_path):
    t = np.arange(0, 1.0 + 1e-9, 0.1)
    freq_trace(t, np.full_like(t, 50.0)).to_csv(tmp_path / "ok.csv")
    (tmp_path / "normal.json").write_text(json.dumps({"variant": "statutory_normal"}))
    args = ["monitor", "--trace", str(tmp_path / "ok.csv"), "--spec", str(tmp_path / "normal.json")]
    assert main(args) == 2
    assert main(args + ["--loss", "1000"]) == 0


def test_reduce_round_trip_and_determinism(tmp_path, capsys):
    outs = []
    for k in range(2):
        out = tmp_path / f"red{k}.json"
        proj = tmp_path / f"P{k}.csv"
        assert main(["reduce", "--model", "nets_area1_linear.json", "--order", "3", "--out", str(out),
                     "--proj", str(proj)]) == 0
        outs.append((out.read_bytes(), proj.read_bytes()))
    assert outs[0] == outs[1]
    m = load_model(tmp_path / "red0.json")
    save_model(m, tmp_path / "again.json")
    assert load_model(tmp_path / "again.json").to_dict() == m.to_dict()
    assert np.loadtxt(tmp_path / "P0.csv", delimiter=",").shape == (9, 3)


def test_construct_for_given_pair(tmp_path, capsys):
    red, proj = tmp_path / "red.json", tmp_path / "P.csv"
    assert main(["reduce", "--model", "nets_area1_linear.json", "--out", str(red), "--proj", str(proj)]) == 0
    poles = ",".join(str(-2.0 - 0.5 * k) for k in range(9))
    code = main(["rsf", "construct", "--m1", "nets_area1_linear.json", "--m2", str(red), "--proj", str(proj),
                 f"--poles={poles}", "--out-cert", str(tmp_path / "c.json")])
    assert code in (0, 1)
    cert = load_certificate(tmp_path / "c.json")
    assert cert.P.shape == (9, 3)
    assert main(["rsf", "construct", "--m1", "nets_area1_linear.json", "--m2", str(red),
                 "--out-cert", str(tmp_path / "c2.json")]) == 2


def test_construct_fits_abstraction(tmp_path, capsys):
    code = main(["rsf", "construct", "--m1", "nets_area1_nonlinear.json", "--k2-from", CERT,
                 "--out-model", str(tmp_path / "m2.json"), "--out-cert", str(tmp_path / "c.json")])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["lmis_passed"] and out["epsilon"] > 0


def _scalar_setup(tmp_path):
    save_model(SystemModel(A=[[-1.0]], B=[[1.0]], C=[[1.0]]), tmp_path / "m.json")
    grid = GridAbstraction([-1.0], [1.0], 0.05, [-0.5, 0.0, 0.5], 0.1)
    (tmp_path / "grid.json").write_text(json.dumps(grid.to_dict()))
    return ["--model", str(tmp_path / "m.json"), "--grid", str(tmp_path / "grid.json"), "--spec", "spec_area1.json"]


def test_synth_success_and_infeasible(tmp_path, capsys):
    base = _scalar_setup(tmp_path)
    assert main(["synth"] + base + ["--out", str(tmp_path / "c.txt")]) == 0
    out = json.loads(capsys.readouterr().out)
    # every cell strictly inside the safe band [-0.35, 0.5] wins: [-0.3, 0.45) is 15 cells
    assert out["origin_winning"] and out["winning_cells"] == 15 and out["cells"] == 40
    assert load_controller(tmp_path / "c.txt").success
    assert main(["synth"] + base + ["--epsilon", "0.5", "--out", str(tmp_path / "d.txt")]) == 1


def test_synth_deterministic(tmp_path, capsys):
    base = _scalar_setup(tmp_path)
    main(["synth"] + base + ["--out", str(tmp_path / "a.txt")])
    main(["synth"] + base + ["--out", str(tmp_path / "b.txt")])
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def test_closedloop_export_two_panels(tmp_path, capsys):
    rep = tmp_path / "rep"
    code = main(["closedloop", "--cert", CERT, "--horizon", "1.0", "--spec", "spec_area1.json",
                 "--out", str(rep)])
    assert code in (0, 1)
    files = export_plotdata(str(rep), str(tmp_path / "plots"))
    assert len(files) == 2
    head = open(files[0]).readline().strip()
    assert head == "t,value,band_T_lo,band_T_hi,band_A_lo,band_A_hi"


def test_scenario_export_six_panels(tmp_path, capsys):
    rep = tmp_path / "rep"
    code = main(["scenario", "run", "--config", "scenario_isolated.json", "--controllers", "off",
                 "--out", str(rep)])
    assert code == 1   # baseline violates in areas 1 and 2
    assert sorted(f for f in os.listdir(rep) if f.endswith(".csv") and "_" not in f) == \
        ["area1.csv", "area2.csv", "area3.csv", "network.csv"]
    assert main(["export", "--report", str(rep), "--out", str(tmp_path / "plots")]) == 0
    assert len(os.listdir(tmp_path / "plots")) == 6


def test_export_empty_report_warns(tmp_path):
    (tmp_path / "report.json").write_text(json.dumps({"areas": {}}))
    with pytest.warns(UserWarning):
        assert export_plotdata(str(tmp_path), str(tmp_path / "out")) == []
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        assert export_plotdata(str(tmp_path / "missing"), str(tmp_path / "out")) == []
    assert rec


def test_data_listing(capsys):
    assert main(["data"]) == 0
    assert "nets_full.json" in capsys.readouterr().out
