import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import freq_trace, monitor_table, ramp_table
from rsfkit import nets
from rsfkit.specs import (EFR, INF, Composite, FFRPrimary, Infeasible, Infrequent, MonitorError,
                          ReachAvoid, Shutdown, SpecError, StatutoryNormal, Verdict, compose_specs,
                          efr_ramp_violations, load_spec, monitor, rocof, save_spec, shrink_spec,
                          spec_from_dict, spec_to_dict)

AREA1 = ReachAvoid((-0.3, 0.5), (-0.35, 0.5))


# shrink_spec

def test_shrink_zero_is_identity():
    assert shrink_spec(AREA1, 0.0) == AREA1


def test_shrink_area1_value():
    s = shrink_spec(AREA1, 0.1019)
    assert np.allclose(s.T, (-0.1981, 0.3981))
    assert np.allclose(s.B, (-0.2481, 0.3981))
    assert np.isclose(s.avoid_ub[0], 0.3981) and s.avoid_ub[1] == INF
    assert np.isclose(s.avoid_lb[1], -0.2481)


def test_shrink_infeasible():
    s = shrink_spec(AREA1, 0.5)
    assert isinstance(s, Infeasible) and "target" in s.reason


def test_shrink_unbounded_sides():
    s = shrink_spec(ReachAvoid((-0.3, INF), (-0.35, INF)), 0.05)
    assert s.T == (-0.25, INF) and s.B == (-0.3, INF)


def test_shrink_validation():
    with pytest.raises(SpecError):
        shrink_spec(AREA1, -0.1)
    with pytest.raises(SpecError):
        shrink_spec(Shutdown(), 0.1)


@given(st.floats(0.0, 0.4), st.floats(0.0, 0.4))
@settings(max_examples=200, deadline=None)
def test_shrink_monotone(e1, e2):
    e1, e2 = min(e1, e2), max(e1, e2)
    s1, s2 = shrink_spec(AREA1, e1), shrink_spec(AREA1, e2)
    if isinstance(s1, Infeasible):
        assert isinstance(s2, Infeasible)
        return
    if isinstance(s2, Infeasible):
        return
    assert s1.T[0] <= s2.T[0] and s2.T[1] <= s1.T[1]
    assert s2.avoid_ub[0] <= s1.avoid_ub[0] and s2.avoid_lb[1] >= s1.avoid_lb[1]


# type invariants

def test_type_invariants():
    with pytest.raises(SpecError):
        ReachAvoid((0.5, -0.3), (-0.35, 0.5))
    with pytest.raises(SpecError):
        Infrequent(Z=49.6)
    with pytest.raises(SpecError):
        FFRPrimary(t_inject=0.0)
    with pytest.raises(SpecError):
        Verdict(True, 1.0)
    with pytest.raises(SpecError):
        Composite(())


def test_constants_match_bundled_record():
    c = nets.constants()
    assert StatutoryNormal().S == tuple(c["statutory"]) and StatutoryNormal().L == c["max_normal_loss_mw"]
    assert Infrequent().Z == c["containment"] and Infrequent().deadline == c["infrequent_deadline_s"]
    assert (Shutdown().lo, Shutdown().hi) == tuple(c["shutdown"])
    assert EFR.wide().k == c["efr"]["wide"]["k"] and EFR.narrow().k == c["efr"]["narrow"]["k"]
    assert EFR.narrow().deadband == tuple(c["efr"]["narrow"]["deadband"])


# monitor

@pytest.mark.parametrize("row", monitor_table(), ids=lambda r: r[0])
def test_monitor_table(row):
    _, tr, spec, ctx, sat, t_viol, pending = row
    v = monitor(tr, spec, ctx)
    assert v.satisfied == sat and v.first_violation == t_viol and v.pending == pending


@pytest.mark.parametrize("row", ramp_table(), ids=lambda r: r[0])
def test_efr_ramp(row):
    _, spec, t, f, P, expect = row
    assert bool(efr_ramp_violations(spec, t, f, P)) == expect


def test_efr_ramp_surfaces_in_verdict():
    _, spec, t, f, P, _ = ramp_table()[3]
    v = monitor(freq_trace(t, f, P), spec, {"power": "u1"})
    assert not v.satisfied and v.details["ramp_violations"]


def test_reach_avoid_verdicts():
    t = np.arange(0, 6.0 + 1e-9, 0.01)
    ok = monitor(freq_trace(t, -0.2 * np.exp(-t)), AREA1)
    assert ok.satisfied and not ok.pending
    low = monitor(freq_trace(t, -0.5 * np.sin(t)), AREA1)
    assert not low.satisfied and "lower" in low.witness
    assert np.isclose(low.first_violation, np.min(t[-0.5 * np.sin(t) < -0.35]))
    pend = monitor(freq_trace(t, np.full_like(t, -0.32)), AREA1)
    assert pend.satisfied and pend.pending


def test_monitor_offset_context():
    t = np.arange(0, 2.0 + 1e-9, 0.5)
    v = monitor(freq_trace(t, np.where(t >= 1, -3.1, 0.0)), Shutdown(), {"offset": 50.0})
    assert not v.satisfied and v.first_violation == 1.0


def test_monitor_missing_channels():
    t = np.arange(0, 2.0, 0.5)
    tr = freq_trace(t, np.full_like(t, 50.0))
    with pytest.raises(MonitorError):
        monitor(tr, FFRPrimary(), {})
    with pytest.raises(MonitorError):
        monitor(tr, FFRPrimary(), {"power": "u1"})
    with pytest.raises(MonitorError):
        monitor(tr, StatutoryNormal(), {})
    with pytest.raises(MonitorError):
        monitor(tr, Shutdown(), {"freq": "y4"})


def _concat(tr):
    t = np.concatenate([tr.t, tr.t[-1] + tr.dt + tr.t - tr.t[0]])
    return freq_trace(t, np.concatenate([tr.y[:, 0]] * 2),
                      None if tr.u.shape[1] == 0 else np.concatenate([tr.u[:, 0]] * 2))


@pytest.mark.parametrize("row", monitor_table(), ids=lambda r: r[0])
def test_concatenation_keeps_violations(row):
    _, tr, spec, ctx, sat, t_viol, _ = row
    v2 = monitor(_concat(tr), spec, ctx)
    if not sat:
        assert not v2.satisfied and v2.first_violation <= t_viol


@given(st.lists(st.floats(-0.6, 0.6), min_size=2, max_size=40))
@settings(max_examples=200, deadline=None)
def test_concatenation_never_repairs(samples):
    t = 0.1 * np.arange(len(samples))
    tr = freq_trace(t, samples)
    for spec in (AREA1, ReachAvoid((-0.1, 0.1), (-0.4, 0.4))):
        if not monitor(tr, spec).satisfied:
            assert not monitor(_concat(tr), spec).satisfied


# rocof

def test_rocof_constant_and_ramp():
    assert np.all(rocof(np.full(10, 50.0), 0.1) == 0.0)
    t = np.arange(0, 2.0 + 1e-9, 0.1)
    assert np.max(np.abs(rocof(50 + 0.1 * t, 0.1) - 0.1)) <= 1e-9


def test_rocof_sine():
    dt = 0.005
    t = np.arange(0, 10.0 + 1e-9, dt)
    assert np.max(np.abs(rocof(50 + 0.1 * np.sin(t), dt) - 0.1 * np.cos(t))) <= 1e-4


def test_rocof_from_trace_and_errors():
    t = np.arange(0, 1.0 + 1e-9, 0.1)
    assert np.allclose(rocof(freq_trace(t, 2 * t)), 2.0)
    with pytest.raises(MonitorError):
        rocof([50.0], 0.1)
    with pytest.raises(MonitorError):
        rocof([50.0, 50.1])


# composition

def _three_area_trace():
    t = np.arange(0, 6.0 + 1e-9, 0.01)
    f1 = -0.2 * np.exp(-t)
    f2 = np.where(t >= 2.0, -0.45, -0.1)
    f3 = -0.25 * np.exp(-t)
    return freq_trace(t, f1, extra=[f2, f3])


def test_compose_all_satisfied():
    t = np.arange(0, 2.0, 0.5)
    tr = freq_trace(t, np.full_like(t, 50.0))
    v = monitor(tr, compose_specs([Shutdown(), StatutoryNormal()]), {"loss": 100})
    assert v.satisfied


def test_compose_per_area_witness():
    psi = compose_specs([AREA1] * 3, channels=["y1", "y2", "y3"])
    v = monitor(_three_area_trace(), psi)
    assert not v.satisfied and np.isclose(v.first_violation, 2.0)
    assert v.witness.startswith("y2")
    assert [m.satisfied for m in v.details["members"]] == [True, False, True]


def test_compose_disjunction():
    psi = compose_specs([AREA1] * 3, mode="disjunction", channels=["y1", "y2", "y3"])
    assert monitor(_three_area_trace(), psi).satisfied


def test_compose_empty_rejected():
    with pytest.raises(SpecError):
        compose_specs([])


# JSON

def test_bundled_specs_load():
    s = load_spec(nets.data_path("spec_area1.json"))
    assert s == AREA1
    g = load_spec(nets.data_path("spec_global.json"))
    assert g.T == (-0.6, INF)


@pytest.mark.parametrize("spec", [AREA1, StatutoryNormal(), Infrequent(), Shutdown(), FFRPrimary(),
                                  EFR.narrow(), ReachAvoid((-0.3, INF), (-0.35, INF)),
                                  compose_specs([AREA1, Shutdown()], channels=["y1", "y2"])])
def test_spec_round_trip(tmp_path, spec):
    p = tmp_path / "s.json"
    save_spec(spec, p)
    assert load_spec(p) == spec
    json.loads(p.read_text())


def test_spec_json_errors(tmp_path):
    with pytest.raises(SpecError):
        spec_from_dict({"variant": "ltl"})
    with pytest.raises(SpecError):
        spec_from_dict({"variant": "shutdown", "low": 47})
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(SpecError):
        load_spec(p)
    assert spec_to_dict(AREA1) == {"variant": "reach_avoid", "T": [-0.3, 0.5], "B": [-0.35, 0.5]}
