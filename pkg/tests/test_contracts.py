import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsfkit import nets
from rsfkit.contracts import (CompositionError, Contract, ScenarioConfig, ScenarioError, area_contract,
                              check_refinement, compose_contracts, isolated_config, nets_coupling,
                              run_scenario, simulate_network, worst_case_internal)
from rsfkit.models import simulate
from rsfkit.specs import ReachAvoid

INF = math.inf
BAND = ReachAvoid((-0.3, None), (-0.35, None))


def nets_contracts(bands=None):
    bands = bands or {1: BAND, 2: BAND, 3: BAND}
    nb = {1: [2, 3], 2: [1, 3], 3: [1, 2]}
    return [area_contract(a, bands[a], 1.0, nb[a]) for a in (1, 2, 3)]


# compose_contracts

def test_compose_nets_discharges():
    comp = compose_contracts(nets_contracts())
    assert set(comp.assumptions) == {"v:1", "v:2", "v:3"}
    assert all(comp.guarantees[f"f:{a}"] == (-0.35, INF) for a in (1, 2, 3))


def test_compose_reports_failing_channel():
    weak = ReachAvoid((-0.3, None), (-0.7, None))
    with pytest.raises(CompositionError) as exc:
        compose_contracts(nets_contracts({1: BAND, 2: weak, 3: BAND}))
    assert exc.value.channel == "f:2"


def test_compose_single_is_identity():
    c = Contract({"v:1": (-1, 1)}, {"f:1": (-0.35, None)}, name="a")
    comp = compose_contracts([c])
    assert comp.assumptions == c.assumptions and comp.guarantees == c.guarantees


def test_compose_coupling_needs_assumption():
    c = Contract({"v:1": (-1, 1)}, {"f:1": (-0.35, None)}, name="a")
    with pytest.raises(CompositionError) as exc:
        compose_contracts([c], coupling={"a": ["f:2"]})
    assert exc.value.channel == "f:2"
    with pytest.raises(CompositionError):
        compose_contracts([])


# check_refinement

def test_refinement_examples():
    c = nets_contracts()[0]
    assert check_refinement(c, c)
    strong = Contract({"v:1": (-2, 2)}, {"f:1": (-0.2, 0.2)})
    weak = Contract({"v:1": (-1, 1)}, {"f:1": (-0.35, None)})
    assert check_refinement(strong, weak) and not check_refinement(weak, strong)
    with pytest.raises(ValueError):
        check_refinement(Contract({}, {"f:1": (0, 1)}), Contract({}, {"f:2": (0, 1)}))


def test_composed_nets_refines_global():
    comp = compose_contracts(nets_contracts())
    glob = Contract({f"v:{a}": (-1, 1) for a in (1, 2, 3)}, {f"f:{a}": (-0.6, None) for a in (1, 2, 3)})
    assert check_refinement(comp, glob)


CHANNELS = ["v:1", "f:1", "f:2"]


@st.composite
def intervals(draw):
    lo = draw(st.one_of(st.just(-INF), st.floats(-2, 2)))
    hi = draw(st.one_of(st.just(INF), st.floats(-2, 2)))
    if lo > hi:
        lo, hi = hi, lo
    return (lo, hi)


@st.composite
def contracts(draw):
    a = {ch: draw(intervals()) for ch in CHANNELS if draw(st.booleans())}
    g = {ch: draw(intervals()) for ch in CHANNELS}
    return Contract(a, g)


@given(contracts(), contracts(), contracts())
@settings(max_examples=300, deadline=None)
def test_refinement_preorder(a, b, c):
    assert check_refinement(a, a)
    if check_refinement(a, b) and check_refinement(b, c):
        assert check_refinement(a, c)


@given(st.floats(-0.6, 0.0), st.floats(0.0, 0.3))
@settings(max_examples=100, deadline=None)
def test_composition_monotone(lo, shift):
    bands = {a: ReachAvoid((lo, None), (lo, None)) for a in (1, 2, 3)}
    try:
        compose_contracts(nets_contracts(bands))
    except CompositionError:
        return
    stronger = dict(bands)
    stronger[2] = ReachAvoid((min(lo + shift, 0.5), None), (min(lo + shift, 0.5), None))
    compose_contracts(nets_contracts(stronger))


# worst_case_internal

def test_worst_case_unit_gain():
    box = worst_case_internal({2: ReachAvoid((-0.6, None), (-0.6, None))}, {1: {2: 1.0}})
    assert box[1].channels[2] == (-0.6, 0.0) and box[1].total == (-0.6, 0.0)


def test_worst_case_zero_gain():
    box = worst_case_internal({}, {1: {2: 0.0}})
    assert box[1].channels[2] == (0.0, 0.0)


def test_worst_case_interval_sum():
    g = {2: ReachAvoid((-0.6, None), (-0.6, None)), 3: ReachAvoid((-0.4, 0.2), (-0.4, 0.2))}
    box = worst_case_internal(g, {1: {2: 0.5, 3: -2.0}}, box_upper=0.1)
    assert np.allclose(box[1].channels[2], (-0.3, 0.05))
    assert np.allclose(box[1].channels[3], (-0.4, 0.8))
    assert np.allclose(box[1].total, (-0.7, 0.85))


def test_worst_case_needs_lower_bound():
    with pytest.raises(ValueError):
        worst_case_internal({2: ReachAvoid((None, 0.5), (None, 0.5))}, {1: {2: 1.0}})
    with pytest.raises(ValueError):
        worst_case_internal({}, {1: {2: 1.0}})


def test_worst_case_from_contract():
    c = nets_contracts()[1]
    box = worst_case_internal({2: c}, {1: {2: 2.0}})
    assert box[1].channels[2] == (-0.7, 0.0)


def test_nets_coupling_gains():
    cp = nets_coupling()
    assert np.isclose(cp[3][1], 1 / 2.05) and np.isclose(cp[3][2], 1 / 1.83)
    assert set(cp[1]) == {2, 3}


# scenarios

def test_scenario_config_validation():
    with pytest.raises(ScenarioError):
        isolated_config(mode="both")
    with pytest.raises(ScenarioError):
        isolated_config(baseline="none")
    with pytest.raises(ScenarioError):
        ScenarioConfig("isolated", {1: None})


def _zero_coupling(full):
    A = np.zeros_like(full.A)
    for a in (1, 2, 3):
        idx = nets.area_indices(a)
        A[np.ix_(idx, idx)] = full.A[np.ix_(idx, idx)]
    return full.with_(A=A)


def test_zeroed_coupling_network_equals_standalone_areas():
    full = nets.load_full()
    net, _ = simulate_network(_zero_coupling(full), [1.0, 0.5, -0.3], 2.0, 0.005)
    for i, (a, v) in enumerate(zip((1, 2, 3), (1.0, 0.5, -0.3))):
        m = nets.isolate(nets.extract_area(full, a))
        tr = simulate(m, v_signal=v, horizon=2.0, dt=0.005)
        assert np.max(np.abs(net.y[:, i] - tr.y[:, 0])) <= 1e-9


def test_isolated_mode_equals_standalone():
    rep = run_scenario(isolated_config(controllers=False, baseline="open", horizon=2.0))
    full = nets.load_full()
    for a, res in rep.areas.items():
        m = nets.isolate(nets.extract_area(full, a))
        tr = simulate(m, v_signal=1.0, horizon=2.0, dt=0.005)
        assert np.max(np.abs(res.trace1.y - tr.y)) <= 1e-9
    assert rep.composition["ok"] and rep.sound


def test_scenario_report_write(tmp_path):
    rep = run_scenario(isolated_config(controllers=False, horizon=0.5))
    files = rep.write(tmp_path)
    names = sorted(p.split("/")[-1] for p in files)
    assert "network.csv" in names and "area1.csv" in names and "area1_abstract.csv" in names
    assert (tmp_path / "report.json").exists()
