"""Assume-guarantee contracts over interval boxes and the NETS scenario runners."""
from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nets
from .models import Trace, eval_dynamics, rk4_step, simulate
from .pipeline import AreaSetup, Settings, controller_for, prepare_area, settings_dict
from .rsf import interface_d, interface_u
from .specs import (ReachAvoid, Verdict, compose_specs, load_spec, monitor, spec_from_dict,
                    spec_to_dict)
from .symbolic import (LosingCellError, OutOfGridError, SymbolicController, closed_loop,
                       control_lookup, load_controller)

INF = math.inf


class CompositionError(ValueError):
    def __init__(self, msg, channel=None):
        super().__init__(msg)
        self.channel = channel


class ScenarioError(RuntimeError):
    pass


def _iv(iv):
    lo, hi = iv
    lo = -INF if lo is None else float(lo)
    hi = INF if hi is None else float(hi)
    if lo > hi:
        raise ValueError(f"interval [{lo}, {hi}] is empty")
    return (lo, hi)


def _within(a, b):
    """Interval a contained in interval b."""
    return b[0] <= a[0] and a[1] <= b[1]


def _meet(a, b):
    return (max(a[0], b[0]), min(a[1], b[1]))


# ----------------------------------------------------------------------------
# contracts


@dataclass(frozen=True)
class Contract:
    """Boxes of assumptions and guarantees, keyed by channel name.

    Channel names used for NETS: ``v:<area>`` for the external disturbance of
    an area and ``f:<area>`` for its frequency deviation in Hz. A channel that
    is not listed is unconstrained.
    """
    assumptions: dict
    guarantees: dict
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "assumptions", {k: _iv(v) for k, v in self.assumptions.items()})
        object.__setattr__(self, "guarantees", {k: _iv(v) for k, v in self.guarantees.items()})

    def to_dict(self):
        j = lambda iv: [None if math.isinf(a) else a for a in iv]
        return {"name": self.name, "assumptions": {k: j(v) for k, v in self.assumptions.items()},
                "guarantees": {k: j(v) for k, v in self.guarantees.items()}}


def area_contract(area, spec: ReachAvoid, d_max, neighbors, neighbor_bound=(-0.6, None)):
    """Contract of one area: |v| <= d_max and neighbours within ``neighbor_bound`` => own band B."""
    if d_max < 0:
        raise ValueError("d_max must be non-negative")
    a = {f"v:{area}": (-d_max, d_max)}
    a.update({f"f:{j}": neighbor_bound for j in neighbors})
    return Contract(a, {f"f:{area}": spec.B}, name=f"area{area}")


def compose_contracts(contracts, coupling=None) -> Contract:
    """Conjunction of guarantees; internal assumptions discharged by the partners' guarantees.

    ``coupling`` maps a contract name to the channels it reads from its
    neighbours; when given, every such channel must appear among that
    contract's assumptions.
    """
    contracts = list(contracts)
    if not contracts:
        raise CompositionError("nothing to compose")
    if coupling:
        for c in contracts:
            for ch in coupling.get(c.name, ()):
                if ch not in c.assumptions:
                    raise CompositionError(f"{c.name} reads {ch} but assumes nothing about it", ch)
    guar = {}
    for c in contracts:
        for ch, iv in c.guarantees.items():
            guar[ch] = _meet(guar[ch], iv) if ch in guar else iv
    assume = {}
    for c in contracts:
        for ch, iv in c.assumptions.items():
            if ch in guar:
                if not _within(guar[ch], iv):
                    raise CompositionError(
                        f"{c.name} assumes {ch} in {list(iv)} but the partner only guarantees "
                        f"{list(guar[ch])}", ch)
                continue
            assume[ch] = _meet(assume[ch], iv) if ch in assume else iv
    return Contract(assume, guar, name="+".join(c.name for c in contracts))


def check_refinement(c_i: Contract, c_j: Contract) -> bool:
    """c_i refines c_j: weaker assumptions and stronger guarantees."""
    gi, gj = set(c_i.guarantees), set(c_j.guarantees)
    if not (gi <= gj or gj <= gi):
        raise ValueError(f"incomparable guarantee channels {sorted(gi)} and {sorted(gj)}")
    full = (-INF, INF)
    for ch in set(c_i.assumptions) | set(c_j.assumptions):
        if not _within(c_j.assumptions.get(ch, full), c_i.assumptions.get(ch, full)):
            return False
    for ch in gi | gj:
        if not _within(c_i.guarantees.get(ch, full), c_j.guarantees.get(ch, full)):
            return False
    return True


@dataclass(frozen=True)
class InternalBox:
    channels: dict     # neighbour -> (lo, hi) of its contribution
    total: tuple       # interval sum of the channels


def worst_case_internal(neighbor_contracts, coupling, box_upper=0.0):
    """Internal-disturbance boxes from the neighbours' guarantees.

    ``coupling`` maps area -> {neighbour: gain}; ``neighbor_contracts`` maps a
    neighbour to its contract (or a reach-avoid guarantee). Each channel's
    range is the gain applied to [lower edge of the neighbour's safe band,
    upper edge], the upper edge being ``box_upper`` when the band is open.
    """
    out = {}
    for area, row in coupling.items():
        chans = {}
        for j, g in row.items():
            g = float(g)
            if g == 0.0:
                chans[j] = (0.0, 0.0)
                continue
            if j not in neighbor_contracts:
                raise ValueError(f"no guarantee known for neighbour {j} of area {area}")
            lo, hi = _guarantee_band(neighbor_contracts[j], j)
            if math.isinf(lo):
                raise ValueError(f"neighbour {j} guarantees no lower frequency bound")
            hi = box_upper if math.isinf(hi) else hi
            a, b = g * lo, g * hi
            chans[j] = (min(a, b), max(a, b))
        tot = (sum(c[0] for c in chans.values()), sum(c[1] for c in chans.values()))
        out[area] = InternalBox(chans, tot)
    return out


def _guarantee_band(c, j):
    if isinstance(c, ReachAvoid):
        return c.B
    key = f"f:{j}"
    if key not in c.guarantees:
        raise ValueError(f"contract {c.name} guarantees nothing on {key}")
    return c.guarantees[key]


def nets_coupling(area_ids=(1, 2, 3)):
    """area -> {neighbour: 1 / output gain}: w holds neighbour frequency states, Hz = gain * state."""
    ext = nets.extraction_map()
    out = {}
    for a in area_ids:
        out[a] = {int(j): 1.0 / nets.output_gain(j, ext) for j in ext[str(a)]["neighbors"]}
    return out


# ----------------------------------------------------------------------------
# scenarios


@dataclass
class AreaConfig:
    spec: ReachAvoid
    v: float = 1.0
    controller: Optional[str] = None


@dataclass
class ScenarioConfig:
    mode: str
    areas: dict
    controllers: bool = True
    controlled: tuple = (1, 2, 3)
    horizon: float = 6.0
    dt: float = 0.005
    settings: Settings = field(default_factory=Settings)
    global_spec: ReachAvoid = field(default_factory=lambda: ReachAvoid((-0.6, None), (-0.6, None)))
    neighbor_bound: tuple = (-0.6, None)
    box_upper: float = 0.0
    cache: Optional[str] = None
    baseline: str = "interface"   # with controllers off: "interface" plays u2 = 0, "open" plays u1 = 0

    def __post_init__(self):
        if self.mode not in ("isolated", "compositional"):
            raise ScenarioError(f"unknown mode {self.mode!r}")
        if self.baseline not in ("interface", "open"):
            raise ScenarioError(f"unknown baseline {self.baseline!r}")
        self.areas = {int(k): v for k, v in self.areas.items()}
        if sorted(self.areas) != [1, 2, 3]:
            raise ScenarioError("NETS scenarios need exactly areas 1, 2 and 3")
        self.controlled = tuple(int(a) for a in self.controlled)

    def to_dict(self):
        return {"mode": self.mode, "controllers": self.controllers, "controlled": list(self.controlled),
                "baseline": self.baseline,
                "horizon": self.horizon, "dt": self.dt, "settings": settings_dict(self.settings),
                "global_spec": spec_to_dict(self.global_spec),
                "neighbor_bound": [None if x is None or math.isinf(x) else x for x in self.neighbor_bound],
                "box_upper": self.box_upper,
                "areas": {str(k): {"spec": spec_to_dict(a.spec), "v": a.v, "controller": a.controller}
                          for k, a in self.areas.items()}}


def _resolve(path, base):
    for cand in (path if os.path.isabs(path) else os.path.join(base, path), path):
        if os.path.exists(cand):
            return cand
    return nets.data_path(os.path.basename(path))


def _spec_entry(s, base):
    if isinstance(s, dict):
        return spec_from_dict(s)
    return load_spec(_resolve(s, base))


def scenario_from_dict(d, base="."):
    areas = {}
    for k, a in d["areas"].items():
        ctrl = a.get("controller")
        areas[int(k)] = AreaConfig(_spec_entry(a["spec"], base), float(a.get("v", 1.0)),
                                   _resolve(ctrl, base) if ctrl else None)
    kw = {}
    for key in ("controllers", "horizon", "dt", "box_upper", "cache", "baseline"):
        if key in d:
            kw[key] = d[key]
    if "controlled" in d:
        kw["controlled"] = tuple(d["controlled"])
    if "neighbor_bound" in d:
        kw["neighbor_bound"] = tuple(d["neighbor_bound"])
    if "settings" in d:
        kw["settings"] = Settings.from_dict(d["settings"])
    if "global_spec" in d:
        kw["global_spec"] = _spec_entry(d["global_spec"], base)
    return ScenarioConfig(d["mode"], areas, **kw)


def load_scenario(path):
    with open(path) as fh:
        d = json.load(fh)
    return scenario_from_dict(d, os.path.dirname(os.path.abspath(path)))


def isolated_config(controllers=True, **kw):
    base = load_scenario(nets.data_path("scenario_isolated.json"))
    return ScenarioConfig(**{**_cfg_fields(base), "controllers": controllers, **kw})


def compositional_config(controllers=True, **kw):
    base = load_scenario(nets.data_path("scenario_compositional.json"))
    return ScenarioConfig(**{**_cfg_fields(base), "controllers": controllers, **kw})


def _cfg_fields(cfg):
    return {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}


@dataclass
class AreaResult:
    area: int
    epsilon: Optional[float]
    verdict: Verdict
    trace1: Trace
    trace2: Optional[Trace] = None
    max_mismatch: Optional[float] = None
    soundness_violations: list = field(default_factory=list)
    bound_violations: list = field(default_factory=list)
    assumption_violations: list = field(default_factory=list)
    controller: Optional[str] = None
    winning_cells: Optional[int] = None
    controlled: bool = False

    def to_dict(self):
        return {"area": self.area, "epsilon": self.epsilon, "verdict": self.verdict.to_dict(),
                "max_mismatch": self.max_mismatch, "soundness_violations": self.soundness_violations,
                "bound_violations": self.bound_violations,
                "assumption_violations": self.assumption_violations[:20],
                "controller": self.controller, "winning_cells": self.winning_cells,
                "controlled": self.controlled}


@dataclass
class ScenarioReport:
    config: ScenarioConfig
    areas: dict
    global_verdict: Verdict
    composition: dict
    contracts_respected: bool
    sound: bool
    seconds: float
    network_trace: Optional[Trace] = None
    notes: list = field(default_factory=list)

    @property
    def ok(self):
        return self.global_verdict.satisfied and all(a.verdict.satisfied for a in self.areas.values())

    def to_dict(self):
        areas = {}
        for k, a in self.areas.items():
            areas[str(k)] = {**a.to_dict(), "spec": spec_to_dict(self.config.areas[k].spec)}
        return {"mode": self.config.mode, "controllers": self.config.controllers,
                "areas": areas,
                "global_verdict": self.global_verdict.to_dict(), "composition": self.composition,
                "contracts_respected": self.contracts_respected, "sound": self.sound,
                "seconds": self.seconds, "notes": self.notes, "config": self.config.to_dict()}

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, default=float)
        written = []
        for k, a in self.areas.items():
            p = os.path.join(out_dir, f"area{k}.csv")
            a.trace1.to_csv(p)
            written.append(p)
            if a.trace2 is not None:
                p2 = os.path.join(out_dir, f"area{k}_abstract.csv")
                a.trace2.to_csv(p2)
                written.append(p2)
        if self.network_trace is not None:
            p = os.path.join(out_dir, "network.csv")
            self.network_trace.to_csv(p)
            written.append(p)
        return written


def _stack(traces):
    t = traces[0].t
    cat = lambda nm: np.hstack([getattr(tr, nm) for tr in traces])
    return Trace(t, cat("x"), cat("y"), cat("u"), cat("v"), cat("w"))


def _global_verdict(cfg, trace, n):
    comp = compose_specs([cfg.global_spec] * n, channels=[f"y{i + 1}" for i in range(n)])
    return monitor(trace, comp)


def _controller(cfg: ScenarioConfig, area, setup: AreaSetup):
    path = cfg.areas[area].controller
    if path:
        ctrl = load_controller(path)
        if ctrl.grid.to_dict() != setup.grid.to_dict():
            raise ScenarioError(f"controller {path} was synthesized on a different grid")
    else:
        ctrl, path = controller_for(setup, cfg.cache)
    origin = int(setup.grid.cell_of(np.zeros(setup.m2.n))[0])
    if not ctrl.success or origin < 0 or not ctrl.winning[origin]:
        why = "an empty winning set" if not ctrl.success else "a winning set without the equilibrium"
        raise ScenarioError(
            f"controller synthesis for area {area} gave {why} (epsilon {setup.epsilon:.4g}); "
            f"relax the area's specification or its disturbance assumptions")
    return ctrl, path


def run_scenario(cfg: ScenarioConfig) -> ScenarioReport:
    t0 = time.perf_counter()
    if cfg.mode == "isolated":
        rep = _run_isolated(cfg)
    else:
        rep = _run_compositional(cfg)
    rep.seconds = time.perf_counter() - t0
    return rep


def _contracts(cfg, d_max):
    ext = nets.extraction_map()
    out = []
    for a, ac in cfg.areas.items():
        out.append(area_contract(a, ac.spec, d_max, [int(j) for j in ext[str(a)]["neighbors"]],
                                 cfg.neighbor_bound))
    return out


def global_contract(cfg, d_max):
    a = {f"v:{k}": (-d_max, d_max) for k in cfg.areas}
    g = {f"f:{k}": cfg.global_spec.B for k in cfg.areas}
    return Contract(a, g, name="global")


def _composition(cfg, d_max):
    cs = _contracts(cfg, d_max)
    weakest = min((c.guarantees[f"f:{a}"] for a, c in zip(cfg.areas, cs)), key=lambda iv: iv[0])
    out = {"global_guarantee": [None if math.isinf(x) else x for x in weakest]}
    try:
        comp = compose_contracts(cs)
    except CompositionError as exc:
        out.update(ok=False, error=str(exc), channel=exc.channel, refines_global=False)
        return out, None
    out.update(ok=True, composed=comp.to_dict(),
               refines_global=check_refinement(comp, global_contract(cfg, d_max)))
    return out, comp


def _run_isolated(cfg: ScenarioConfig) -> ScenarioReport:
    full = nets.load_full()
    areas = {}
    for a, ac in cfg.areas.items():
        m1 = nets.isolate(nets.extract_area(full, a))
        setup = prepare_area(m1, ac.spec, cfg.settings, name=f"isolated{a}")
        ctrl, path = (None, None)
        on = cfg.controllers and a in cfg.controlled
        if on:
            ctrl, path = _controller(cfg, a, setup)
        if not on and cfg.baseline == "open":
            tr1 = simulate(m1, v_signal=ac.v, horizon=cfg.horizon, dt=cfg.dt)
            areas[a] = AreaResult(a, setup.epsilon, monitor(tr1, ac.spec), tr1)
            continue
        tr1, tr2, rep = closed_loop(m1, setup.m2, setup.cert, ctrl, v_signal=ac.v, horizon=cfg.horizon,
                                    dt=cfg.dt, tau=setup.grid.tau, epsilon=setup.epsilon)
        areas[a] = AreaResult(a, setup.epsilon, monitor(tr1, ac.spec), tr1, tr2, rep.max_mismatch,
                              rep.soundness_violations, rep.bound_violations, [], path,
                              None if ctrl is None else int(ctrl.winning.sum()), on)
    d_max = max(abs(ac.v) for ac in cfg.areas.values())
    comp, _ = _composition(cfg, d_max)
    net = _stack([areas[a].trace1 for a in sorted(areas)])
    gv = _global_verdict(cfg, net, len(areas))
    respected = all(r.verdict.satisfied for r in areas.values())
    sound = not (comp["ok"] and respected) or gv.satisfied
    notes = ["areas simulated with coupling zeroed; each area's own reach-avoid spec is its guarantee"]
    return ScenarioReport(cfg, areas, gv, comp, respected, sound, 0.0, net, notes)


def simulate_network(full, v, horizon, dt, embedded=(), tau=0.1):
    """Full interconnected model with some areas driven through their interfaces.

    ``embedded`` holds (area, AreaSetup, controller or None) triples; each gets
    its abstraction integrated alongside, u2 looked up every tau (zero when
    the controller is None) and u1 fed into the area's input column.
    """
    ext = nets.extraction_map()
    n = full.n
    per = int(round(tau / dt))
    if per < 1 or abs(per * dt - tau) > 1e-9:
        raise ScenarioError("tau must be a multiple of dt")
    info = []
    k0 = n
    for area, setup, ctrl in embedded:
        idx = nets.area_indices(area, ext)
        info.append(dict(area=area, setup=setup, ctrl=ctrl, idx=idx,
                         wcols=nets.neighbor_state_indices(area, ext),
                         col=ext[str(area)]["input_column"] - 1, sl=slice(k0, k0 + setup.m2.n)))
        k0 += setup.m2.n
    v = np.broadcast_to(np.asarray(v, float), (full.q,)).copy()
    steps = int(round(horizon / dt))
    N = steps + 1
    t_grid = dt * np.arange(N)
    Z = np.empty((N, k0))
    U = np.zeros((N, full.p))
    U2 = {e["area"]: np.zeros((N, e["setup"].m2.p)) for e in info}
    D2 = {e["area"]: np.zeros((N, e["setup"].m2.q + e["setup"].m2.r)) for e in info}
    sound = {e["area"]: [] for e in info}
    u2 = {e["area"]: np.zeros(e["setup"].m2.p) for e in info}
    z = np.zeros(k0)

    def parts(z, e):
        x = z[:n]
        x1, x2 = x[e["idx"]], z[e["sl"]]
        d1 = np.concatenate([[v[e["col"]]], x[e["wcols"]]])
        return x1, x2, d1

    def rhs(z, u2=u2):
        x = z[:n]
        u = np.zeros(full.p)
        out = np.empty_like(z)
        for e in info:
            s = e["setup"]
            x1, x2, d1 = parts(z, e)
            u[e["col"]] = interface_u(s.cert, s.m1, x1, x2, u2[e["area"]])[0]
            d2 = interface_d(s.cert, s.m1, x1, x2, d1)
            out[e["sl"]] = eval_dynamics(s.m2, x2, u2[e["area"]], d2[:s.m2.q], d2[s.m2.q:])
        out[:n] = eval_dynamics(full, x, u, v)
        return out

    for k in range(N):
        t = t_grid[k]
        if k % per == 0:
            for e in info:
                if e["ctrl"] is None:
                    continue
                try:
                    u2[e["area"]] = control_lookup(e["ctrl"], z[e["sl"]])
                except (OutOfGridError, LosingCellError) as exc:
                    sound[e["area"]].append((float(t), str(exc)))
        Z[k] = z
        for e in info:
            s = e["setup"]
            x1, x2, d1 = parts(z, e)
            U[k, e["col"]] = interface_u(s.cert, s.m1, x1, x2, u2[e["area"]])[0]
            U2[e["area"]][k] = u2[e["area"]]
            D2[e["area"]][k] = interface_d(s.cert, s.m1, x1, x2, d1)
        if k == steps:
            break
        z = rk4_step(lambda q: rhs(q, dict(u2)), z, dt)
        if not np.all(np.isfinite(z)):
            raise ScenarioError(f"network simulation diverged at t = {t + dt:.4g}")
    X = Z[:, :n]
    net = Trace(t_grid, X, X @ full.C.T, U, np.tile(v, (N, 1)), np.zeros((N, 0)))
    per_area = {}
    for e in info:
        s = e["setup"]
        X1, X2 = X[:, e["idx"]], Z[:, e["sl"]]
        W1 = X[:, e["wcols"]]
        tr1 = Trace(t_grid, X1, X1 @ s.m1.C.T, U[:, [e["col"]]], np.full((N, 1), v[e["col"]]), W1)
        tr2 = Trace(t_grid, X2, X2 @ s.m2.C.T, U2[e["area"]], D2[e["area"]][:, :s.m2.q],
                    D2[e["area"]][:, s.m2.q:])
        per_area[e["area"]] = (tr1, tr2, sound[e["area"]])
    return net, per_area


def _run_compositional(cfg: ScenarioConfig) -> ScenarioReport:
    full = nets.load_full()
    ext = nets.extraction_map()
    coupling = nets_coupling(tuple(cfg.areas))
    guarantees = {j: ReachAvoid(cfg.neighbor_bound, cfg.neighbor_bound) for j in cfg.areas}
    boxes = worst_case_internal(guarantees, {a: coupling[a] for a in cfg.controlled}, cfg.box_upper)
    embedded, setups, paths = [], {}, {}
    for a in cfg.controlled:
        m1 = nets.extract_area(full, a)
        nb = [int(j) for j in ext[str(a)]["neighbors"]]
        box = boxes[a]
        w_box = ([box.channels[j][0] for j in nb], [box.channels[j][1] for j in nb])
        setup = prepare_area(m1, cfg.areas[a].spec, cfg.settings, w_box=w_box, name=f"compositional{a}")
        ctrl = None
        if cfg.controllers:
            ctrl, paths[a] = _controller(cfg, a, setup)
        setups[a] = (setup, ctrl)
        if cfg.controllers or cfg.baseline == "interface":
            embedded.append((a, setup, ctrl))
    v = np.array([cfg.areas[a].v for a in sorted(cfg.areas)])
    tau = cfg.settings.tau
    net, per_area = simulate_network(full, v, cfg.horizon, cfg.dt, embedded, tau)
    areas = {}
    ok_assume = True
    for i, a in enumerate(sorted(cfg.areas)):
        yi = net.y[:, i]
        if a in per_area:
            tr1, tr2, sound = per_area[a]
            setup, ctrl = setups[a]
            gap = np.abs(tr1.y[:, 0] - tr2.y[:, 0])
            bound = [float(t) for t, g in zip(tr1.t, gap) if g > setup.epsilon + 1e-9]
            lo, hi = np.array(setup.w_box[0]), np.array(setup.w_box[1])
            outside = np.any((tr1.w < lo - 1e-12) | (tr1.w > hi + 1e-12), axis=1)
            assume = [float(t) for t in tr1.t[outside]]
            ok_assume &= not assume
            areas[a] = AreaResult(a, setup.epsilon, monitor(tr1, cfg.areas[a].spec), tr1, tr2,
                                  float(gap.max()), sound, bound, assume, paths.get(a),
                                  None if ctrl is None else int(ctrl.winning.sum()), ctrl is not None)
        else:
            tr = Trace(net.t, net.x[:, nets.area_indices(a, ext)], yi[:, None], net.u[:, [i]],
                       net.v[:, [i]], np.zeros((len(net.t), 0)))
            areas[a] = AreaResult(a, None, monitor(tr, cfg.areas[a].spec), tr)
    gv = _global_verdict(cfg, net, len(cfg.areas))
    guaranteed = all(areas[a].verdict.satisfied for a in cfg.controlled)
    respected = guaranteed and ok_assume
    comp = {"internal_boxes": {str(a): {"channels": {str(j): list(iv) for j, iv in b.channels.items()},
                                        "total": list(b.total)} for a, b in boxes.items()},
            "neighbor_assumption": [None if x is None or math.isinf(x) else x for x in cfg.neighbor_bound],
            "assumptions_held": ok_assume}
    sound = not respected or gv.satisfied or not all(
        monitor(net, compose_specs([cfg.global_spec], channels=[f"y{i + 1}"])).satisfied
        for i, a in enumerate(sorted(cfg.areas)) if a not in cfg.controlled)
    notes = [f"areas {sorted(set(cfg.areas) - set(cfg.controlled))} run without a synthesized controller"]
    return ScenarioReport(cfg, areas, gv, comp, respected, sound, 0.0, net, notes)
