"""Frequency specifications, conservative shrinking and finite-trace monitors.

Semantics on a finite trace: unbounded always-clauses are weak (no violation
seen means satisfied so far), deadline clauses are strong (a deadline that
elapses inside the trace without the event is a violation; one that extends
past the trace end leaves the verdict satisfied but pending).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .models import Trace

INF = math.inf


class SpecError(ValueError):
    pass


class MonitorError(ValueError):
    pass


def _interval(iv, name="interval"):
    lo, hi = iv
    lo = -INF if lo is None else float(lo)
    hi = INF if hi is None else float(hi)
    if lo > hi:
        raise SpecError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
    return (lo, hi)


def _iv_json(iv):
    return [None if math.isinf(a) else a for a in iv]


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise SpecError(f"{k} must be positive, got {v}")


# ----------------------------------------------------------------------------
# variants


@dataclass(frozen=True)
class ReachAvoid:
    """Recurrence on a deviation signal: always (eventually T and not A).

    A is the complement of B split into an upper and a lower part.
    """
    T: tuple
    B: tuple

    def __post_init__(self):
        object.__setattr__(self, "T", _interval(self.T, "T"))
        object.__setattr__(self, "B", _interval(self.B, "B"))

    @property
    def avoid_ub(self):
        return (self.B[1], INF)

    @property
    def avoid_lb(self):
        return (-INF, self.B[0])


@dataclass(frozen=True)
class Infeasible:
    """Result of shrinking a reach-avoid spec past the point where T is empty."""
    spec: ReachAvoid
    epsilon: float
    reason: str


@dataclass(frozen=True)
class StatutoryNormal:
    S: tuple = (49.5, 50.5)
    L: float = 1320.0

    def __post_init__(self):
        object.__setattr__(self, "S", _interval(self.S, "S"))


@dataclass(frozen=True)
class Infrequent:
    S: tuple = (49.5, 50.5)
    Z: float = 49.2
    deadline: float = 60.0
    L: float = 1320.0

    def __post_init__(self):
        object.__setattr__(self, "S", _interval(self.S, "S"))
        _positive(deadline=self.deadline)
        if not self.Z < self.S[0]:
            raise SpecError("containment value Z must lie below the statutory band")


@dataclass(frozen=True)
class Shutdown:
    lo: float = 47.0
    hi: float = 52.0

    def __post_init__(self):
        _interval((self.lo, self.hi), "shutdown")


@dataclass(frozen=True)
class FFRPrimary:
    t_inject: float = 2.0
    t_max: float = 10.0
    hold: float = 30.0
    P_max: float = 1.0

    def __post_init__(self):
        _positive(t_inject=self.t_inject, t_max=self.t_max, hold=self.hold, P_max=self.P_max)


@dataclass(frozen=True)
class FFRSecondary:
    t_max: float = 30.0
    hold: float = 1800.0
    P_max: float = 1.0

    def __post_init__(self):
        _positive(t_max=self.t_max, hold=self.hold, P_max=self.P_max)


@dataclass(frozen=True)
class EFR:
    deadband: tuple = (49.95, 50.05)
    k: float = 0.45
    t_respond: float = 1.0
    hold: float = 900.0
    P_max: float = 1.0
    ramp_band: float = 0.01
    envelope: tuple = (49.5, 50.5)

    def __post_init__(self):
        object.__setattr__(self, "deadband", _interval(self.deadband, "deadband"))
        object.__setattr__(self, "envelope", _interval(self.envelope, "envelope"))
        _positive(k=self.k, t_respond=self.t_respond, hold=self.hold, P_max=self.P_max)

    @classmethod
    def wide(cls, **kw):
        return cls(deadband=(49.95, 50.05), k=0.45, **kw)

    @classmethod
    def narrow(cls, **kw):
        return cls(deadband=(49.985, 50.015), k=0.485, **kw)


@dataclass(frozen=True)
class Composite:
    members: tuple
    mode: str = "conjunction"
    channels: Optional[tuple] = None   # per-member frequency column, e.g. "y2"

    def __post_init__(self):
        if not self.members:
            raise SpecError("a composite needs at least one member")
        if self.mode not in ("conjunction", "disjunction"):
            raise SpecError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "members", tuple(self.members))
        if self.channels is not None:
            if len(self.channels) != len(self.members):
                raise SpecError("one channel per member expected")
            object.__setattr__(self, "channels", tuple(self.channels))


FreqSpec = Union[ReachAvoid, StatutoryNormal, Infrequent, Shutdown, FFRPrimary, FFRSecondary, EFR,
                 Composite]


def compose_specs(specs, mode="conjunction", channels=None) -> Composite:
    return Composite(tuple(specs), mode, None if channels is None else tuple(channels))


def shrink_spec(spec: ReachAvoid, epsilon):
    """Conservative version of a reach-avoid spec for an epsilon-close abstraction."""
    if not isinstance(spec, ReachAvoid):
        raise SpecError("only reach-avoid specs can be shrunk")
    eps = float(epsilon)
    if eps < 0:
        raise SpecError("epsilon must be non-negative")
    t_lo, t_hi = spec.T[0] + eps, spec.T[1] - eps
    b_lo, b_hi = spec.B[0] + eps, spec.B[1] - eps
    if t_lo > t_hi:
        return Infeasible(spec, eps, f"target [{t_lo:.4g}, {t_hi:.4g}] is empty")
    if b_lo > b_hi:
        return Infeasible(spec, eps, f"safe band [{b_lo:.4g}, {b_hi:.4g}] is empty")
    return ReachAvoid((t_lo, t_hi), (b_lo, b_hi))


# ----------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class Verdict:
    satisfied: bool
    first_violation: Optional[float] = None
    witness: str = "ok"
    pending: bool = False
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.satisfied != (self.first_violation is None):
            raise SpecError("a verdict is satisfied exactly when it has no violation time")

    def to_dict(self):
        d = {"satisfied": self.satisfied, "first_violation": self.first_violation,
             "witness": self.witness, "pending": self.pending}
        if "members" in self.details:
            d["members"] = [m.to_dict() for m in self.details["members"]]
        for k, v in self.details.items():
            if k != "members":
                d[k] = v
        return d


def _ok(witness="ok", pending=False, **details):
    return Verdict(True, None, witness, pending, details)


def _bad(t, witness, **details):
    return Verdict(False, float(t), witness, False, details)


def _merge(clauses):
    """Conjunction of clause verdicts: earliest violation wins, pending if any pending."""
    bad = [c for c in clauses if not c.satisfied]
    if bad:
        return min(bad, key=lambda c: c.first_violation)
    pend = [c for c in clauses if c.pending]
    if pend:
        return Verdict(True, None, "; ".join(c.witness for c in pend), True)
    return _ok()


# ----------------------------------------------------------------------------
# signal access


def _column(trace: Trace, name):
    cols = trace.columns()
    if name not in cols:
        raise MonitorError(f"trace has no column {name!r}; available: {', '.join(cols)}")
    i = cols.index(name)
    data = np.column_stack([trace.t, trace.x, trace.y, trace.u, trace.v, trace.w])
    return data[:, i]


def rocof(signal, dt=None):
    """Rate of change of frequency: central differences inside, one-sided second order at the ends.

    ``signal`` is a Trace (its first output column is used) or a sample array
    together with ``dt``.
    """
    if isinstance(signal, Trace):
        f, dt = signal.y[:, 0], signal.dt
    else:
        f = np.asarray(signal, float)
        if dt is None:
            raise MonitorError("dt is required for a bare sample array")
    if f.shape[0] < 2:
        raise MonitorError("rocof needs at least two samples")
    return np.gradient(f, dt, edge_order=2 if f.shape[0] >= 3 else 1)


# ----------------------------------------------------------------------------
# clause evaluators over (t, f, P)


def _first(mask, t):
    idx = np.flatnonzero(mask)
    return None if idx.size == 0 else float(t[idx[0]])


def _onsets(mask):
    """Indices where a boolean signal switches on (including sample 0)."""
    m = np.asarray(mask, bool)
    return np.flatnonzero(m & ~np.concatenate([[False], m[:-1]]))


def _eventually_within(t, i0, deadline, good, name):
    """Strong bounded eventually from sample i0: good must occur in [t0, t0 + deadline]."""
    t0 = t[i0]
    tol = 1e-9 * max(1.0, abs(t0) + deadline)
    window = (t >= t0 - tol) & (t <= t0 + deadline + tol)
    if np.any(good & window):
        return _ok()
    if t[-1] + tol < t0 + deadline:
        return _ok(f"pending: {name} from t={t0:.4g}", pending=True)
    return _bad(t0 + deadline, name)


def _hold_from(t, i0, duration, good, name):
    """Bounded always from sample i0: good must hold on [t0, t0 + duration]."""
    t0 = t[i0]
    tol = 1e-9 * max(1.0, abs(t0) + duration)
    window = (t >= t0 - tol) & (t <= t0 + duration + tol)
    broken = window & ~good
    if np.any(broken):
        return _bad(t[np.flatnonzero(broken)[0]], name)
    if t[-1] + tol < t0 + duration:
        return _ok(f"pending: {name} from t={t0:.4g}", pending=True)
    return _ok()


def _at_max(P, P_max, tol):
    return np.abs(P - P_max) <= tol * max(1.0, abs(P_max))


def _low_events(f, threshold):
    return _onsets(f < threshold)


def _check_reach_avoid(spec: ReachAvoid, t, f):
    lo, hi = spec.B
    viol = _first((f < lo) | (f > hi), t)
    if viol is not None:
        side = "lower" if f[np.searchsorted(t, viol)] < lo else "upper"
        return _bad(viol, f"avoid ({side})")
    inT = (f >= spec.T[0]) & (f <= spec.T[1])
    reached = _first(inT, t)
    if reached is None:
        return _ok("pending: target never visited", pending=True, reached_target=None)
    if not inT[-1]:
        return _ok("pending: outside target at trace end", pending=True, reached_target=reached)
    return _ok(reached_target=reached)


def _check_normal(spec: StatutoryNormal, t, f, ctx):
    loss = _loss(ctx)
    if loss > spec.L:
        return _ok("not applicable: loss above normal limit")
    viol = _first((f < spec.S[0]) | (f > spec.S[1]), t)
    return _ok() if viol is None else _bad(viol, "normal: outside statutory band")


def _check_infrequent(spec: Infrequent, t, f, ctx):
    loss = _loss(ctx)
    if loss < spec.L:
        return _ok("not applicable: loss below infrequent threshold")
    events = _low_events(f, spec.S[0])
    if events.size == 0:
        return _ok("not applicable: no excursion below the statutory band")
    inS = (f >= spec.S[0]) & (f <= spec.S[1])
    clauses = [_eventually_within(t, i, spec.deadline, inS, "infrequent: return to statutory band")
               for i in events]
    viol = _first(f < spec.Z, t)
    if viol is not None:
        clauses.append(_bad(viol, "infrequent: below containment value"))
    return _merge(clauses)


def _check_shutdown(spec: Shutdown, t, f):
    viol = _first((f < spec.lo) | (f > spec.hi), t)
    return _ok() if viol is None else _bad(viol, "shutdown")


def _check_ffr_primary(spec: FFRPrimary, t, f, P, ctx):
    thr = ctx.get("event_threshold", 49.5)
    tol = ctx.get("power_tol", 1e-6)
    atmax = _at_max(P, spec.P_max, tol)
    clauses = []
    for i in _low_events(f, thr):
        clauses.append(_eventually_within(t, i, spec.t_inject, P > 0, "ffr primary: inject"))
        clauses.append(_eventually_within(t, i, spec.t_max, atmax, "ffr primary: reach maximum"))
    for i in _onsets(atmax):
        clauses.append(_hold_from(t, i, spec.hold, atmax, "ffr primary: hold maximum"))
    return _merge(clauses)


def _check_ffr_secondary(spec: FFRSecondary, t, f, P, ctx):
    thr = ctx.get("event_threshold", 49.5)
    tol = ctx.get("power_tol", 1e-6)
    atmax = _at_max(P, spec.P_max, tol)
    clauses = [_eventually_within(t, i, spec.t_max, atmax, "ffr secondary: reach maximum")
               for i in _low_events(f, thr)]
    for i in _onsets(atmax):
        clauses.append(_hold_from(t, i, spec.hold, atmax, "ffr secondary: hold maximum"))
    return _merge(clauses)


def efr_ramp_violations(spec: EFR, t, f, P):
    """Sample times where dP/dt leaves P_max(-(1/k) df/dt -/+ band) while f is outside the deadband but inside the envelope."""
    dt = float(t[1] - t[0])
    dfdt = rocof(f, dt)
    dPdt = np.gradient(P, dt, edge_order=2 if len(P) >= 3 else 1)
    centre = -dfdt / spec.k
    lo = spec.P_max * (centre - spec.ramp_band)
    hi = spec.P_max * (centre + spec.ramp_band)
    outside_db = (f < spec.deadband[0]) | (f > spec.deadband[1])
    inside_env = (f >= spec.envelope[0]) & (f <= spec.envelope[1])
    bad = outside_db & inside_env & ((dPdt <= lo) | (dPdt >= hi))
    return [float(a) for a in t[bad]]


def _check_efr(spec: EFR, t, f, P, ctx):
    tol = ctx.get("power_tol", 1e-6)
    atmax = _at_max(P, spec.P_max, tol)
    outside = (f < spec.deadband[0]) | (f > spec.deadband[1])
    clauses = [_eventually_within(t, i, spec.t_respond, atmax, "efr: respond")
               for i in _onsets(outside)]
    for i in _onsets(atmax):
        clauses.append(_hold_from(t, i, spec.hold, atmax, "efr: hold maximum"))
    ramp = efr_ramp_violations(spec, t, f, P) if ctx.get("check_ramp", True) else []
    if ramp:
        clauses.append(_bad(ramp[0], "efr: ramp rate"))
    v = _merge(clauses)
    return Verdict(v.satisfied, v.first_violation, v.witness, v.pending, {"ramp_violations": ramp})


def _loss(ctx):
    if "loss" not in ctx:
        raise MonitorError("this spec needs the infeed loss (MW) in the context")
    return float(ctx["loss"])


def monitor(trace: Trace, spec, context=None) -> Verdict:
    """Evaluate a spec over a finite trace.

    Context keys: ``freq`` (column name, default "y1"), ``offset`` added to the
    frequency column (e.g. 50 to monitor deviations against absolute limits),
    ``power`` (column name, required for FFR/EFR), ``loss`` in MW,
    ``event_threshold`` for low-frequency events, ``power_tol`` (relative).
    """
    ctx = dict(context or {})
    if len(trace) < 1:
        raise MonitorError("empty trace")
    if isinstance(spec, Composite):
        return _monitor_composite(trace, spec, ctx)
    if isinstance(spec, Infeasible):
        raise MonitorError(f"cannot monitor an infeasible spec: {spec.reason}")
    t = trace.t
    f = _column(trace, ctx.get("freq", "y1")) + float(ctx.get("offset", 0.0))
    if isinstance(spec, ReachAvoid):
        return _check_reach_avoid(spec, t, f)
    if isinstance(spec, StatutoryNormal):
        return _check_normal(spec, t, f, ctx)
    if isinstance(spec, Infrequent):
        return _check_infrequent(spec, t, f, ctx)
    if isinstance(spec, Shutdown):
        return _check_shutdown(spec, t, f)
    if "power" not in ctx:
        raise MonitorError("this spec needs a power column ('power' in the context)")
    P = _column(trace, ctx["power"])
    if isinstance(spec, FFRPrimary):
        return _check_ffr_primary(spec, t, f, P, ctx)
    if isinstance(spec, FFRSecondary):
        return _check_ffr_secondary(spec, t, f, P, ctx)
    if isinstance(spec, EFR):
        return _check_efr(spec, t, f, P, ctx)
    raise SpecError(f"unknown spec type {type(spec).__name__}")


def _monitor_composite(trace, spec: Composite, ctx):
    members = []
    for i, m in enumerate(spec.members):
        c = dict(ctx)
        if spec.channels is not None:
            c["freq"] = spec.channels[i]
        members.append(monitor(trace, m, c))
    label = [spec.channels[i] if spec.channels else f"member {i + 1}" for i in range(len(members))]
    if spec.mode == "conjunction":
        bad = [(v.first_violation, i) for i, v in enumerate(members) if not v.satisfied]
        if bad:
            t0, i = min(bad)
            return Verdict(False, t0, f"{label[i]}: {members[i].witness}", False, {"members": members})
        pend = [i for i, v in enumerate(members) if v.pending]
        wit = "; ".join(f"{label[i]}: {members[i].witness}" for i in pend) if pend else "ok"
        return Verdict(True, None, wit, bool(pend), {"members": members})
    sat = [i for i, v in enumerate(members) if v.satisfied]
    if sat:
        firm = [i for i in sat if not members[i].pending]
        i = firm[0] if firm else sat[0]
        return Verdict(True, None, f"{label[i]}: {members[i].witness}", not firm, {"members": members})
    t0 = max(v.first_violation for v in members)
    return Verdict(False, t0, "all members violated", False, {"members": members})


# ----------------------------------------------------------------------------
# JSON


_NAMES = {ReachAvoid: "reach_avoid", StatutoryNormal: "statutory_normal", Infrequent: "infrequent",
          Shutdown: "shutdown", FFRPrimary: "ffr_primary", FFRSecondary: "ffr_secondary", EFR: "efr",
          Composite: "composite"}
_CLASSES = {v: k for k, v in _NAMES.items()}


def spec_to_dict(spec):
    if isinstance(spec, Composite):
        d = {"variant": "composite", "mode": spec.mode,
             "members": [spec_to_dict(m) for m in spec.members]}
        if spec.channels is not None:
            d["channels"] = list(spec.channels)
        return d
    d = {"variant": _NAMES[type(spec)]}
    for k, v in spec.__dict__.items():
        d[k] = _iv_json(v) if isinstance(v, tuple) else v
    return d


def spec_from_dict(d):
    d = dict(d)
    name = d.pop("variant", None)
    if name not in _CLASSES:
        raise SpecError(f"unknown spec variant {name!r}; expected one of {sorted(_CLASSES)}")
    if name == "composite":
        return Composite(tuple(spec_from_dict(m) for m in d["members"]), d.get("mode", "conjunction"),
                         d.get("channels"))
    cls = _CLASSES[name]
    try:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})
    except TypeError as exc:
        raise SpecError(f"bad fields for {name}: {exc}") from None


def load_spec(path):
    with open(path) as fh:
        try:
            return spec_from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: {exc}") from None


def save_spec(spec, path):
    with open(path, "w") as fh:
        json.dump(spec_to_dict(spec), fh, indent=1)
