"""Disturbed state-space subsystems, interconnections and fixed-step simulation.

A subsystem follows

    x' = A x + B u + G v + S w + E phi(F x),   y = C x,   y_int = C_int x

where v is an external disturbance, w collects internal disturbances coming
from neighbours and phi is a scalar slope-restricted nonlinearity.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import block_diag

from .numerics import as_matrix


class ModelError(ValueError):
    """Invalid model data. ``field`` names the offending entry."""

    def __init__(self, msg, field=None):
        super().__init__(msg if field is None else f"{field}: {msg}")
        self.field = field


class SimulationDivergence(RuntimeError):
    def __init__(self, t):
        super().__init__(f"state became non-finite at t = {t:.6g} s")
        self.t = t


KINDS = ("saturation", "identity", "zero")


@dataclass(frozen=True)
class SlopeNonlinearity:
    """phi(s) = n_ess * sat(k_over_r * s) with sat clamping to [sat_min, sat_max].

    The slope bounds a <= (phi(s1) - phi(s2)) / (s1 - s2) <= b describe the
    sector used by the certificates. For the bundled NETS data the ESS gains
    are already folded into E and F, so n_ess = k_over_r = 1.
    """

    kind: str = "zero"
    a: float = 0.0
    b: float = 0.0
    sat_min: float = 0.0
    sat_max: float = 0.0
    n_ess: float = 1.0
    k_over_r: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown kind {self.kind!r}", "phi.kind")
        if self.a > self.b:
            raise ModelError("slope bounds need a <= b", "phi")
        if self.kind == "saturation":
            if self.sat_min > self.sat_max:
                raise ModelError("sat_min > sat_max", "phi")
            if self.a != 0.0:
                raise ModelError("saturation needs a = 0", "phi.a")
            if not np.isclose(self.b, self.n_ess * self.k_over_r):
                raise ModelError("saturation needs b = n_ess * k_over_r", "phi.b")

    @classmethod
    def saturation(cls, sat_min, sat_max, n_ess=1.0, k_over_r=1.0):
        return cls("saturation", 0.0, n_ess * k_over_r, sat_min, sat_max, n_ess, k_over_r)

    @classmethod
    def identity(cls, gain=1.0):
        return cls("identity", gain, gain)

    @property
    def delta_bar(self):
        return max(abs(self.a), abs(self.b))

    @property
    def is_zero(self):
        return self.kind == "zero"

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(s)
        if self.kind == "identity":
            return self.a * s
        return self.n_ess * np.clip(self.k_over_r * s, self.sat_min, self.sat_max)

    def output_range(self):
        """Interval containing every value phi can take."""
        if self.kind == "zero":
            return 0.0, 0.0
        if self.kind == "identity":
            return -np.inf, np.inf
        lo, hi = self.n_ess * self.sat_min, self.n_ess * self.sat_max
        return min(lo, hi), max(lo, hi)

    def secant(self, s1, s2):
        """Difference quotient; the upper slope b where the arguments coincide."""
        s1, s2 = np.asarray(s1, float), np.asarray(s2, float)
        ds = s1 - s2
        same = np.abs(ds) < 1e-12
        q = (self(s1) - self(s2)) / np.where(same, 1.0, ds)
        return np.where(same, self.b, q)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b, "sat_min": self.sat_min,
                "sat_max": self.sat_max, "n_ess": self.n_ess, "k_over_r": self.k_over_r}

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {"kind": "zero"})
        known = {k: d[k] for k in ("kind", "a", "b", "sat_min", "sat_max", "n_ess", "k_over_r") if k in d}
        if known.get("kind") == "saturation" and "b" not in known:
            known["b"] = known.get("n_ess", 1.0) * known.get("k_over_r", 1.0)
        return cls(**known)


def ess_response(delta_f, params: SlopeNonlinearity):
    """Aggregate ESS power for a frequency deviation: N_ESS * sat(k/R * delta_f)."""
    if params.kind != "saturation":
        raise ModelError("ess_response needs a saturation nonlinearity", "phi.kind")
    return params(delta_f)


def _opt(a, shape, name):
    if a is None:
        return np.zeros(shape)
    m = np.asarray(a, dtype=float)
    if m.size == 0:
        return np.zeros(shape)
    m = m.reshape(shape) if m.ndim < 2 and m.size == int(np.prod(shape)) else as_matrix(m, name)
    if not np.all(np.isfinite(m)):
        raise ModelError("non-finite entries", name)
    if m.shape != tuple(shape):
        raise ModelError(f"expected shape {tuple(shape)}, got {m.shape}", name)
    return m


@dataclass(frozen=True, eq=False)
class SystemModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    G: np.ndarray = None
    S: np.ndarray = None
    E: np.ndarray = None
    F: np.ndarray = None
    phi: SlopeNonlinearity = field(default_factory=SlopeNonlinearity)
    C_int: np.ndarray = None
    name: str = ""

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ModelError(f"A must be square, got shape {A.shape}", "A")
        if not np.all(np.isfinite(A)):
            raise ModelError("non-finite entries", "A")
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float)
        B = B.reshape(n, -1) if B.ndim == 1 else B
        if B.ndim != 2 or B.shape[0] != n:
            raise ModelError(f"B needs {n} rows, got shape {B.shape}", "B")
        C = as_matrix(self.C, "C")
        if C.shape[1] != n:
            raise ModelError(f"C needs {n} columns, got shape {C.shape}", "C")
        G = np.asarray(self.G if self.G is not None else np.zeros((n, 0)), dtype=float)
        G = G.reshape(n, -1) if G.ndim == 1 else G
        S = np.asarray(self.S if self.S is not None else np.zeros((n, 0)), dtype=float)
        S = S.reshape(n, -1) if S.ndim == 1 else S
        for nm, m in (("G", G), ("S", S)):
            if m.shape[0] != n:
                raise ModelError(f"{nm} needs {n} rows, got shape {m.shape}", nm)
        E = _opt(self.E, (n, 1), "E")
        F = _opt(self.F, (1, n), "F")
        C_int = as_matrix(self.C_int, "C_int") if self.C_int is not None else C.copy()
        if C_int.shape[1] != n:
            raise ModelError(f"C_int needs {n} columns", "C_int")
        phi = self.phi if isinstance(self.phi, SlopeNonlinearity) else SlopeNonlinearity.from_dict(self.phi)
        for nm, val in (("A", A), ("B", B), ("C", C), ("G", G), ("S", S), ("E", E),
                        ("F", F), ("C_int", C_int), ("phi", phi)):
            if isinstance(val, np.ndarray):
                if not np.all(np.isfinite(val)):
                    raise ModelError("non-finite entries", nm)
                val = val.copy()
                val.setflags(write=False)
            object.__setattr__(self, nm, val)

    n = property(lambda self: self.A.shape[0])
    p = property(lambda self: self.B.shape[1])
    m = property(lambda self: self.C.shape[0])
    q = property(lambda self: self.G.shape[1])
    r = property(lambda self: self.S.shape[1])

    @property
    def D(self):
        """Stacked disturbance matrix [G S]."""
        return np.hstack([self.G, self.S])

    @property
    def is_linear(self):
        return self.phi.is_zero or not np.any(self.E)

    def with_(self, **kw):
        d = {k: getattr(self, k) for k in ("A", "B", "C", "G", "S", "E", "F", "phi", "C_int", "name")}
        d.update(kw)
        return SystemModel(**d)

    def linear_part(self):
        return self.with_(E=None, F=None, phi=SlopeNonlinearity())

    def output(self, x):
        return np.asarray(x, float) @ self.C.T

    def to_dict(self):
        return {"name": self.name, "n": self.n, "p": self.p, "q": self.q, "r": self.r,
                "A": self.A.tolist(), "B": self.B.tolist(), "C": self.C.tolist(),
                "G": self.G.tolist(), "S": self.S.tolist(), "E": self.E.tolist(),
                "F": self.F.tolist(), "C_int": self.C_int.tolist(), "phi": self.phi.to_dict()}

    @classmethod
    def from_dict(cls, d):
        try:
            n = int(d["n"]) if "n" in d else None
            A = np.asarray(d["A"], dtype=float)
        except KeyError as exc:
            raise ModelError("missing required key", str(exc.args[0]))
        except (TypeError, ValueError):
            raise ModelError("A is not a numeric matrix", "A")
        if n is not None and (A.ndim != 2 or A.shape != (n, n)):
            raise ModelError(f"A must be {n}x{n}, got shape {A.shape}", "A")

        def mat(key, rows=None, cols=None):
            if key not in d or d[key] is None:
                return None
            try:
                m = np.asarray(d[key], dtype=float)
            except (TypeError, ValueError):
                raise ModelError("not a numeric matrix", key)
            if m.ndim == 1 and rows is not None and cols is not None and m.size == rows * cols:
                m = m.reshape(rows, cols)
            return m

        nn = A.shape[0] if A.ndim == 2 else 0
        kw = dict(A=A, B=mat("B", nn, d.get("p", 1)), C=mat("C"),
                  G=mat("G", nn, d.get("q", 0)), S=mat("S", nn, d.get("r", 0)),
                  E=mat("E", nn, 1), F=mat("F", 1, nn), C_int=mat("C_int"),
                  phi=SlopeNonlinearity.from_dict(d.get("phi")), name=d.get("name", ""))
        if kw["B"] is None or kw["C"] is None:
            raise ModelError("missing required key", "B" if kw["B"] is None else "C")
        m = cls(**kw)
        for key, val in (("p", m.p), ("q", m.q), ("r", m.r)):
            if key in d and int(d[key]) != val:
                raise ModelError(f"declared {key}={d[key]} but matrices give {val}", key)
        return m


@dataclass(frozen=True, eq=False)
class Interconnection:
    """Subsystems closed through w = coupling @ stacked(C_int x)."""

    subsystems: Sequence[SystemModel]
    coupling: np.ndarray
    T: np.ndarray = None

    def __post_init__(self):
        subs = tuple(self.subsystems)
        r = sum(s.r for s in subs)
        m = sum(s.C_int.shape[0] for s in subs)
        M = np.asarray(self.coupling, dtype=float).reshape(r, m) if np.size(self.coupling) == r * m \
            else np.asarray(self.coupling, dtype=float)
        if M.shape != (r, m):
            raise ModelError(f"coupling must be {r}x{m}, got {M.shape}", "coupling")
        T = np.zeros((len(subs), len(subs))) if self.T is None else np.asarray(self.T, float)
        if T.shape != (len(subs), len(subs)):
            raise ModelError("T must be N x N", "T")
        if np.any(np.diag(T) != 0):
            raise ModelError("T_ii must be zero", "T")
        object.__setattr__(self, "subsystems", subs)
        object.__setattr__(self, "coupling", M)
        object.__setattr__(self, "T", T)

    def state_slices(self):
        out, k = [], 0
        for s in self.subsystems:
            out.append(slice(k, k + s.n))
            k += s.n
        return out


@dataclass
class Trace:
    """Uniformly sampled signals of one simulation run."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, float)
        N = len(self.t)
        for nm in ("x", "y", "u", "v", "w"):
            a = np.asarray(getattr(self, nm), float)
            if a.ndim == 1:
                a = a.reshape(N, -1) if a.size else np.zeros((N, 0))
            if a.shape[0] != N:
                raise ModelError(f"column length {a.shape[0]} != {N}", nm)
            setattr(self, nm, a)
        if N >= 2:
            dts = np.diff(self.t)
            if np.any(dts <= 0) or np.ptp(dts) > 1e-9 * max(1.0, abs(self.t[-1])):
                raise ModelError("time grid must be uniform and increasing", "t")

    @property
    def dt(self):
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def __len__(self):
        return len(self.t)

    def columns(self):
        names = ["t"]
        for nm in ("x", "y", "u", "v", "w"):
            names += [f"{nm}{i + 1}" for i in range(getattr(self, nm).shape[1])]
        return names

    def to_csv(self, path):
        data = np.column_stack([self.t, self.x, self.y, self.u, self.v, self.w])
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(self.columns())
            for row in data:
                wr.writerow([repr(float(a)) for a in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != "t":
            raise ModelError("trace CSV must start with a 't' column", "header")
        header = rows[0]
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(header))
        cols = {nm: [i for i, h in enumerate(header) if h[:1] == nm and h[1:].isdigit()]
                for nm in ("x", "y", "u", "v", "w")}
        return cls(data[:, 0], *(data[:, cols[nm]] for nm in ("x", "y", "u", "v", "w")))


def eval_dynamics(model: SystemModel, x, u=None, v=None, w=None):
    """Right-hand side of the subsystem ODE. Accepts single states or row batches."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.n:
        raise ModelError(f"state has {x.shape[-1]} entries, model has {model.n}", "x")
    xdot = x @ model.A.T
    for mat, sig, nm in ((model.B, u, "u"), (model.G, v, "v"), (model.S, w, "w")):
        if sig is None or mat.shape[1] == 0:
            continue
        s = np.asarray(sig, dtype=float)
        if s.shape[-1] != mat.shape[1] and not (s.ndim == 0 and mat.shape[1] == 1):
            raise ModelError(f"{nm} has {s.shape[-1] if s.ndim else 1} entries, expected {mat.shape[1]}", nm)
        xdot = xdot + (s[..., None] * mat[:, 0] if s.ndim == 0 else s @ mat.T)
    if not model.is_linear:
        xdot = xdot + model.phi(x @ model.F[0])[..., None] * model.E[:, 0]
    return xdot


def _signal(sig, width):
    if sig is None:
        z = np.zeros(width)
        return lambda t, x: z
    if callable(sig):
        return lambda t, x: np.asarray(sig(t, x), float).reshape(width)
    const = np.broadcast_to(np.asarray(sig, float), (width,)).copy()
    return lambda t, x: const


def step_signal(value, t0=0.0):
    value = np.atleast_1d(np.asarray(value, float))
    return lambda t, x: value if t >= t0 - 1e-12 else np.zeros_like(value)


def ramp_signal(slope, t0=0.0, cap=None):
    slope = np.atleast_1d(np.asarray(slope, float))

    def f(t, x):
        val = slope * max(t - t0, 0.0)
        return val if cap is None else np.clip(val, -abs(cap), abs(cap))
    return f


def rk4_step(f, x, dt):
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def simulate(model: SystemModel, x0=None, u_signal=None, v_signal=None, w_signal=None,
             horizon=6.0, dt=0.005) -> Trace:
    """Classical RK4 with inputs held constant over each step.

    Signals may be None (zero), constants, or callables ``f(t, x)`` evaluated
    at the start of every step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    steps = int(round(horizon / dt))
    x = np.zeros(model.n) if x0 is None else np.asarray(x0, float).reshape(model.n)
    us, vs, ws = _signal(u_signal, model.p), _signal(v_signal, model.q), _signal(w_signal, model.r)
    N = steps + 1
    X = np.empty((N, model.n))
    U, V, W = np.empty((N, model.p)), np.empty((N, model.q)), np.empty((N, model.r))
    t_grid = dt * np.arange(N)
    for k in range(N):
        t = t_grid[k]
        X[k] = x
        u, v, w = us(t, x), vs(t, x), ws(t, x)
        U[k], V[k], W[k] = u, v, w
        if k == steps:
            break
        x = rk4_step(lambda z: eval_dynamics(model, z, u, v, w), x, dt)
        if not np.all(np.isfinite(x)):
            raise SimulationDivergence(t + dt)
    return Trace(t_grid, X, X @ model.C.T, U, V, W)


def coupling_disturbance(f_local, f_neighbors, T_row):
    """Tie-line power summand: sum_j T_ij (f_i - f_j)."""
    f_neighbors = np.atleast_1d(np.asarray(f_neighbors, float))
    T_row = np.atleast_1d(np.asarray(T_row, float))
    if f_neighbors.shape != T_row.shape:
        raise ValueError("neighbour frequencies and T row differ in length")
    return float(np.sum(T_row * (f_local - f_neighbors)))


def interconnect(network: Interconnection) -> SystemModel:
    """Close the internal channels of a network into one model with no free w."""
    subs = network.subsystems
    if not subs:
        raise ModelError("network has no subsystems", "subsystems")
    A = block_diag(*[s.A for s in subs])
    S = block_diag(*[s.S for s in subs]) if any(s.r for s in subs) else np.zeros((A.shape[0], 0))
    Cint = block_diag(*[s.C_int for s in subs])
    if S.shape[1]:
        A = A + S @ network.coupling @ Cint
    nonlin = [i for i, s in enumerate(subs) if not s.is_linear]
    if len(nonlin) > 1:
        raise ModelError("at most one nonlinear subsystem is supported (scalar phi)", "phi")
    E = np.zeros((A.shape[0], 1))
    F = np.zeros((1, A.shape[0]))
    phi = SlopeNonlinearity()
    if nonlin:
        i = nonlin[0]
        sl = network.state_slices()[i]
        E[sl] = subs[i].E
        F[:, sl] = subs[i].F
        phi = subs[i].phi

    def bd(name):
        mats = [getattr(s, name) for s in subs]
        if all(m.shape[1] == 0 for m in mats):
            return np.zeros((A.shape[0], 0))
        return block_diag(*mats)

    return SystemModel(A=A, B=bd("B"), C=block_diag(*[s.C for s in subs]), G=bd("G"),
                       S=np.zeros((A.shape[0], 0)), E=E, F=F, phi=phi, C_int=Cint,
                       name="+".join(s.name for s in subs))


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                         os.path.basename(str(path)))


def load_model(path):
    """Load a SystemModel, or an Interconnection when the file lists subsystems."""
    d = _read_json(path)
    if "subsystems" in d:
        base = os.path.dirname(os.path.abspath(path))
        subs = [load_model(p if os.path.isabs(p) else os.path.join(base, p)) if isinstance(p, str)
                else SystemModel.from_dict(p) for p in d["subsystems"]]
        return Interconnection(subs, d.get("coupling", []), d.get("T"))
    return SystemModel.from_dict(d)


def save_model(model: SystemModel, path):
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1)
