"""Grid abstractions of reduced models and recurrence controller synthesis.

Cells are half-open boxes on a uniform grid. The successors of a (cell,
input) pair are all cells hit by the box ``center' +- r`` where ``center'`` is
the RK4 image of the cell center and ``r`` is a growth bound covering every
start point in the cell and every disturbance signal in the declared box.
Successor sets are therefore index boxes, and the Pre operator reduces to a
box count over an n-dimensional prefix sum of the complement set.
"""
from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .models import SystemModel, Trace, eval_dynamics, rk4_step


class SymbolicError(RuntimeError):
    pass


class OutOfGridError(SymbolicError):
    pass


class LosingCellError(SymbolicError):
    pass


@dataclass(frozen=True, eq=False)
class GridAbstraction:
    lower: np.ndarray
    upper: np.ndarray
    eta: np.ndarray
    inputs: np.ndarray
    tau: float
    dist_lower: np.ndarray = None
    dist_upper: np.ndarray = None
    substeps: int = 10
    margin: float = 1e-7

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, float))
        hi = np.atleast_1d(np.asarray(self.upper, float))
        eta = np.broadcast_to(np.asarray(self.eta, float), lo.shape).copy()
        if np.any(eta <= 0) or np.any(lo >= hi) or self.tau <= 0:
            raise SymbolicError("grid needs eta > 0, lower < upper and tau > 0")
        U = np.asarray(self.inputs, float)
        U = U.reshape(-1, 1) if U.ndim <= 1 else U
        if U.shape[0] == 0:
            raise SymbolicError("empty input list")
        dlo = np.zeros(0) if self.dist_lower is None else np.atleast_1d(np.asarray(self.dist_lower, float))
        dhi = np.zeros(0) if self.dist_upper is None else np.atleast_1d(np.asarray(self.dist_upper, float))
        if dlo.shape != dhi.shape or np.any(dlo > dhi):
            raise SymbolicError("disturbance box needs matching bounds with lower <= upper")
        for nm, val in (("lower", lo), ("upper", hi), ("eta", eta), ("inputs", U),
                        ("dist_lower", dlo), ("dist_upper", dhi)):
            object.__setattr__(self, nm, val)

    @property
    def dim(self):
        return self.lower.size

    @property
    def shape(self):
        return tuple(int(k) for k in np.ceil((self.upper - self.lower) / self.eta - 1e-9))

    @property
    def n_cells(self):
        return int(np.prod(self.shape))

    def cell_of(self, x):
        """Flat cell index of each state, -1 outside the grid."""
        x = np.atleast_2d(np.asarray(x, float))
        idx = np.floor((x - self.lower) / self.eta).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.array(self.shape)), axis=1)
        flat = np.ravel_multi_index(tuple(np.clip(idx, 0, np.array(self.shape) - 1).T), self.shape)
        return np.where(inside, flat, -1)

    def centers(self, cells=None):
        cells = np.arange(self.n_cells) if cells is None else np.asarray(cells)
        idx = np.stack(np.unravel_index(cells, self.shape), axis=-1)
        return self.lower + (idx + 0.5) * self.eta

    def cell_bounds(self, cells):
        idx = np.stack(np.unravel_index(np.asarray(cells), self.shape), axis=-1)
        lo = self.lower + idx * self.eta
        return lo, lo + self.eta

    def to_dict(self):
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist(), "eta": self.eta.tolist(),
                "inputs": self.inputs.tolist(), "tau": self.tau, "dist_lower": self.dist_lower.tolist(),
                "dist_upper": self.dist_upper.tolist(), "substeps": self.substeps, "margin": self.margin}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("lower", "upper", "eta", "inputs", "tau") },
                   **{k: d[k] for k in ("dist_lower", "dist_upper", "substeps", "margin") if k in d})


def default_grid(dim=3, u2_max=0.5, dist_lower=None, dist_upper=None, half_width=1.5, eta=0.05,
                 tau=0.1, input_step=0.1):
    """Desk-scale defaults: [-1.5, 1.5]^3, eta 0.05, tau 0.1 s, inputs in 0.1 steps."""
    k = int(round(u2_max / input_step))
    inputs = np.round(np.arange(-k, k + 1) * input_step, 12)
    return GridAbstraction(-half_width * np.ones(dim), half_width * np.ones(dim), eta, inputs, tau,
                           dist_lower, dist_upper)


def growth_matrix(m2: SystemModel):
    """Metzler bound on the Jacobian A2 + delta E2 F2 over the slope interval."""
    A = m2.A
    L = np.abs(A).copy()
    np.fill_diagonal(L, np.diag(A))
    if not m2.is_linear:
        db = m2.phi.delta_bar
        EF = np.abs(m2.E) @ np.abs(m2.F)
        L = L + db * EF
    return L


def growth_radius(m2: SystemModel, grid: GridAbstraction):
    """r(tau) for r' = L r + rho, r(0) = eta / 2."""
    L = growth_matrix(m2)
    n = L.shape[0]
    half = 0.5 * (grid.dist_upper - grid.dist_lower)
    D = m2.D
    if D.shape[1] != half.size:
        raise SymbolicError(f"disturbance box has {half.size} channels, model has {D.shape[1]}")
    rho = np.abs(D) @ half if half.size else np.zeros(n)
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = L
    aug[:n, n] = rho
    Phi = expm(aug * grid.tau)
    return Phi[:n, :n] @ (0.5 * grid.eta) + Phi[:n, n]


@dataclass(eq=False)
class TransitionRelation:
    grid: GridAbstraction
    lo: np.ndarray      # (N, K, dim) lowest successor index per axis
    hi: np.ndarray      # (N, K, dim) highest successor index per axis
    valid: np.ndarray   # (N, K) successors stay inside the grid
    radius: np.ndarray
    _corners: list = field(default=None, repr=False)

    @property
    def n_cells(self):
        return self.lo.shape[0]

    @property
    def n_inputs(self):
        return self.lo.shape[1]

    def successors(self, cell, k):
        """Flat indices of all successors of one pair (empty if it leaves the grid)."""
        if not self.valid[cell, k]:
            return np.zeros(0, dtype=np.int64)
        ranges = [np.arange(a, b + 1) for a, b in zip(self.lo[cell, k], self.hi[cell, k])]
        mesh = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, len(ranges))
        return np.ravel_multi_index(tuple(mesh.T), self.grid.shape)

    def corners(self, rows=None):
        """Flat indices into the padded prefix-sum array for each box corner, with signs.

        ``rows`` restricts the computation to a subset of cells; the full
        table is cached, subsets are not.
        """
        if rows is None and self._corners is not None:
            return self._corners
        out = _corner_table(self, rows)
        if rows is None:
            self._corners = out
        return out


def _corner_table(rel, rows):
    shape = np.array(rel.grid.shape) + 1
    strides = np.array([int(np.prod(shape[i + 1:])) for i in range(len(shape))], dtype=np.int64)
    sel = slice(None) if rows is None else rows
    valid = rel.valid[sel]
    lo = np.where(valid[..., None], rel.lo[sel], 0).astype(np.int64)
    hi = np.where(valid[..., None], rel.hi[sel].astype(np.int64) + 1, 0)
    d = len(shape)
    out = []
    for bits in itertools.product((0, 1), repeat=d):
        idx = np.zeros(lo.shape[:2], dtype=np.int64)
        for j, b in enumerate(bits):
            idx += (hi[..., j] if b else lo[..., j]) * strides[j]
        sign = 1 if (d - sum(bits)) % 2 == 0 else -1
        out.append((sign, idx.astype(np.int32)))
    return out


def build_abstraction(m2: SystemModel, grid: GridAbstraction, chunk=200_000) -> TransitionRelation:
    if m2.n != grid.dim:
        raise SymbolicError(f"model has {m2.n} states but the grid has {grid.dim} dimensions")
    r = growth_radius(m2, grid) + grid.margin
    N, K = grid.n_cells, grid.inputs.shape[0]
    shape = np.array(grid.shape)
    dt_idx = np.int16 if max(grid.shape) < 2 ** 14 else np.int32
    lo = np.empty((N, K, grid.dim), dtype=dt_idx)
    hi = np.empty((N, K, grid.dim), dtype=dt_idx)
    dc = 0.5 * (grid.dist_lower + grid.dist_upper)
    v_c, w_c = dc[:m2.q], dc[m2.q:]
    h = grid.tau / grid.substeps
    for start in range(0, N, chunk):
        cells = np.arange(start, min(N, start + chunk))
        c0 = grid.centers(cells)
        for k in range(K):
            u = grid.inputs[k]
            x = c0
            f = lambda z: eval_dynamics(m2, z, u, v_c, w_c)
            for _ in range(grid.substeps):
                x = rk4_step(f, x, h)
            a = np.floor((x - r - grid.lower) / grid.eta)
            b = np.floor((x + r - grid.lower) / grid.eta)
            lo[cells, k] = np.clip(a, -1, shape)
            hi[cells, k] = np.clip(b, -1, shape)
    valid = np.all((lo >= 0) & (hi < shape), axis=2)
    if not valid.any():
        raise SymbolicError("every (cell, input) pair leaves the grid; reduce tau or widen the box")
    return TransitionRelation(grid, lo, hi, valid, r)


def _prefix_complement(shape, X):
    bad = (~np.asarray(X, bool)).reshape(shape).astype(np.int32)
    S = np.zeros(tuple(s + 1 for s in shape), dtype=np.int32)
    S[tuple(slice(1, None) for _ in shape)] = bad
    for ax in range(len(shape)):
        np.cumsum(S, axis=ax, out=S)
    return S.ravel()


def _count_outside(corners, flat, valid, sel=None):
    count = np.zeros(valid.shape if sel is None else (int(np.count_nonzero(sel)), valid.shape[1]),
                     dtype=np.int32)
    for sign, idx in corners:
        count += sign * flat[idx if sel is None else idx[sel]]
    v = valid if sel is None else valid[sel]
    return v & (count == 0)


def pre(rel: TransitionRelation, X):
    """(N, K) mask of pairs whose successors all lie in the cell set X."""
    flat = _prefix_complement(rel.grid.shape, X)
    return _count_outside(rel.corners(), flat, rel.valid)


@dataclass(eq=False)
class SymbolicController:
    grid: GridAbstraction
    winning: np.ndarray      # (N,) bool
    rank: np.ndarray         # (N,) int, -1 outside the winning set
    valid_inputs: np.ndarray  # (N, K) bool
    iterations: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def success(self):
        return bool(self.winning.any())

    def input_order(self):
        """Input indices sorted by magnitude, negative first on ties."""
        U = self.grid.inputs
        keys = [(float(np.linalg.norm(u)), tuple(u)) for u in U]
        return sorted(range(len(U)), key=lambda i: keys[i])

    def choice(self):
        """Index of the tie-broken input per cell (-1 for losing cells)."""
        out = np.full(self.winning.shape, -1, dtype=np.int64)
        for k in reversed(self.input_order()):
            out[self.valid_inputs[:, k]] = k
        out[~self.winning] = -1
        return out


def _mask(cells, N):
    cells = np.asarray(cells)
    if cells.dtype == bool:
        if cells.shape != (N,):
            raise SymbolicError(f"cell mask must have {N} entries")
        return cells.copy()
    out = np.zeros(N, bool)
    out[cells.astype(np.int64)] = True
    return out


def synthesize_recurrence(rel: TransitionRelation, target_cells, avoid_cells) -> SymbolicController:
    """Winning set of always(eventually target and not avoid) on the abstraction."""
    t0 = time.perf_counter()
    T = _mask(target_cells, rel.n_cells)
    A = _mask(avoid_cells, rel.n_cells)
    # only non-avoid cells can ever win, so Pre is evaluated on those rows
    rows = np.nonzero(~A)[0]
    corners = rel.corners(rows)
    vrows = rel.valid[rows]
    shape = rel.grid.shape
    N, K = rel.n_cells, rel.n_inputs
    Z = ~A
    trace = []
    outer = 0
    while True:
        outer += 1
        flat = _prefix_complement(shape, Z)
        tsel = T[rows] & Z[rows]
        okZ = _count_outside(corners, flat, vrows, tsel)
        goal = np.zeros(N, bool)
        valid = np.zeros((N, K), bool)
        g_rows = rows[tsel][okZ.any(axis=1)]
        goal[g_rows] = True
        valid[rows[tsel]] = okZ
        rank = np.where(goal, 0, -1)
        Y = goal.copy()
        inner = 0
        while True:
            inner += 1
            flat = _prefix_complement(shape, Y)
            csel = ~Y[rows]
            ok = _count_outside(corners, flat, vrows, csel)
            hit = ok.any(axis=1)
            if not hit.any():
                break
            new_rows = rows[csel][hit]
            valid[new_rows] = ok[hit]
            rank[new_rows] = inner
            Y[new_rows] = True
        trace.append({"outer": outer, "inner": inner, "size": int(Y.sum())})
        if np.array_equal(Y, Z):
            break
        Z = Y
    valid[~Z] = False
    return SymbolicController(rel.grid, Z, rank, valid, trace, time.perf_counter() - t0)


def cells_inside(grid: GridAbstraction, C, lo, hi):
    """Cells whose every point has C x within [lo, hi] (outputs are linear)."""
    return _output_range_test(grid, C, lo, hi, inside=True)


def cells_touching(grid: GridAbstraction, C, lo, hi):
    """Cells containing some point with C x in [lo, hi]."""
    return _output_range_test(grid, C, lo, hi, inside=False)


def _output_range_test(grid, C, lo, hi, inside):
    C = np.atleast_2d(np.asarray(C, float))[0]
    c = grid.centers()
    mid = c @ C
    rad = 0.5 * grid.eta @ np.abs(C)
    ymin, ymax = mid - rad, mid + rad
    lo = -np.inf if lo is None else lo
    hi = np.inf if hi is None else hi
    if inside:
        return (ymin >= lo) & (ymax <= hi)
    return (ymax >= lo) & (ymin <= hi)


def control_lookup(ctrl: SymbolicController, x2):
    cell = int(ctrl.grid.cell_of(x2)[0])
    if cell < 0:
        raise OutOfGridError(f"state {np.round(x2, 4)} lies outside the grid")
    if not ctrl.winning[cell]:
        raise LosingCellError(f"cell {cell} is not in the winning set")
    k = next(k for k in ctrl.input_order() if ctrl.valid_inputs[cell, k])
    return ctrl.grid.inputs[k].copy()


def _input_token(u):
    return ",".join(repr(float(a)) for a in np.atleast_1d(u))


def save_controller(ctrl: SymbolicController, path):
    with open(path, "w") as fh:
        fh.write("# grid " + json.dumps(ctrl.grid.to_dict()) + "\n")
        order = ctrl.input_order()
        tokens = [_input_token(u) for u in ctrl.grid.inputs]
        for cell in np.nonzero(ctrl.winning)[0]:
            ins = [tokens[k] for k in order if ctrl.valid_inputs[cell, k]]
            fh.write(f"{cell};{ctrl.rank[cell]};" + ";".join(ins) + "\n")


def load_controller(path) -> SymbolicController:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# grid "):
        raise SymbolicError("controller file lacks the grid header")
    grid = GridAbstraction.from_dict(json.loads(lines[0][7:]))
    N, K = grid.n_cells, grid.inputs.shape[0]
    win = np.zeros(N, bool)
    rank = np.full(N, -1, dtype=np.int64)
    valid = np.zeros((N, K), bool)
    exact = {_input_token(u): k for k, u in enumerate(grid.inputs)}
    rounded = {tuple(np.round(u, 12)): k for k, u in enumerate(grid.inputs)}
    for ln in lines[1:]:
        if not ln.strip():
            continue
        parts = ln.split(";")
        cell = int(parts[0])
        win[cell] = True
        rank[cell] = int(parts[1])
        for p in parts[2:]:
            k = exact.get(p)
            if k is None:
                k = rounded[tuple(np.round([float(a) for a in p.split(",")], 12))]
            valid[cell, k] = True
    return SymbolicController(grid, win, rank, valid)


# ----------------------------------------------------------------------------
# refinement to the concrete system


@dataclass
class ClosedLoopReport:
    max_mismatch: float
    max_V: float
    epsilon: Optional[float]
    soundness_violations: list
    bound_violations: list

    @property
    def ok(self):
        return not self.soundness_violations and not self.bound_violations


def closed_loop(m1, m2, cert, ctrl: Optional[SymbolicController], v_signal=None, x1_0=None, x2_0=None,
                horizon=6.0, dt=0.005, tau=None, w_signal=None, epsilon=None, u2_signal=None):
    """Run the concrete/abstract pair with the symbolic controller in the loop.

    u2 is looked up at every sampling instant and held for tau; u1 and d2 are
    the continuous interfaces. ``ctrl=None`` plays u2 = 0 (or ``u2_signal``),
    which is the baseline that only keeps the two systems close.
    """
    from .models import _signal
    from .rsf import eval_V, interface_d, interface_u

    tau = tau if tau is not None else (ctrl.grid.tau if ctrl is not None else dt)
    per = int(round(tau / dt))
    if per < 1 or abs(per * dt - tau) > 1e-9:
        raise SymbolicError("tau must be a multiple of dt")
    steps = int(round(horizon / dt))
    x1 = np.zeros(m1.n) if x1_0 is None else np.asarray(x1_0, float)
    x2 = np.zeros(m2.n) if x2_0 is None else np.asarray(x2_0, float)
    vs, ws = _signal(v_signal, m1.q), _signal(w_signal, m1.r)
    us = _signal(u2_signal, m2.p)
    n1 = m1.n
    N = steps + 1
    X1, X2 = np.empty((N, m1.n)), np.empty((N, m2.n))
    U1, U2 = np.empty((N, m1.p)), np.empty((N, m2.p))
    V1, W1 = np.empty((N, m1.q)), np.empty((N, m1.r))
    D2 = np.empty((N, m2.q + m2.r))
    t_grid = dt * np.arange(N)
    sound = []
    u2 = np.zeros(m2.p)
    for k in range(N):
        t = t_grid[k]
        if k % per == 0:
            if ctrl is None:
                u2 = us(t, x2)
            else:
                try:
                    u2 = control_lookup(ctrl, x2)
                except (OutOfGridError, LosingCellError) as exc:
                    sound.append((float(t), str(exc)))
        v, w = vs(t, x1), ws(t, x1)
        d1 = np.concatenate([v, w])
        X1[k], X2[k], U2[k], V1[k], W1[k] = x1, x2, u2, v, w
        U1[k] = interface_u(cert, m1, x1, x2, u2)
        D2[k] = interface_d(cert, m1, x1, x2, d1)
        if k == steps:
            break

        def f(z, u2=u2, v=v, w=w, d1=d1):
            a, b = z[:n1], z[n1:]
            u1 = interface_u(cert, m1, a, b, u2)
            d2 = interface_d(cert, m1, a, b, d1)
            return np.concatenate([eval_dynamics(m1, a, u1, v, w),
                                   eval_dynamics(m2, b, u2, d2[:m2.q], d2[m2.q:])])

        z = rk4_step(f, np.concatenate([x1, x2]), dt)
        if not np.all(np.isfinite(z)):
            raise SymbolicError(f"closed loop diverged at t = {t + dt:.4g}")
        x1, x2 = z[:n1], z[n1:]
    tr1 = Trace(t_grid, X1, X1 @ m1.C.T, U1, V1, W1)
    tr2 = Trace(t_grid, X2, X2 @ m2.C.T, U2, D2[:, :m2.q], D2[:, m2.q:])
    Vt = eval_V(cert, X1, X2)
    gap = np.linalg.norm(tr1.y - tr2.y, axis=1)
    viol = []
    if epsilon is not None:
        viol = [float(t) for t, g in zip(t_grid, gap) if g > epsilon + 1e-9]
    rep = ClosedLoopReport(float(gap.max()), float(Vt.max()), epsilon, sound, viol)
    return tr1, tr2, rep
