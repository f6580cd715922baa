"""Random problem generators shared by the test modules."""
import numpy as np

from rsfkit.models import SlopeNonlinearity, SystemModel
from rsfkit.rsf import fit_abstraction
from rsfkit.symbolic import GridAbstraction, build_abstraction


def random_small_problem(rng, max_cells=1000):
    """A random 1-D or 2-D system on a grid of at most max_cells cells, with target and avoid masks."""
    dim = int(rng.integers(1, 3))
    per_axis = int(rng.integers(6, 31 if dim == 2 else 64))
    while per_axis ** dim > max_cells:
        per_axis -= 1
    A = rng.normal(scale=0.8, size=(dim, dim)) - rng.uniform(0.2, 1.5) * np.eye(dim)
    B = rng.normal(size=(dim, 1))
    G = rng.normal(scale=0.3, size=(dim, 1))
    E, F, phi = None, None, SlopeNonlinearity()
    if rng.random() < 0.3:
        E = rng.normal(scale=0.3, size=(dim, 1))
        F = rng.normal(size=(1, dim))
        phi = SlopeNonlinearity.saturation(-0.5, 0.5)
    m = SystemModel(A=A, B=B, C=np.eye(1, dim), G=G, E=E, F=F, phi=phi)
    eta = 2.0 / per_axis
    inputs = np.linspace(-1.0, 1.0, int(rng.integers(2, 6)))
    dh = float(rng.uniform(0.0, 0.3))
    grid = GridAbstraction(-np.ones(dim), np.ones(dim), eta, inputs, float(rng.uniform(0.05, 0.3)),
                           [-dh], [dh])
    rel = build_abstraction(m, grid)
    c = grid.centers()
    r = np.linalg.norm(c, axis=1)
    T = r < rng.uniform(0.1, 0.6)
    A_mask = (c[:, 0] > rng.uniform(0.3, 1.0)) & ~T
    return m, grid, rel, T, A_mask


def random_stable_pair(rng, n1=None, n2=None):
    """Random single-input linear concrete system with a fitted abstraction and certificate.

    Returns (m1, m2, cert); all matching equalities hold exactly, so the
    certificate's gains cover the whole mismatch.
    """
    n1 = int(rng.integers(2, 6)) if n1 is None else n1
    n2 = int(rng.integers(1, n1 + 1)) if n2 is None else n2
    while True:
        A1 = rng.normal(size=(n1, n1))
        A1 -= (np.max(np.linalg.eigvals(A1).real) + rng.uniform(0.2, 1.5)) * np.eye(n1)
        B1 = rng.normal(size=(n1, 1))
        ctrb = np.column_stack([np.linalg.matrix_power(A1, k) @ B1 for k in range(n1)])
        if np.linalg.cond(ctrb) < 1e6:
            break
    m1 = SystemModel(A=A1, B=B1, C=rng.normal(size=(1, n1)), G=rng.normal(size=(n1, 1)))
    lam = float(rng.uniform(0.2, 1.0))
    poles = -lam - rng.uniform(0.3, 3.0, size=n1)
    fa = fit_abstraction(m1, n2, lam, pole_targets=poles)
    return m1, fa.m2, fa.cert


def freq_trace(t, f, P=None, extra=None):
    """Trace with frequency in y1 (and more outputs from ``extra``) and power in u1."""
    from rsfkit.models import Trace
    t = np.asarray(t, float)
    N = len(t)
    y = np.column_stack([f] + ([] if extra is None else list(extra)))
    u = np.zeros((N, 0)) if P is None else np.asarray(P, float).reshape(N, 1)
    return Trace(t, np.zeros((N, 0)), y, u, np.zeros((N, 0)), np.zeros((N, 0)))


def monitor_table():
    """Constructed traces with known verdicts for every clause family and constant.

    Each row is (name, trace, spec, context, satisfied, first_violation, pending).
    """
    from rsfkit.specs import EFR, FFRPrimary, FFRSecondary, Infrequent, Shutdown, StatutoryNormal

    rows = []
    t = np.arange(0.0, 20.0 + 1e-9, 0.5)
    flat = np.full_like(t, 50.0)
    dip = np.where((t >= 3) & (t < 8), 49.4, 50.0)
    high = np.where((t >= 4) & (t < 6), 50.6, 50.0)
    rows += [
        ("normal: flat 50 Hz, 1000 MW", freq_trace(t, flat), StatutoryNormal(), {"loss": 1000}, True, None, False),
        ("normal: dip to 49.4 Hz, 1000 MW", freq_trace(t, dip), StatutoryNormal(), {"loss": 1000}, False, 3.0, False),
        ("normal: 50.6 Hz overshoot, 1000 MW", freq_trace(t, high), StatutoryNormal(), {"loss": 1000}, False, 4.0, False),
        ("normal: dip with loss above 1320 MW", freq_trace(t, dip), StatutoryNormal(), {"loss": 1500}, True, None, False),
        ("normal: band edge 49.5 Hz", freq_trace(t, np.full_like(t, 49.5)), StatutoryNormal(), {"loss": 1320}, True, None, False),
    ]
    t = np.arange(0.0, 100.0 + 1e-9, 0.5)
    back45 = np.where((t >= 10) & (t < 45), 49.3, 50.0)
    back75 = np.where((t >= 10) & (t < 75), 49.3, 50.0)
    deep = np.where((t >= 10) & (t < 30), 49.3, 50.0)
    deep[(t >= 20) & (t < 25)] = 49.1
    t40 = np.arange(0.0, 40.0 + 1e-9, 0.5)
    rows += [
        ("infrequent: 49.3 Hz, back at 45 s", freq_trace(t, back45), Infrequent(), {"loss": 1500}, True, None, False),
        ("infrequent: 49.3 Hz, back at 75 s", freq_trace(t, back75), Infrequent(), {"loss": 1500}, False, 70.0, False),
        ("infrequent: below 49.2 Hz containment", freq_trace(t, deep), Infrequent(), {"loss": 1500}, False, 20.0, False),
        ("infrequent: trace ends before deadline", freq_trace(t40, np.where(t40 >= 10, 49.3, 50.0)), Infrequent(),
         {"loss": 1500}, True, None, True),
        ("infrequent: loss below 1320 MW", freq_trace(t, back75), Infrequent(), {"loss": 1000}, True, None, False),
    ]
    t = np.arange(0.0, 10.0 + 1e-9, 0.5)
    rows += [
        ("shutdown: dip to 46.9 Hz", freq_trace(t, np.where(t >= 2.5, 46.9, 50.0)), Shutdown(), {}, False, 2.5, False),
        ("shutdown: 47.0 Hz edge", freq_trace(t, np.where(t >= 2.5, 47.0, 50.0)), Shutdown(), {}, True, None, False),
        ("shutdown: 52.1 Hz", freq_trace(t, np.where(t >= 1.0, 52.1, 50.0)), Shutdown(), {}, False, 1.0, False),
        ("shutdown: 51.9 Hz", freq_trace(t, np.where(t >= 1.0, 51.9, 50.0)), Shutdown(), {}, True, None, False),
    ]
    t = np.arange(0.0, 60.0 + 1e-9, 0.5)
    ev = np.where((t >= 5) & (t < 40), 49.4, 50.0)

    def steps(*pairs):
        P = np.zeros_like(t)
        for t0, val in pairs:
            P[t >= t0] = val
        return P

    pc = {"power": "u1"}
    rows += [
        ("ffr primary: inject 1 s, max 7 s, held", freq_trace(t, ev, steps((6, 0.5), (12, 1.0))), FFRPrimary(), pc,
         True, None, False),
        ("ffr primary: inject after 3 s", freq_trace(t, ev, steps((8, 0.5), (12, 1.0))), FFRPrimary(), pc, False, 7.0, False),
        ("ffr primary: maximum after 11 s", freq_trace(t, ev, steps((6, 0.5), (16, 1.0))), FFRPrimary(), pc,
         False, 15.0, False),
        ("ffr primary: maximum dropped after 15 s", freq_trace(t, ev, steps((6, 0.5), (10, 1.0), (25, 0.5))),
         FFRPrimary(), pc, False, 25.0, False),
    ]
    t = np.arange(0.0, 100.0 + 1e-9, 0.5)
    ev = np.where(t >= 5, 49.4, 50.0)
    rows += [
        ("ffr secondary: maximum at 25 s, hold pending", freq_trace(t, ev, np.where(t >= 30, 1.0, 0.0)), FFRSecondary(),
         pc, True, None, True),
        ("ffr secondary: maximum after 35 s", freq_trace(t, ev, np.where(t >= 40, 1.0, 0.0)), FFRSecondary(), pc,
         False, 35.0, False),
    ]
    t = np.arange(0.0, 10.0 + 1e-9, 0.5)
    ec = {"power": "u1", "check_ramp": False}
    f_wide = np.where(t >= 2, 49.9, 50.0)
    f_narrow = np.where(t >= 2, 49.98, 50.0)
    rows += [
        ("efr wide: respond within 1 s", freq_trace(t, f_wide, np.where(t >= 2.5, 1.0, 0.0)), EFR.wide(), ec,
         True, None, True),
        ("efr wide: respond after 2 s", freq_trace(t, f_wide, np.where(t >= 4, 1.0, 0.0)), EFR.wide(), ec,
         False, 3.0, False),
        ("efr wide: 49.98 Hz inside deadband", freq_trace(t, f_narrow, np.zeros_like(t)), EFR.wide(), ec, True, None, False),
        ("efr narrow: 49.98 Hz outside deadband", freq_trace(t, f_narrow, np.zeros_like(t)), EFR.narrow(), ec,
         False, 3.0, False),
    ]
    return rows


def ramp_table():
    """EFR ramp-rate cases: (name, spec, t, f, P, expect_violations)."""
    from rsfkit.specs import EFR

    t = np.arange(0.0, 1.0 + 1e-9, 0.01)
    f = 49.9 - 0.1 * t                  # outside both deadbands, inside the envelope
    follow_wide = (0.1 / 0.45) * t      # dP/dt = -(1/k) df/dt with k = 0.45
    follow_narrow = (0.1 / 0.485) * t
    return [
        ("wide k = 0.45, tracking response", EFR.wide(), t, f, follow_wide, False),
        ("narrow k = 0.485, tracking response", EFR.narrow(), t, f, follow_narrow, False),
        ("narrow k = 0.485, wide-rate response", EFR.narrow(), t, f, follow_wide, True),
        ("wide k = 0.45, flat response", EFR.wide(), t, f, np.zeros_like(t), True),
        ("wide k = 0.45, inside deadband", EFR.wide(), t, np.full_like(t, 50.0), np.zeros_like(t), False),
    ]
