"""Robust simulation functions with disturbance refinement.

A certificate relates a concrete subsystem m1 to an abstraction m2 through

    V(x1, x2) = sqrt((x1 - P x2)^T M (x1 - P x2))

and the interfaces

    u1 = K2 (x1 - P x2) + Q2 x2 + R2 u2 + L21 phi(F1 x1) - L22 phi(F1 P x2)
    d2 = K1 (x1 - P x2) + Q1 x1 + R1 d1 + L11 phi(F1 x1) - L12 phi(F1 P x2)

When M >= C1^T C1, H^T M + M H + 2 lam M <= 0 and the four matching
equalities hold, the output gap obeys ||y1 - y2|| <= V and V decays whenever
it exceeds c1 ||d1|| + c2 ||u2||.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .models import SystemModel
from .numerics import (TOL, as_matrix, is_hurwitz, least_squares, psd_sqrt, solve_lyapunov,
                       solve_sylvester, spectral_norm, sym_eig, symmetrize)
from .reduction import balanced_truncate


class CertificateError(ValueError):
    def __init__(self, msg, residuals=None):
        super().__init__(msg)
        self.residuals = residuals or {}


_GAINS = ("K1", "Q1", "K2", "Q2", "R1", "R2", "L11", "L12", "L21", "L22")


@dataclass(frozen=True, eq=False)
class RsfCertificate:
    M: np.ndarray
    lam: float
    P: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    L11: np.ndarray
    L12: np.ndarray
    L21: np.ndarray
    L22: np.ndarray
    delta_bar: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lam > 0:
            raise CertificateError("lambda must be positive")
        M = symmetrize(as_matrix(self.M, "M"))
        object.__setattr__(self, "M", M)
        for nm in ("P",) + _GAINS:
            object.__setattr__(self, nm, as_matrix(getattr(self, nm), nm))
        if sym_eig(M)[0][0] < TOL.psd_floor * max(1.0, np.abs(M).max()):
            raise CertificateError("M is not positive semidefinite")
        n1, n2 = self.P.shape
        if M.shape != (n1, n1):
            raise CertificateError(f"M must be {n1}x{n1}")

    @classmethod
    def make(cls, m1: SystemModel, m2: SystemModel, M, lam, P, delta_bar=None, **gains):
        """Fill unspecified gains with zeros (R1, R2 default to identity-like shapes)."""
        n1, p1, d1 = m1.n, m1.p, m1.q + m1.r
        n2, p2, d2 = m2.n, m2.p, m2.q + m2.r
        shapes = dict(K1=(d2, n1), Q1=(d2, n1), K2=(p1, n1), Q2=(p1, n2), R1=(d2, d1),
                      R2=(p1, p2), L11=(d2, 1), L12=(d2, 1), L21=(p1, 1), L22=(p1, 1))
        vals = {}
        for nm, shp in shapes.items():
            if gains.get(nm) is not None:
                vals[nm] = np.asarray(gains[nm], float).reshape(shp)
            elif nm in ("R1", "R2"):
                vals[nm] = np.eye(*shp)
            else:
                vals[nm] = np.zeros(shp)
        db = m1.phi.delta_bar if delta_bar is None else delta_bar
        cert = cls(M=M, lam=float(lam), P=P, delta_bar=float(db), **vals)
        cert.check_dims(m1, m2)
        return cert

    def with_(self, **kw):
        return replace(self, **kw)

    def check_dims(self, m1: SystemModel, m2: SystemModel):
        n1, n2 = m1.n, m2.n
        p1, p2 = m1.p, m2.p
        d1, d2 = m1.q + m1.r, m2.q + m2.r
        want = dict(M=(n1, n1), P=(n1, n2), K1=(d2, n1), Q1=(d2, n1), K2=(p1, n1), Q2=(p1, n2),
                    R1=(d2, d1), R2=(p1, p2), L11=(d2, 1), L12=(d2, 1), L21=(p1, 1), L22=(p1, 1))
        bad = {k: (getattr(self, k).shape, v) for k, v in want.items() if getattr(self, k).shape != v}
        if bad:
            txt = ", ".join(f"{k} is {a} not {b}" for k, (a, b) in bad.items())
            raise CertificateError(f"certificate does not fit the model pair: {txt}")

    def to_dict(self):
        d = {"lambda": self.lam, "delta_bar": self.delta_bar, "M": self.M.tolist(), "P": self.P.tolist()}
        d.update({k: getattr(self, k).tolist() for k in _GAINS})
        if self.meta:
            d["meta"] = self.meta
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(M=d["M"], lam=float(d["lambda"]), P=d["P"], delta_bar=float(d.get("delta_bar", 1.0)),
                       meta=d.get("meta", {}), **{k: d[k] for k in _GAINS})
        except KeyError as exc:
            raise CertificateError(f"certificate file misses {exc.args[0]!r}")


def load_certificate(path):
    with open(path) as fh:
        return RsfCertificate.from_dict(json.load(fh))


def save_certificate(cert: RsfCertificate, path):
    with open(path, "w") as fh:
        json.dump(cert.to_dict(), fh, indent=1, default=float)


@dataclass(frozen=True)
class EpsilonQuery:
    d_max: float = 1.0
    u2_max: float = 0.5
    x1_0: Optional[np.ndarray] = None
    x2_0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.d_max < 0 or self.u2_max < 0:
            raise ValueError("d_max and u2_max must be non-negative")


def box_norm_bound(lower, upper):
    """Largest Euclidean norm over a box of disturbance values."""
    lo, hi = np.asarray(lower, float), np.asarray(upper, float)
    return float(np.sqrt(np.sum(np.maximum(np.abs(lo), np.abs(hi)) ** 2)))


# ----------------------------------------------------------------------------
# matrices of the sufficient conditions


def nonlinear_direction(cert, m1, m2):
    """Column multiplying delta F1 e in the error dynamics."""
    return m1.E + m1.B @ cert.L21 - cert.P @ m2.D @ cert.L11


def build_H(cert: RsfCertificate, m1: SystemModel, m2: SystemModel, delta=None):
    """H = A1 - P D2 (K1 + Q1) + B1 K2 + delta (E1 + B1 L21 - P D2 L11) F1, delta defaults to delta_bar."""
    delta = cert.delta_bar if delta is None else delta
    H = m1.A - cert.P @ m2.D @ (cert.K1 + cert.Q1) + m1.B @ cert.K2
    if m1.is_linear and not np.any(cert.L21) and not np.any(cert.L11):
        return H
    return H + delta * nonlinear_direction(cert, m1, m2) @ m1.F


@dataclass(frozen=True)
class LmiReport:
    lmi_a_margin: float
    lmi_b_margin: float
    hurwitz: bool
    abscissa: float
    vertex_margins: dict
    tol: float

    @property
    def passed(self):
        return self.lmi_a_margin >= -self.tol and self.lmi_b_margin >= -self.tol

    @property
    def robust_passed(self):
        """Decay inequality at every vertex of the slope interval as well."""
        return self.passed and min(self.vertex_margins.values()) >= -self.tol


def decay_margin(M, H, lam):
    return float(-sym_eig(H.T @ M + M @ H + 2 * lam * M)[0][-1])


def verify_lmis(cert: RsfCertificate, m1: SystemModel, m2: SystemModel, tol=TOL.lmi) -> LmiReport:
    cert.check_dims(m1, m2)
    a = float(sym_eig(cert.M - m1.C.T @ m1.C)[0][0])
    H = build_H(cert, m1, m2)
    b = decay_margin(cert.M, H, cert.lam)
    hur, absc = is_hurwitz(H)
    verts = {}
    if not m1.is_linear:
        for dv in sorted({m1.phi.a, m1.phi.b}):
            verts[float(dv)] = decay_margin(cert.M, build_H(cert, m1, m2, dv), cert.lam)
    else:
        verts[float(cert.delta_bar)] = b
    return LmiReport(a, b, bool(hur), float(absc), verts, tol)


EQUALITY_NAMES = ("output", "nonlinearity", "dynamics", "coupling")


@dataclass(frozen=True)
class EqualityReport:
    residuals: dict
    matrices: dict
    tol: float

    @property
    def passed(self):
        return all(v <= self.tol for v in self.residuals.values())


def equality_residuals(cert, m1, m2):
    """Residual matrices of the four matching equalities."""
    P = cert.P
    D2 = m2.D
    return {
        "output": m2.C - m1.C @ P,
        "nonlinearity": m2.F - m1.F @ P,
        "dynamics": m1.A @ P + m1.B @ cert.Q2 - P @ m2.A - P @ D2 @ cert.Q1 @ P,
        "coupling": m1.E - (P @ m2.E - m1.B @ (cert.L21 - cert.L22) + P @ D2 @ (cert.L11 - cert.L12)),
    }


def verify_equalities(cert, m1, m2, tol=0.05) -> EqualityReport:
    """Largest absolute entry of each residual, checked against tol."""
    cert.check_dims(m1, m2)
    mats = equality_residuals(cert, m1, m2)
    res = {k: float(np.abs(v).max()) if v.size else 0.0 for k, v in mats.items()}
    return EqualityReport(res, mats, tol)


# ----------------------------------------------------------------------------
# interfaces, gains and bounds


def _phi_terms(cert, m1, x1, x2):
    if m1.is_linear and not np.any(m1.F):
        z = np.zeros(np.shape(x1)[:-1])
        return z, z
    s1 = np.asarray(x1, float) @ m1.F[0]
    s2 = np.asarray(x2, float) @ (cert.P.T @ m1.F[0])
    return m1.phi(s1), m1.phi(s2)


def interface_u(cert: RsfCertificate, m1: SystemModel, x1, x2, u2):
    x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
    u2 = np.asarray(u2, float)
    if u2.ndim == 0:
        u2 = u2.reshape(1)
    e = x1 - x2 @ cert.P.T
    p1, p2 = _phi_terms(cert, m1, x1, x2)
    return (e @ cert.K2.T + x2 @ cert.Q2.T + u2 @ cert.R2.T
            + p1[..., None] * cert.L21[:, 0] - p2[..., None] * cert.L22[:, 0])


def interface_d(cert: RsfCertificate, m1: SystemModel, x1, x2, d1):
    x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
    d1 = np.asarray(d1, float)
    if d1.ndim == 0:
        d1 = d1.reshape(1)
    e = x1 - x2 @ cert.P.T
    p1, p2 = _phi_terms(cert, m1, x1, x2)
    return (e @ cert.K1.T + x1 @ cert.Q1.T + d1 @ cert.R1.T
            + p1[..., None] * cert.L11[:, 0] - p2[..., None] * cert.L12[:, 0])


def mismatch_vectors(cert, m1, m2):
    """(D1 - P D2 R1, B1 R2 - P B2): the disturbance and input leaks."""
    return m1.D - cert.P @ m2.D @ cert.R1, m1.B @ cert.R2 - cert.P @ m2.B


def gamma_coefficients(cert, m1, m2):
    """Linear class-K gains: gamma1(s) = c1 s, gamma2(s) = c2 s."""
    R = psd_sqrt(cert.M)
    vd, vu = mismatch_vectors(cert, m1, m2)
    return spectral_norm(R @ vd) / cert.lam, spectral_norm(R @ vu) / cert.lam


def eval_V(cert: RsfCertificate, x1, x2):
    e = np.asarray(x1, float) - np.asarray(x2, float) @ cert.P.T
    q = np.einsum("...i,ij,...j->...", e, cert.M, e)
    return np.sqrt(np.maximum(q, 0.0))


def epsilon_bound(cert, m1, m2, q: EpsilonQuery):
    c1, c2 = gamma_coefficients(cert, m1, m2)
    x1 = np.zeros(m1.n) if q.x1_0 is None else q.x1_0
    x2 = np.zeros(m2.n) if q.x2_0 is None else q.x2_0
    return float(max(eval_V(cert, x1, x2), c1 * q.d_max + c2 * q.u2_max))


# ----------------------------------------------------------------------------
# runtime checks


def coupled_derivatives(cert, m1, m2, x1, x2, u2, d1):
    """(x1', x2') of the concrete/abstract pair driven through both interfaces."""
    from .models import eval_dynamics

    d1 = np.atleast_1d(np.asarray(d1, float))
    u1 = interface_u(cert, m1, x1, x2, u2)
    d2 = interface_d(cert, m1, x1, x2, d1)
    v1, w1 = d1[..., :m1.q], d1[..., m1.q:]
    v2, w2 = d2[..., :m2.q], d2[..., m2.q:]
    return eval_dynamics(m1, x1, u1, v1, w1), eval_dynamics(m2, x2, u2, v2, w2)


@dataclass(frozen=True)
class DecayChain:
    V: float
    dVdt: float
    middle: float
    gain_form: float
    level: float

    def holds(self, slack=1e-9):
        s = slack * max(1.0, abs(self.V))
        return self.dVdt <= self.middle + s and self.middle <= self.gain_form + s

    @property
    def decays(self):
        return self.level > self.V or self.dVdt <= 1e-9 * max(1.0, self.V)


def decay_chain(cert, m1, m2, x1, x2, u2, d1):
    """Evaluate the inequalities that bound dV/dt at one state pair.

    dVdt      exact derivative of V along the coupled dynamics
    middle    -lam V + ||sqrt(M) (leak_d d1 + leak_u u2)||
    gain_form -lam V + lam (c1 ||d1|| + c2 ||u2||)
    level     c1 ||d1|| + c2 ||u2||; V is non-increasing whenever V >= level
    """
    x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
    u2, d1 = np.atleast_1d(np.asarray(u2, float)), np.atleast_1d(np.asarray(d1, float))
    f1, f2 = coupled_derivatives(cert, m1, m2, x1, x2, u2, d1)
    e = x1 - cert.P @ x2
    V = float(np.sqrt(max(e @ cert.M @ e, 0.0)))
    dV = float(e @ cert.M @ (f1 - cert.P @ f2) / V) if V > 1e-14 else 0.0
    R = psd_sqrt(cert.M)
    vd, vu = mismatch_vectors(cert, m1, m2)
    mid = -cert.lam * V + float(np.linalg.norm(R @ (vd @ d1 + vu @ u2)))
    c1, c2 = gamma_coefficients(cert, m1, m2)
    lvl = c1 * float(np.linalg.norm(d1)) + c2 * float(np.linalg.norm(u2))
    return DecayChain(V, dV, mid, -cert.lam * V + cert.lam * lvl, lvl)


@dataclass
class RsfTraceReport:
    max_mismatch: float
    max_V: float
    bound_violations: list
    decay_violations: list

    @property
    def ok(self):
        return not self.bound_violations and not self.decay_violations


def check_rsf_conditions_along_trace(cert, m1, m2, trace1, trace2, bound_slack=1e-6, decay_slack=1e-4):
    """Per-sample check of ||y1 - y2|| <= V and of V decay above the gain level."""
    V = eval_V(cert, trace1.x, trace2.x)
    gap = np.linalg.norm(trace1.y - trace2.y, axis=1)
    bound_viol = [(float(t), float(g - v)) for t, g, v in zip(trace1.t, gap, V) if g > v + bound_slack]
    c1, c2 = gamma_coefficients(cert, m1, m2)
    d1 = np.hstack([trace1.v, trace1.w])
    level = c1 * np.linalg.norm(d1, axis=1) + c2 * np.linalg.norm(trace2.u, axis=1)
    decay_viol = []
    if len(V) > 1:
        dVdt = np.diff(V) / trace1.dt
        for k in np.nonzero((level[:-1] <= V[:-1]) & (dVdt > decay_slack))[0]:
            decay_viol.append((float(trace1.t[k]), float(dVdt[k])))
    return RsfTraceReport(float(gap.max(initial=0.0)), float(V.max(initial=0.0)), bound_viol, decay_viol)


# ----------------------------------------------------------------------------
# constructive certificates


def ackermann(A, B, poles):
    """Single-input Ackermann gain K with eig(A + B K) = poles."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    n = A.shape[0]
    if B.shape != (n, 1):
        raise CertificateError("pole placement needs a single-input pair")
    poles = np.asarray(poles, complex)
    if len(poles) != n:
        raise CertificateError(f"need {n} pole targets, got {len(poles)}")
    ctrb = np.empty((n, n))
    col = B[:, 0]
    for i in range(n):
        ctrb[:, i] = col
        col = A @ col
    if np.linalg.cond(ctrb) > 1e14:
        raise CertificateError("pair (A, B) is not controllable; Ackermann matrix is singular")
    coeffs = np.real(np.poly(poles))
    phiA = np.zeros((n, n))
    for c in coeffs:
        phiA = phiA @ A + c * np.eye(n)
    last = np.linalg.solve(ctrb.T, np.eye(n)[:, -1])
    return -(last @ phiA)[None, :]


def _modal_basis(H):
    """Real modal basis T with H = T L T^-1 and the grouping of its columns."""
    ev, V = np.linalg.eig(H)
    cols, groups, rates = [], [], []
    used = np.zeros(len(ev), bool)
    for i, lam in enumerate(ev):
        if used[i]:
            continue
        used[i] = True
        if abs(lam.imag) < 1e-10 * max(1.0, abs(lam)):
            cols.append(V[:, i].real)
            groups.append([len(cols) - 1])
        else:
            j = next((k for k in range(len(ev)) if not used[k] and abs(ev[k] - lam.conjugate()) < 1e-8 * max(1.0, abs(lam))), None)
            if j is None:
                raise CertificateError("unpaired complex eigenvalue")
            used[j] = True
            cols += [V[:, i].real, V[:, i].imag]
            groups.append([len(cols) - 2, len(cols) - 1])
        rates.append(lam.real)
    T = np.column_stack(cols)
    if np.linalg.cond(T) > 1e10:
        raise CertificateError("H is (nearly) defective; use the Lyapunov construction")
    return T, groups, np.array(rates)


def modal_metric(H, C, forcing, weights, lam):
    """Block-diagonal metric in the modal basis of H.

    Any positive weights d_g on the modal groups give a valid decay rate lam
    provided every eigenvalue of H has real part <= -lam. The weights are
    scaled so that M >= C^T C holds tightly and chosen to minimize
    sum_k weights[k] * ||sqrt(M) forcing[k]||.
    """
    T, groups, rates = _modal_basis(H)
    if rates.max() > -lam + 1e-12:
        raise CertificateError(f"modal metric needs Re(eig H) <= -lambda, got {rates.max():.4g}")
    Ti = np.linalg.inv(T)
    W = C @ T
    Z = [Ti @ np.atleast_2d(np.asarray(v, float)).reshape(H.shape[0], -1) for v in forcing]
    G = len(groups)
    expand = np.zeros((H.shape[0], G))
    for g, idx in enumerate(groups):
        expand[idx, g] = 1.0

    def normalize(d):
        d = np.maximum(d, d.max() / _MAX_SPREAD)
        dd = expand @ d
        s = sym_eig((W / dd) @ W.T)[0][-1] if W.size else 0.0
        return d * max(s, 1e-300)

    def cost(d):
        dd = np.sqrt(expand @ d)
        return sum(wk * spectral_norm(dd[:, None] * z) for wk, z in zip(weights, Z))

    wg = np.array([np.linalg.norm(W[:, idx]) for idx in groups])
    zg = np.array([np.linalg.norm(Z[0][idx]) for idx in groups])
    floor = 1e-9 * max(wg.max(initial=0.0), 1e-12)
    d0 = normalize(np.maximum(wg, floor) / np.maximum(zg, 1e-12 * max(zg.max(initial=0.0), 1e-12)))
    best = d0
    if len(Z) > 1 or any(z.shape[1] > 1 for z in Z) or W.shape[0] > 1:
        obj = lambda ld: cost(normalize(np.exp(ld)))
        res = minimize(obj, np.log(d0), method="Nelder-Mead",
                       options=dict(maxiter=4000 * G, xatol=1e-7, fatol=1e-12))
        cand = normalize(np.exp(res.x))
        if cost(cand) < cost(best):
            best = cand
    M = Ti.T @ np.diag(expand @ best) @ Ti
    return finalize_metric(symmetrize(M), H, C, lam)


# ratio cap between modal weights; keeps M well conditioned
_MAX_SPREAD = 1e6


def finalize_metric(M, H, C, lam, rel=1e-9):
    """Make both inequalities hold strictly despite rounding.

    Adds mu X with (H + lam I)^T X + X (H + lam I) = -I, which pushes the decay
    inequality below zero by mu, then scales by the smallest sigma >= 1 giving
    M >= C^T C.
    """
    n = H.shape[0]
    X = solve_lyapunov(H + lam * np.eye(n), np.eye(n))
    mu = rel * max(np.abs(M).max(), 1e-12) * max(np.abs(H).max(), 1.0) * n
    M = symmetrize(M + mu * X)
    Ri = np.linalg.inv(psd_sqrt(M))
    sigma = max(1.0, float(sym_eig(Ri @ C.T @ C @ Ri)[0][-1]) * (1 + 1e-9))
    return symmetrize(sigma * M)


def lyapunov_metric(H, C, lam, reg=1e-6):
    X = solve_lyapunov(H + lam * np.eye(H.shape[0]), C.T @ C + reg * np.eye(H.shape[0]))
    Xi = np.linalg.inv(psd_sqrt(X))
    sigma = max(1.0, float(sym_eig(Xi @ C.T @ C @ Xi)[0][-1]))
    return symmetrize(sigma * X)


def construct_certificate(m1: SystemModel, m2: SystemModel, P, lam, fixed=None, pole_targets=None,
                          method="lyapunov", eq_tol=1e-6, strict=True, weights=(1.0, 0.5)):
    """Build a certificate for a given projection P.

    Q2 is fitted by least squares, K2 comes from ``fixed['K2']`` or from
    Ackermann placement at ``pole_targets`` and M from either the scaled
    Lyapunov solution ('lyapunov') or the modal construction ('modal').
    With strict=True any failing equality or inequality raises.
    """
    fixed = dict(fixed or {})
    P = as_matrix(P, "P")
    if pole_targets is not None and np.max(np.real(pole_targets)) > -lam:
        raise CertificateError("every pole target needs real part below -lambda")
    base = RsfCertificate.make(m1, m2, np.eye(m1.n), lam, P, **{k: v for k, v in fixed.items() if k != "delta_bar"},
                               delta_bar=fixed.get("delta_bar"))
    rhs = P @ m2.A + P @ m2.D @ base.Q1 @ P - m1.A @ P
    fit = least_squares(m1.B, rhs)
    Q2 = fixed.get("Q2", fit.X)
    cert = base.with_(Q2=np.asarray(Q2, float).reshape(base.Q2.shape))
    if fixed.get("K2") is None:
        if pole_targets is None:
            raise CertificateError("give K2 in fixed or pole_targets")
        H0 = build_H(cert.with_(K2=np.zeros_like(cert.K2)), m1, m2)
        cert = cert.with_(K2=ackermann(H0, m1.B, pole_targets))
    H = build_H(cert, m1, m2)
    if method == "lyapunov":
        M = lyapunov_metric(H, m1.C, lam)
    elif method == "modal":
        vd, vu = mismatch_vectors(cert, m1, m2)
        M = modal_metric(H, m1.C, [vd, vu], weights, lam)
    else:
        raise ValueError(f"unknown method {method!r}")
    cert = cert.with_(M=M, meta={"method": method, "q2_residual": fit.residual})
    eqs = verify_equalities(cert, m1, m2, tol=eq_tol)
    lmis = verify_lmis(cert, m1, m2)
    if strict and not eqs.passed:
        raise CertificateError("matching equalities fail", eqs.residuals)
    if strict and not lmis.passed:
        raise CertificateError(f"inequalities fail (margins {lmis.lmi_a_margin:.3g}, {lmis.lmi_b_margin:.3g})")
    return cert


# ----------------------------------------------------------------------------
# reduced abstractions with exact matching


def exact_projection(A1, B1, A2, P_ref):
    """P solving A1 P - P A2 = -B1 Q2 for the Q2 that keeps P closest to P_ref.

    The solution set is affine in Q2, so the closest member is a least-squares
    problem over one Sylvester solve per entry of Q2.
    """
    n1, n2 = A1.shape[0], A2.shape[0]
    p = B1.shape[1]
    basis, cols = [], []
    for i in range(p):
        for j in range(n2):
            E = np.zeros((p, n2))
            E[i, j] = 1.0
            Pij = solve_sylvester(A1, -A2, -B1 @ E)
            basis.append(E)
            cols.append(Pij.ravel())
    Bmat = np.column_stack(cols)
    coef = least_squares(Bmat, P_ref.ravel()).X
    Q2 = sum(c * E for c, E in zip(coef, basis))
    P = (Bmat @ coef).reshape(n1, n2)
    return P, Q2


def weighted_fit(M, P, target):
    """argmin_X ||sqrt(M) (target - P X)||."""
    G = P.T @ M @ P
    return np.linalg.solve(G, P.T @ M @ target)


@dataclass
class FittedAbstraction:
    m2: SystemModel
    cert: RsfCertificate
    hankel: np.ndarray
    P_balanced: np.ndarray


def fit_abstraction(m1: SystemModel, order=3, lam=1.7, K2=None, pole_targets=None, R1=None, R2=None,
                    weights=(1.0, 0.5), iterations=4, reduce_with_internal=True) -> FittedAbstraction:
    """Reduced model plus certificate with all four matching equalities exact.

    The pipeline is: balanced truncation for A2 and a reference projection,
    the exact projection closest to it, K2 (given or placed), the modal metric
    and M-weighted B2/D2, alternating the last two a few times. A nonlinear
    channel E1 that lies in the span of [P, B1] is matched exactly, the part
    along B1 being cancelled by the interface (L21 = -l, L22 = 0).
    With internal channels present the reduction also sees their columns, so
    the reduced state space can carry the neighbours' influence.
    """
    lin = m1.linear_part()
    Bred = np.hstack([lin.B, lin.S]) if reduce_with_internal and lin.r else None
    red = balanced_truncate(lin, order, Bred)
    A2 = red.model.A
    P, Q2 = exact_projection(m1.A, m1.B, A2, red.P)
    n2, p1 = A2.shape[0], m1.p
    d1 = m1.q + m1.r
    R1 = np.eye(d1) if R1 is None else np.asarray(R1, float).reshape(d1, d1)
    R2 = np.eye(p1) if R2 is None else np.asarray(R2, float).reshape(p1, -1)
    E2 = np.zeros((n2, 1))
    L21 = np.zeros((p1, 1))
    if not m1.is_linear:
        sol = least_squares(np.hstack([P, m1.B]), m1.E).X
        E2, ell = sol[:n2], sol[n2:]
        E2[np.abs(E2) < 1e-12 * max(1.0, float(np.abs(m1.E).max()))] = 0.0
        L21 = -ell
    Bfit = least_squares(P, m1.B @ R2).X
    Dfit = least_squares(P, m1.D).X @ np.linalg.pinv(R1)
    m2 = SystemModel(A=A2, B=Bfit, C=m1.C @ P, G=Dfit[:, :m1.q], S=Dfit[:, m1.q:], E=E2,
                     F=m1.F @ P, phi=m1.phi, C_int=m1.C_int @ P,
                     name=(m1.name + "-abstraction") if m1.name else "abstraction")
    fixed = dict(Q2=Q2, R1=R1, R2=R2, L21=L21)
    cert = RsfCertificate.make(m1, m2, np.eye(m1.n), lam, P, **fixed)
    if K2 is None:
        if pole_targets is None:
            raise CertificateError("give K2 or pole_targets")
        H0 = build_H(cert, m1, m2)
        K2 = ackermann(H0, m1.B, pole_targets)
    cert = cert.with_(K2=np.asarray(K2, float).reshape(p1, m1.n))
    H = build_H(cert, m1, m2)
    M = None
    for _ in range(max(1, iterations)):
        vd, vu = mismatch_vectors(cert, m1, m2)
        M = modal_metric(H, m1.C, [vd, vu], weights, lam)
        B2 = weighted_fit(M, P, m1.B @ R2)
        D2 = weighted_fit(M, P, m1.D) @ np.linalg.pinv(R1)
        m2 = m2.with_(B=B2, G=D2[:, :m1.q], S=D2[:, m1.q:])
        cert = cert.with_(M=M)
    vd, vu = mismatch_vectors(cert, m1, m2)
    cert = cert.with_(M=modal_metric(H, m1.C, [vd, vu], weights, lam), meta={"method": "modal-exact"})
    return FittedAbstraction(m2, cert, red.hankel, red.P)


def search_refinement_gains(cert, m1, m2, d_max, u2_max, bounds=(0.1, 10.0), sweeps=3, grid=41):
    """Coordinate search over scalar R1 and R2 minimizing c1 d_max + c2 u2_max."""
    if cert.R1.size != 1 or cert.R2.size != 1:
        raise CertificateError("coordinate search handles scalar R1 and R2 only")
    vals = np.geomspace(bounds[0], bounds[1], grid)
    r1, r2 = float(cert.R1[0, 0]), float(cert.R2[0, 0])

    def eps(a, b):
        c1, c2 = gamma_coefficients(cert.with_(R1=np.array([[a]]), R2=np.array([[b]])), m1, m2)
        return c1 * d_max + c2 * u2_max

    for _ in range(sweeps):
        r1 = float(min(vals, key=lambda a: eps(a, r2)))
        r2 = float(min(vals, key=lambda b: eps(r1, b)))
    return cert.with_(R1=np.array([[r1]]), R2=np.array([[r2]])), eps(r1, r2)
