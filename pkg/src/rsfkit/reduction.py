"""Balanced truncation of the linear part of a subsystem."""
from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np

from .models import SystemModel
from .numerics import is_hurwitz, psd_sqrt, solve_lyapunov, sym_eig


class ReductionError(ValueError):
    pass


class ReductionWarning(UserWarning):
    pass


class Reduced(NamedTuple):
    model: SystemModel
    P: np.ndarray
    hankel: np.ndarray


def gramians(model: SystemModel, B=None):
    """Controllability and observability Gramians of (A, B, C); E is ignored.

    ``B`` overrides the input matrix, e.g. to let disturbance columns shape
    the controllability Gramian as well.
    """
    ok, absc = is_hurwitz(model.A)
    if not ok:
        raise ReductionError(f"A is not Hurwitz (spectral abscissa {absc:.4g})")
    B = model.B if B is None else np.asarray(B, float)
    Wc = solve_lyapunov(model.A.T, B @ B.T)
    Wo = solve_lyapunov(model.A, model.C.T @ model.C)
    return Wc, Wo


def _canonical_signs(C2):
    """+1/-1 per balanced state: the dominant output entry negative, the rest non-negative."""
    row = C2[0] if C2.shape[0] else np.zeros(C2.shape[1])
    lead = int(np.argmax(np.abs(row))) if row.size else -1
    s = np.ones(C2.shape[1])
    for i, c in enumerate(row):
        if i == lead:
            s[i] = -1.0 if c > 0 else 1.0
        else:
            s[i] = -1.0 if c < 0 else 1.0
    return s


def balancing_projections(model: SystemModel, r: int, B=None):
    """Square-root balancing. Returns (T_r, P_r, hankel) with T_r P_r = I.

    T_r maps full states to balanced coordinates, P_r maps them back.
    No inverse of the Gramian factor is formed, so unreachable directions are
    handled as long as r does not exceed the numerical rank.
    """
    n = model.n
    if not 1 <= r <= n:
        raise ReductionError(f"order must lie in [1, {n}], got {r}")
    Wc, Wo = gramians(model, B)
    Lc = psd_sqrt(Wc)
    w, V = sym_eig(Lc @ Wo @ Lc)
    order = np.argsort(w)[::-1]
    w, V = np.clip(w[order], 0.0, None), V[:, order]
    hsv = np.sqrt(w)
    rank = int(np.sum(hsv > 1e-10 * max(hsv[0], 1e-300)))
    kept = hsv[:min(r + 1, rank)]
    if kept.size > 1 and np.any(np.abs(np.diff(kept)) <= 1e-10 * kept[0]):
        warnings.warn("repeated Hankel singular values: balancing is not unique", ReductionWarning)
    if r > rank:
        warnings.warn(f"order {r} exceeds numerical rank {rank}; truncating to {rank}", ReductionWarning)
        r = rank
    s = hsv[:r]
    Vr = V[:, :r]
    T = (s ** -1.5)[:, None] * (Vr.T @ Lc @ Wo)
    P = Lc @ Vr * (s ** -0.5)[None, :]
    signs = _canonical_signs(model.C @ P)
    return T * signs[:, None], P * signs[None, :], hsv


def balanced_truncate(model: SystemModel, r: int, B=None) -> Reduced:
    """Reduce to order r; the nonlinear channel is carried along as (T E, F P)."""
    T, P, hsv = balancing_projections(model, r, B)
    reduced = SystemModel(
        A=T @ model.A @ P, B=T @ model.B, C=model.C @ P, G=T @ model.G, S=T @ model.S,
        E=T @ model.E, F=model.F @ P, phi=model.phi, C_int=model.C_int @ P,
        name=(model.name + "-reduced") if model.name else "reduced")
    return Reduced(reduced, P, hsv)
