"""End-to-end wiring for one area: abstraction, certificate, epsilon, grid, controller.

Controllers are cached on disk by a content hash of everything that
determines them, so repeated runs skip the synthesis.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import nets
from .models import SystemModel
from .rsf import (EpsilonQuery, RsfCertificate, box_norm_bound, epsilon_bound, fit_abstraction,
                  load_certificate)
from .specs import Infeasible, ReachAvoid, shrink_spec, spec_to_dict
from .symbolic import (GridAbstraction, SymbolicController, build_abstraction, cells_inside,
                       cells_touching, default_grid, load_controller, save_controller,
                       synthesize_recurrence)


@dataclass(frozen=True)
class Settings:
    """Desk-scale synthesis settings shared by the NETS areas."""
    half_width: float = 0.75
    eta: float = 0.025
    tau: float = 0.1
    input_step: float = 0.1
    u2_max: float = 0.5
    R2: float = 2.0
    v_band: tuple = (0.9, 1.0)
    lam: float = 1.7
    order: int = 3

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        if "v_band" in d:
            d["v_band"] = tuple(d["v_band"])
        return cls(**d)


def reference_gain():
    """Feedback gain K2 printed with the nonlinear Area-1 certificate; reused for every area."""
    return load_certificate(nets.data_path("nets_area1_nonlinear.cert.json")).K2


@dataclass
class AreaSetup:
    name: str
    m1: SystemModel
    m2: SystemModel
    cert: RsfCertificate
    epsilon: float
    spec: ReachAvoid
    shrunk: object
    grid: GridAbstraction
    settings: Settings
    w_box: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    def cache_key(self):
        blob = json.dumps({"m2": self.m2.to_dict(), "grid": self.grid.to_dict(),
                           "spec": _shrunk_dict(self.shrunk)}, sort_keys=True, default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:20]


def _shrunk_dict(s):
    if isinstance(s, Infeasible):
        return {"infeasible": s.reason}
    return spec_to_dict(s)


def prepare_area(m1: SystemModel, spec: ReachAvoid, settings: Settings = Settings(), K2=None,
                 w_box=None, name=None) -> AreaSetup:
    """Fit the 3-state abstraction, bound epsilon and lay out the grid.

    ``w_box`` = (lower, upper) per internal channel; required when m1 has
    internal channels, since the abstraction must be robust to them.
    """
    K2 = reference_gain() if K2 is None else K2
    if m1.r and w_box is None:
        raise ValueError("the model has internal channels; give their disturbance box")
    fa = fit_abstraction(m1, settings.order, settings.lam, K2=K2, R2=settings.R2,
                         reduce_with_internal=m1.r > 0)
    m2, cert = fa.m2, fa.cert
    for nm in ("K1", "Q1", "L11", "L12"):
        if np.any(getattr(cert, nm)):
            raise ValueError(f"disturbance interface with non-zero {nm} is not supported here")
    lo = [settings.v_band[0]] * m1.q
    hi = [settings.v_band[1]] * m1.q
    if m1.r:
        lo += list(np.asarray(w_box[0], float))
        hi += list(np.asarray(w_box[1], float))
    # d2 = R1 d1 maps the box of d1 onto a box of d2
    R1 = cert.R1
    c, h = R1 @ ((np.array(lo) + np.array(hi)) / 2), np.abs(R1) @ ((np.array(hi) - np.array(lo)) / 2)
    d_lo, d_hi = c - h, c + h
    d_max = box_norm_bound(lo, hi)
    eps = epsilon_bound(cert, m1, m2, EpsilonQuery(d_max, settings.u2_max))
    grid = default_grid(m2.n, settings.u2_max, d_lo, d_hi, half_width=settings.half_width,
                        eta=settings.eta, tau=settings.tau, input_step=settings.input_step)
    return AreaSetup(name or m1.name or "area", m1, m2, cert, eps, spec, shrink_spec(spec, eps), grid,
                     settings, None if w_box is None else (tuple(lo[m1.q:]), tuple(hi[m1.q:])),
                     {"hankel": fa.hankel.tolist(), "d_max": d_max})


def target_and_avoid(setup: AreaSetup):
    """Grid cells entirely inside the shrunk target, and cells touching the shrunk avoid set."""
    s = setup.shrunk
    if isinstance(s, Infeasible):
        raise ValueError(f"spec is infeasible at epsilon {setup.epsilon:.4g}: {s.reason}")
    C = setup.m2.C
    T = cells_inside(setup.grid, C, s.T[0], s.T[1])
    A = cells_touching(setup.grid, C, -np.inf, s.B[0]) | cells_touching(setup.grid, C, s.B[1], np.inf)
    # the touching test is closed; an output exactly on B is still safe, which the
    # cell-level test gives up for simplicity (one more cell of margin)
    return T & ~A, A


def synthesize_area(setup: AreaSetup) -> SymbolicController:
    t0 = time.perf_counter()
    rel = build_abstraction(setup.m2, setup.grid)
    T, A = target_and_avoid(setup)
    ctrl = synthesize_recurrence(rel, T, A)
    ctrl.seconds = time.perf_counter() - t0
    return ctrl


def cache_dir(path=None):
    path = path or os.environ.get("RSFKIT_CACHE") or os.path.join(os.path.expanduser("~"), ".cache",
                                                                   "rsfkit")
    os.makedirs(path, exist_ok=True)
    return path


def controller_for(setup: AreaSetup, cache=None, refresh=False):
    """Synthesize, or load the cached controller. Failed syntheses are cached too (empty file)."""
    path = os.path.join(cache_dir(cache), f"{setup.name}-{setup.cache_key()}.ctrl")
    if os.path.exists(path) and not refresh:
        return load_controller(path), path
    ctrl = synthesize_area(setup)
    save_controller(ctrl, path)
    return ctrl, path


def settings_dict(s: Settings):
    d = asdict(s)
    d["v_band"] = list(s.v_band)
    return d
