"""Command-line entry point.

Exit codes: 0 success, 1 verification or synthesis failure, 2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings

import numpy as np

from . import nets
from .models import ModelError, Trace, load_model, save_model, simulate
from .reduction import ReductionError, balanced_truncate
from .rsf import (CertificateError, EpsilonQuery, construct_certificate, epsilon_bound, fit_abstraction,
                  load_certificate, save_certificate, verify_equalities, verify_lmis)
from .specs import (Infeasible, MonitorError, SpecError, load_spec, monitor, shrink_spec,
                    spec_from_dict)
from .symbolic import (GridAbstraction, SymbolicError, build_abstraction, cells_inside,
                       cells_touching, closed_loop, load_controller, save_controller,
                       synthesize_recurrence)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _emit(obj, path=None):
    txt = json.dumps(obj, indent=1, default=_json_default)
    print(txt)
    if path:
        with open(path, "w") as fh:
            fh.write(txt + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o).__name__)


def _existing(path):
    """Path as given, else the bundled data file of the same name."""
    if os.path.exists(path):
        return path
    try:
        return nets.data_path(os.path.basename(path))
    except FileNotFoundError:
        raise FileNotFoundError(f"no such file: {path}") from None


def _pair_for_cert(cert_path, m1=None, m2=None):
    """Concrete/abstract models for a certificate: flags, else '<stem>.json' and '<stem>_abstract.json'."""
    stem = os.path.basename(cert_path)
    stem = stem[:-len(".cert.json")] if stem.endswith(".cert.json") else os.path.splitext(stem)[0]
    folder = os.path.dirname(cert_path)
    guess = lambda name: os.path.join(folder, name) if os.path.exists(os.path.join(folder, name)) else name
    p1 = m1 or guess(stem + ".json")
    p2 = m2 or guess(stem + "_abstract.json")
    return load_model(_existing(p1)), load_model(_existing(p2))


# ----------------------------------------------------------------------------
# subcommands


def cmd_reduce(a):
    m = load_model(_existing(a.model))
    lin = m.linear_part()
    B = np.hstack([lin.B, lin.S]) if a.with_internal and lin.r else None
    red = balanced_truncate(m, a.order, B)
    save_model(red.model, a.out)
    if a.proj:
        np.savetxt(a.proj, red.P, delimiter=",", fmt="%.17g")
    _emit({"order": red.model.n, "hankel": red.hankel.tolist(), "out": a.out, "proj": a.proj})
    return 0


def cmd_rsf_verify(a):
    cert = load_certificate(_existing(a.cert))
    m1, m2 = _pair_for_cert(_existing(a.cert), a.m1, a.m2)
    lmi = verify_lmis(cert, m1, m2)
    eq = verify_equalities(cert, m1, m2, tol=a.eq_tol)
    out = {"lmi_a_margin": lmi.lmi_a_margin, "lmi_b_margin": lmi.lmi_b_margin, "hurwitz": lmi.hurwitz,
           "vertex_margins": lmi.vertex_margins, "lmis_passed": lmi.passed,
           "equalities": eq.residuals, "equalities_passed": eq.passed}
    _emit(out, a.json)
    return 0 if lmi.passed and (eq.passed or a.lmi_only) else 1


def cmd_rsf_construct(a):
    """With --m2 and --proj: certificate for the given pair. Otherwise fit an abstraction as well."""
    m1 = load_model(_existing(a.m1))
    K2 = load_certificate(_existing(a.k2_from)).K2 if a.k2_from else None
    poles = [complex(p) for p in a.poles.split(",")] if a.poles else None
    if a.m2:
        if not a.proj:
            raise UsageError("--m2 needs --proj")
        m2 = load_model(_existing(a.m2))
        P = np.atleast_2d(np.loadtxt(a.proj, delimiter=",")).reshape(m1.n, m2.n)
        fixed = {"K2": K2, "R2": np.array([[a.R2]])} if K2 is not None else {"R2": np.array([[a.R2]])}
        try:
            cert = construct_certificate(m1, m2, P, a.lam, fixed, poles, strict=False)
        except CertificateError as exc:
            print(f"rsfkit: {exc}", file=sys.stderr)
            return 1
    else:
        fa = fit_abstraction(m1, a.order, a.lam, K2=K2, pole_targets=poles, R2=a.R2,
                             reduce_with_internal=not a.no_internal)
        m2, cert = fa.m2, fa.cert
        if not a.out_model:
            raise UsageError("--out-model is required when the abstraction is fitted")
    if a.out_model:
        save_model(m2, a.out_model)
    save_certificate(cert, a.out_cert)
    lmi = verify_lmis(cert, m1, m2)
    eps = epsilon_bound(cert, m1, m2, EpsilonQuery(a.dmax, a.u2max))
    _emit({"epsilon": eps, "lmis_passed": lmi.passed, "lmi_b_margin": lmi.lmi_b_margin,
           "model": a.out_model, "cert": a.out_cert})
    return 0 if lmi.passed else 1


def cmd_rsf_epsilon(a):
    cert = load_certificate(_existing(a.cert))
    m1, m2 = _pair_for_cert(_existing(a.cert), a.m1, a.m2)
    eps = epsilon_bound(cert, m1, m2, EpsilonQuery(a.dmax, a.u2max))
    print(f"epsilon = {eps:.4f}")
    if a.json:
        _emit({"epsilon": eps, "d_max": a.dmax, "u2_max": a.u2max}, a.json)
    return 0


def _grid_from_file(path):
    with open(path) as fh:
        return GridAbstraction.from_dict(json.load(fh))


def cmd_synth(a):
    m2 = load_model(_existing(a.model))
    grid = _grid_from_file(a.grid)
    spec = load_spec(_existing(a.spec))
    shrunk = shrink_spec(spec, a.epsilon)
    if isinstance(shrunk, Infeasible):
        print(f"infeasible at epsilon {a.epsilon}: {shrunk.reason}", file=sys.stderr)
        return 1
    rel = build_abstraction(m2, grid)
    T = cells_inside(grid, m2.C, shrunk.T[0], shrunk.T[1])
    A = cells_touching(grid, m2.C, -np.inf, shrunk.B[0]) | cells_touching(grid, m2.C, shrunk.B[1], np.inf)
    ctrl = synthesize_recurrence(rel, T & ~A, A)
    save_controller(ctrl, a.out)
    origin = int(grid.cell_of(np.zeros(m2.n))[0])
    _emit({"winning_cells": int(ctrl.winning.sum()), "cells": grid.n_cells,
           "origin_winning": bool(origin >= 0 and ctrl.winning[origin]), "iterations": ctrl.iterations,
           "seconds": ctrl.seconds, "out": a.out})
    return 0 if ctrl.success else 1


def cmd_closedloop(a):
    cert = load_certificate(_existing(a.cert))
    m1, m2 = _pair_for_cert(_existing(a.cert), a.m1, a.m2)
    ctrl = load_controller(a.ctrl) if a.ctrl else None
    tau = a.tau if a.tau else (ctrl.grid.tau if ctrl else 0.1)
    eps = a.epsilon if a.epsilon is not None else epsilon_bound(cert, m1, m2, EpsilonQuery(a.dmax, a.u2max))
    tr1, tr2, rep = closed_loop(m1, m2, cert, ctrl, v_signal=a.v, horizon=a.horizon, dt=a.dt, tau=tau,
                                epsilon=eps)
    out = {"mode": "closedloop", "epsilon": eps, "max_mismatch": rep.max_mismatch, "max_V": rep.max_V,
           "soundness_violations": rep.soundness_violations, "bound_violations": rep.bound_violations}
    verdict = None
    spec = None
    if a.spec:
        spec = load_spec(_existing(a.spec))
        verdict = monitor(tr1, spec)
        out["verdict"] = verdict.to_dict()
    if a.out:
        os.makedirs(a.out, exist_ok=True)
        tr1.to_csv(os.path.join(a.out, "area1.csv"))
        tr2.to_csv(os.path.join(a.out, "area1_abstract.csv"))
        from .specs import spec_to_dict
        rep_json = {**out, "areas": {"1": {"epsilon": eps, "max_mismatch": rep.max_mismatch,
                                           "spec": spec_to_dict(spec) if spec else None,
                                           "verdict": verdict.to_dict() if verdict else None}}}
        with open(os.path.join(a.out, "report.json"), "w") as fh:
            json.dump(rep_json, fh, indent=1, default=_json_default)
    _emit(out)
    ok = rep.ok and (verdict is None or verdict.satisfied)
    return 0 if ok else 1


def cmd_monitor(a):
    tr = Trace.from_csv(a.trace)
    spec = load_spec(_existing(a.spec))
    ctx = {"freq": a.freq, "offset": a.offset}
    if a.loss is not None:
        ctx["loss"] = a.loss
    if a.power:
        ctx["power"] = a.power
    if a.threshold is not None:
        ctx["event_threshold"] = a.threshold
    v = monitor(tr, spec, ctx)
    _emit(v.to_dict(), a.json)
    if not v.satisfied:
        print(f"violated at t = {v.first_violation:.4f} s ({v.witness})", file=sys.stderr)
    return 0 if v.satisfied else 1


def cmd_scenario(a):
    from .contracts import ScenarioError, load_scenario, run_scenario
    cfg = load_scenario(_existing(a.config))
    if a.controllers is not None:
        cfg.controllers = a.controllers == "on"
    if a.cache:
        cfg.cache = a.cache
    try:
        rep = run_scenario(cfg)
    except ScenarioError as exc:
        print(f"scenario failed: {exc}", file=sys.stderr)
        return 1
    files = rep.write(a.out) if a.out else []
    summary = {"global": rep.global_verdict.to_dict(),
               "areas": {k: r.verdict.to_dict() for k, r in rep.areas.items()},
               "composition": rep.composition, "sound": rep.sound, "seconds": rep.seconds,
               "files": files}
    _emit(summary)
    return 0 if rep.ok else 1


def cmd_export(a):
    written = export_plotdata(a.report, a.out)
    for p in written:
        print(p)
    return 0


def cmd_data(a):
    for item in nets.catalog():
        print(f"{item['name']:40s} {item['description']}")
    return 0


# ----------------------------------------------------------------------------
# plot data


def _band_cells(spec):
    if not spec:
        return ["", "", "", ""]
    s = spec_from_dict(spec)
    f = lambda x: "" if math.isinf(x) else repr(float(x))
    return [f(s.T[0]), f(s.T[1]), f(s.B[0]), f(s.B[1])]


def export_plotdata(report_dir, out_dir):
    """One CSV per figure panel: frequency (with T and A edges) and input, per area.

    band_A_lo is the edge below which the lower avoid region starts, band_A_hi
    the edge above which the upper one starts; open edges are left blank.
    """
    path = os.path.join(report_dir, "report.json")
    if not os.path.exists(path):
        warnings.warn(f"no report.json under {report_dir}; nothing exported")
        return []
    with open(path) as fh:
        rep = json.load(fh)
    areas = rep.get("areas") or {}
    if not areas:
        warnings.warn("report lists no areas; nothing exported")
        return []
    os.makedirs(out_dir, exist_ok=True)
    written = []
    header = ["t", "value", "band_T_lo", "band_T_hi", "band_A_lo", "band_A_hi"]
    for key, info in sorted(areas.items()):
        trace_path = os.path.join(report_dir, f"area{key}.csv")
        if not os.path.exists(trace_path):
            warnings.warn(f"missing trace {trace_path}")
            continue
        tr = Trace.from_csv(trace_path)
        bands = _band_cells(info.get("spec"))
        panels = {"frequency": (tr.y[:, 0], bands),
                  "input": (tr.u[:, 0] if tr.u.shape[1] else np.zeros(len(tr)), ["", "", "", ""])}
        for panel, (vals, b) in panels.items():
            p = os.path.join(out_dir, f"area{key}_{panel}.csv")
            with open(p, "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(header)
                for t, v in zip(tr.t, vals):
                    wr.writerow([repr(float(t)), repr(float(v))] + b)
            written.append(p)
    return written


# ----------------------------------------------------------------------------
# parser


def build_parser():
    p = _Parser(prog="rsfkit", description="Reduced-order formal frequency control toolkit")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized routines")
    sub = p.add_subparsers(dest="cmd", parser_class=_Parser)

    r = sub.add_parser("reduce", help="balanced truncation of a model")
    r.add_argument("--model", required=True)
    r.add_argument("--order", type=int, default=3)
    r.add_argument("--out", required=True)
    r.add_argument("--proj", help="also write the projection P as CSV")
    r.add_argument("--with-internal", action="store_true", help="let internal columns shape the Gramian")
    r.set_defaults(func=cmd_reduce)

    rs = sub.add_parser("rsf", help="certificate tools")
    rsub = rs.add_subparsers(dest="rsf_cmd", parser_class=_Parser)
    for name, fn in (("verify", cmd_rsf_verify), ("epsilon", cmd_rsf_epsilon)):
        q = rsub.add_parser(name)
        q.add_argument("--cert", required=True)
        q.add_argument("--m1")
        q.add_argument("--m2")
        q.add_argument("--json")
        q.set_defaults(func=fn)
        if name == "epsilon":
            q.add_argument("--dmax", type=float, default=1.0)
            q.add_argument("--u2max", type=float, default=0.5)
        else:
            q.add_argument("--eq-tol", type=float, default=0.05)
            q.add_argument("--lmi-only", action="store_true", help="ignore the matching equalities")
    c = rsub.add_parser("construct", help="build a certificate (and fit an abstraction unless --m2 is given)")
    c.add_argument("--m1", "--model", dest="m1", required=True)
    c.add_argument("--m2")
    c.add_argument("--proj", help="CSV with the projection P (needed with --m2)")
    c.add_argument("--order", type=int, default=3)
    c.add_argument("--lambda", "--lam", dest="lam", type=float, default=1.7)
    c.add_argument("--k2-from", help="certificate whose K2 is reused")
    c.add_argument("--poles", help="comma-separated closed-loop poles for K2 placement")
    c.add_argument("--R2", type=float, default=1.0)
    c.add_argument("--no-internal", action="store_true")
    c.add_argument("--dmax", type=float, default=1.0)
    c.add_argument("--u2max", type=float, default=0.5)
    c.add_argument("--out-model")
    c.add_argument("--out-cert", required=True)
    c.set_defaults(func=cmd_rsf_construct)

    s = sub.add_parser("synth", help="symbolic controller synthesis")
    s.add_argument("--model", required=True)
    s.add_argument("--grid", required=True)
    s.add_argument("--spec", required=True)
    s.add_argument("--epsilon", type=float, default=0.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    cl = sub.add_parser("closedloop", help="run the refined controller on the concrete model")
    cl.add_argument("--cert", required=True)
    cl.add_argument("--m1")
    cl.add_argument("--m2")
    cl.add_argument("--ctrl", help="controller file; omitted means the u2 = 0 baseline")
    cl.add_argument("--v", type=float, default=1.0)
    cl.add_argument("--horizon", type=float, default=6.0)
    cl.add_argument("--dt", type=float, default=0.005)
    cl.add_argument("--tau", type=float)
    cl.add_argument("--epsilon", type=float)
    cl.add_argument("--dmax", type=float, default=1.0)
    cl.add_argument("--u2max", type=float, default=0.5)
    cl.add_argument("--spec")
    cl.add_argument("--out")
    cl.set_defaults(func=cmd_closedloop)

    m = sub.add_parser("monitor", help="check a trace CSV against a spec")
    m.add_argument("--trace", required=True)
    m.add_argument("--spec", required=True)
    m.add_argument("--loss", type=float, help="infeed loss in MW")
    m.add_argument("--freq", default="y1")
    m.add_argument("--offset", type=float, default=0.0, help="added to the frequency column")
    m.add_argument("--power", help="power column for FFR/EFR specs")
    m.add_argument("--threshold", type=float, help="low-frequency event threshold")
    m.add_argument("--json")
    m.set_defaults(func=cmd_monitor)

    sc = sub.add_parser("scenario", help="multi-area scenarios")
    scsub = sc.add_subparsers(dest="sc_cmd", parser_class=_Parser)
    run = scsub.add_parser("run")
    run.add_argument("--config", required=True)
    run.add_argument("--out")
    run.add_argument("--controllers", choices=("on", "off"))
    run.add_argument("--cache", help="controller cache directory")
    run.set_defaults(func=cmd_scenario)

    e = sub.add_parser("export", help="plot-ready CSVs from a report directory")
    e.add_argument("--report", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export)

    d = sub.add_parser("data", help="list bundled data files")
    d.set_defaults(func=cmd_data)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.print_usage(sys.stderr)
            return 2
        np.random.seed(args.seed)
        return args.func(args)
    except UsageError as exc:
        print(f"rsfkit: error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, PermissionError, json.JSONDecodeError) as exc:
        print(f"rsfkit: {exc}", file=sys.stderr)
        return 2
    except (ModelError, SpecError, MonitorError, CertificateError, ReductionError) as exc:
        print(f"rsfkit: {exc}", file=sys.stderr)
        return 2
    except SymbolicError as exc:
        print(f"rsfkit: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
