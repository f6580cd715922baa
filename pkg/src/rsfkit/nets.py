"""Bundled New England test-system data and the per-area extraction rule."""
from __future__ import annotations

import json
import os
from importlib import resources

import numpy as np

from .models import ModelError, SystemModel, load_model

_DESCRIPTIONS = {
    "nets_full.json": "27-state interconnected model (A, B, C, G); coupling lives inside A",
    "nets_area1_nonlinear.json": "Area 1, 9 states, with the ESS saturation channel",
    "nets_area1_nonlinear_abstract.json": "printed 3-state abstraction of nonlinear Area 1",
    "nets_area1_nonlinear.cert.json": "printed certificate (M, P, K2, Q2, L12, L22) for nonlinear Area 1",
    "nets_area1_linear.json": "printed linear Area 1, isolated",
    "nets_area1_linear_abstract.json": "printed 3-state abstraction of linear Area 1",
    "nets_area1_linear.cert.json": "printed certificate for linear Area 1",
    "nets_area1_internal.json": "Area 1 extracted from the full model, with two internal-disturbance columns",
    "nets_extraction.json": "state/column map used to cut the full model into areas",
    "constants.json": "grid-code constants, lambda, delta_bar, ESS limits, horizon and step",
    "queries.json": "default epsilon queries (isolated and compositional)",
    "spec_area1.json": "reach-avoid bands for Area 1",
    "spec_isolated_area12.json": "reach-avoid bands for Areas 1 and 2 in the decentralised run",
    "spec_isolated_area3.json": "looser reach-avoid bands for Area 3",
    "spec_global.json": "network-wide lower frequency bound",
    "scenario_isolated.json": "decentralised three-area run, coupling zeroed, v = 1 in every area",
    "scenario_compositional.json": "interconnected run, Area 3 controlled against worst-case neighbours",
}


def data_dir():
    """Directory holding the bundled JSON files; RSFKIT_DATA overrides it."""
    env = os.environ.get("RSFKIT_DATA")
    if env:
        return env
    return str(resources.files("rsfkit") / "data")


def data_path(name):
    p = os.path.join(data_dir(), name)
    if not os.path.exists(p):
        raise FileNotFoundError(f"no bundled file {name!r} under {data_dir()}")
    return p


def catalog():
    """List of {name, description} for every bundled file."""
    names = sorted(f for f in os.listdir(data_dir()) if f.endswith(".json"))
    return [{"name": n, "description": _DESCRIPTIONS.get(n, "")} for n in names]


def load_json(name):
    with open(data_path(name)) as fh:
        return json.load(fh)


def constants():
    return load_json("constants.json")


def extraction_map():
    return load_json("nets_extraction.json")["areas"]


def load_full():
    return load_model(data_path("nets_full.json"))


def area_indices(area_id, ext=None):
    """Zero-based state indices of one area in the full model."""
    ext = ext or extraction_map()
    key = str(area_id)
    if key not in ext:
        raise ModelError(f"unknown area {area_id!r}; expected one of {sorted(ext)}", "area_id")
    return [k - 1 for k in ext[key]["states"]]


def extract_area(full: SystemModel = None, area_id=1, ext=None) -> SystemModel:
    """Cut one 9-state area out of the full model.

    Internal disturbances are the neighbours' frequency states; their columns
    of the full A become S. The area's own frequency state is the output
    (scaled by the output gain) and the internal output.
    """
    full = load_full() if full is None else full
    ext = ext or extraction_map()
    idx = area_indices(area_id, ext)
    e = ext[str(area_id)]
    cols = [c - 1 for c in e["internal_columns"]]
    loc = idx.index(e["freq_state"] - 1)
    n = len(idx)
    A = full.A[np.ix_(idx, idx)]
    S = full.A[np.ix_(idx, cols)]
    B = full.B[np.ix_(idx, [e["input_column"] - 1])]
    G = full.G[np.ix_(idx, [e["input_column"] - 1])]
    C = np.zeros((1, n))
    C[0, loc] = e["output_gain"]
    C_int = np.zeros((1, n))
    C_int[0, loc] = 1.0
    return SystemModel(A=A, B=B, C=C, G=G, S=S, C_int=C_int, name=f"area{area_id}")


def isolate(model: SystemModel) -> SystemModel:
    """Drop the internal channels (coupling zeroed)."""
    return model.with_(S=np.zeros((model.n, 0)), name=model.name + "-isolated")


def embed_areas(areas, full_shape=None, ext=None):
    """Rebuild the 27x27 A from extracted areas (blocks plus coupling columns)."""
    ext = ext or extraction_map()
    N = full_shape or sum(len(v["states"]) for v in ext.values())
    A = np.zeros((N, N))
    for key, m in areas.items():
        idx = area_indices(key, ext)
        A[np.ix_(idx, idx)] = m.A
        cols = [c - 1 for c in ext[str(key)]["internal_columns"]]
        A[np.ix_(idx, cols)] += m.S
    return A


def neighbor_state_indices(area_id, ext=None):
    """Zero-based full-model indices whose values form the area's internal input w."""
    ext = ext or extraction_map()
    return [c - 1 for c in ext[str(area_id)]["internal_columns"]]


def output_gain(area_id, ext=None):
    ext = ext or extraction_map()
    return float(ext[str(area_id)]["output_gain"])
