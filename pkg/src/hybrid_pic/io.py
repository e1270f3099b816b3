"""CSV and JSON file formats for frames, diagnostics, checkpoints and manifests.

Floats are written with 17 significant digits so every file round-trips
exactly.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .nn import ModelSpec, param_count
from .qsim import AnsatzSpec

FLOAT_FMT = "%.17g"
CHECKPOINT_FORMAT = "hybrid_pic.checkpoint/1"


def _write_table(path, header, columns, int_cols=0):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([np.asarray(c, float) for c in columns]) if columns else np.empty((0, 0))
    fmt = ["%d"] * int_cols + [FLOAT_FMT] * (data.shape[1] - int_cols)
    np.savetxt(path, data, fmt=fmt, delimiter=",", header=",".join(header), comments="")
    return path


def _read_table(path):
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        data = np.empty((0, len(header)))
    return header, data


def write_frames(path, rho_frames, phi_frames, steps=None):
    rho_frames, phi_frames = np.asarray(rho_frames), np.asarray(phi_frames)
    ng = rho_frames.shape[1]
    steps = np.arange(len(rho_frames)) if steps is None else np.asarray(steps)
    header = ["step"] + [f"rho_{i}" for i in range(ng)] + [f"phi_{i}" for i in range(ng)]
    return _write_table(path, header, [steps, *rho_frames.T, *phi_frames.T], int_cols=1)


def read_frames(path):
    """Return (steps, rho_frames, phi_frames)."""
    header, data = _read_table(path)
    ng = (len(header) - 1) // 2
    if header[0] != "step" or header[1] != "rho_0" or header[1 + ng] != "phi_0":
        raise ValueError(f"{path} is not a frame file")
    return data[:, 0].astype(int), data[:, 1:1 + ng], data[:, 1 + ng:]


DIAG_HEADER = ["step", "time", "kinetic", "field", "total", "max_abs_E"]


def write_diagnostics(path, diagnostics):
    arr = diagnostics.as_array()
    return _write_table(path, DIAG_HEADER, list(arr.T), int_cols=1)


def read_diagnostics(path) -> dict:
    header, data = _read_table(path)
    if header != DIAG_HEADER:
        raise ValueError(f"{path} is not a diagnostics file")
    return {h: data[:, i] for i, h in enumerate(header)}


def write_phase_space(path, particles):
    return _write_table(path, ["x", "v", "beam_id"], [particles.x, particles.v, particles.beam])


def read_phase_space(path) -> dict:
    header, data = _read_table(path)
    if header != ["x", "v", "beam_id"]:
        raise ValueError(f"{path} is not a phase-space file")
    return {"x": data[:, 0], "v": data[:, 1], "beam_id": data[:, 2].astype(int)}


COMPARISON_HEADER = ["step", "mrae_E", "baseline_maxE", "hybrid_maxE"]


def write_comparison(path, table):
    return _write_table(path, COMPARISON_HEADER, list(np.asarray(table).T), int_cols=1)


def read_comparison(path) -> dict:
    header, data = _read_table(path)
    if header != COMPARISON_HEADER:
        raise ValueError(f"{path} is not a comparison file")
    return {h: data[:, i] for i, h in enumerate(header)}


def write_series(path, header, columns, int_cols=1):
    return _write_table(path, header, columns, int_cols=int_cols)


def read_series(path) -> dict:
    header, data = _read_table(path)
    return {h: data[:, i] for i, h in enumerate(header)}


def write_loss_history(path, history, wall_ms=None):
    epochs = np.arange(len(history))
    wall = np.zeros(len(history)) if wall_ms is None else wall_ms
    return _write_table(path, ["epoch", "loss", "wall_ms"], [epochs, history, wall], int_cols=1)


def spec_to_dict(spec: ModelSpec) -> dict:
    a = spec.ansatz
    return {
        "kind": spec.kind,
        "width": spec.width,
        "ansatz": None if a is None else {"kind": a.kind, "n_qubits": a.n_qubits, "n_layers": a.n_layers},
    }


def spec_from_dict(d: dict) -> ModelSpec:
    a = d.get("ansatz")
    ansatz = None if a is None else AnsatzSpec(a["kind"], a["n_qubits"], a["n_layers"])
    return ModelSpec(d["kind"], ansatz, d.get("width", 64))


def save_checkpoint(path, spec: ModelSpec, params, seed: int, **meta):
    """JSON checkpoint: model spec, seed, metadata and the flat parameters."""
    params = np.asarray(params, float)
    doc = {
        "format": CHECKPOINT_FORMAT,
        "model": spec_to_dict(spec),
        "seed": int(seed),
        "param_count": int(params.size),
        "param_order": "layers in stack order; linear = weights[out][in] row-major, then bias",
        "meta": meta,
        "params": [float(p) for p in params],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1))
    return path


def load_checkpoint(path):
    """Return (spec, params, document)."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a checkpoint")
    spec = spec_from_dict(doc["model"])
    params = np.array(doc["params"], dtype=float)
    if params.size != param_count(spec) or params.size != doc["param_count"]:
        raise ValueError(f"checkpoint {path}: parameter count does not match its model spec")
    return spec, params, doc


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")
