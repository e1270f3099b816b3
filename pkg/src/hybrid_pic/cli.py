"""Command-line entry point: generate, train, simulate, evaluate.

Each command reads an optional YAML/JSON config file, applies ``key=value``
overrides from the command line, and writes its outputs plus a
``manifest.json`` into ``--out-dir``. Exit codes: 0 success, 2 usage error,
1 runtime failure.
"""
from __future__ import annotations

import argparse
import itertools
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import io
from .hybrid import SurrogateSolver, calibrate_scale, predict_fields, run_hybrid
from .metrics import (
    MRAE_DEFINITION,
    MetricError,
    default_velocity_range,
    energy_distance,
    mrae_series,
    summarize_errors,
    velocity_histogram,
    wilcoxon_signed_rank,
)
from .nn import ModelSpec, param_count
from .pic import BaselineSolver, ConfigError, SimConfig, run_simulation
from .qsim import AnsatzSpec
from .training import (
    TrainConfig,
    TrainingError,
    concat_datasets,
    dataset_from_frames,
    stride_indices,
    train_parallel,
)

log = logging.getLogger("hybrid_pic")

DEFAULT_VELOCITIES = {"two_stream": [0.03, 0.05, 0.1], "thermal": [0.01, 0.03, 0.07, 0.1]}

DEFAULTS = {
    # simulation
    "scenario": "two_stream",
    "v0": 0.07,
    "vth": 0.05,
    "velocities": None,
    "length": 1.0,
    "grid": 64,
    "ppc": 200,
    "dt": 0.05,
    "steps": 1000,
    "seed": 0,
    "perturbation": 1e-3,
    "perturbation_mode": 1,
    "loading": "quiet",
    # dataset
    "samples": 500,
    "dataset": None,
    # model
    "model": "cqc",
    "ansatz": "sel",
    "nl": 6,
    "qubits": 6,
    # training
    "loss": "data",
    "lambda": 0.0,
    "nd": 64,
    "lr": 0.001,
    "epochs": 2000,
    "workers": 1,
    "residual_convention": "physical",
    "local_step": False,
    # simulate
    "solver": "baseline",
    "rescale": "calibrated",
    "pair_baseline": False,
    # evaluate
    "inputs": [],
    "metric": "offline",
    "bins": 50,
    # paths
    "out_dir": ".",
}


class UsageError(Exception):
    pass


def parse_overrides(tokens) -> dict:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise UsageError(f"expected key=value, got {tok!r}")
        key, val = tok.split("=", 1)
        out[key.strip().replace("-", "_")] = yaml.safe_load(val) if val != "" else None
    return out


def resolve_config(file_cfg: dict, overrides: dict) -> dict:
    """Merge defaults, file values and overrides; unknown keys are an error."""
    cfg = dict(DEFAULTS)
    for source in (file_cfg or {}, overrides):
        for key, val in source.items():
            if key not in DEFAULTS:
                raise UsageError(f"unknown config key {key!r}")
            cfg[key] = val
    if cfg["velocities"] is None:
        cfg["velocities"] = list(DEFAULT_VELOCITIES.get(cfg["scenario"], []))
    return cfg


def load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise UsageError(f"config {path} must be a mapping")
    # a manifest's resolved config can be fed back in
    return doc.get("config", doc) if "command" in doc else doc


def sim_config(cfg: dict, drift=None) -> SimConfig:
    scenario = cfg["scenario"]
    if drift is None:
        drift = cfg["v0"] if scenario == "two_stream" else cfg["vth"]
    kw = {"v0": float(drift), "vth": 0.0} if scenario == "two_stream" else {"v0": 0.0, "vth": float(drift)}
    return SimConfig(
        length=float(cfg["length"]), n_cells=int(cfg["grid"]), particles_per_cell=int(cfg["ppc"]),
        dt=float(cfg["dt"]), n_steps=int(cfg["steps"]), scenario=scenario,
        perturbation_amplitude=float(cfg["perturbation"]),
        perturbation_mode=int(cfg["perturbation_mode"]), loading=cfg["loading"],
        seed=int(cfg["seed"]), **kw,
    )


def model_spec(cfg: dict) -> ModelSpec:
    kind = str(cfg["model"]).lower()
    if kind == "ccc":
        return ModelSpec("ccc", width=2 ** int(cfg["qubits"]))
    ansatz = AnsatzSpec(str(cfg["ansatz"]), int(cfg["qubits"]), int(cfg["nl"]))
    return ModelSpec(kind, ansatz, ansatz.dim)


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        loss=cfg["loss"], lam=float(cfg["lambda"]), lr=float(cfg["lr"]), epochs=int(cfg["epochs"]),
        n_data=int(cfg["nd"]), workers=int(cfg["workers"]), seed=int(cfg["seed"]),
        residual_convention=cfg["residual_convention"], local_step=bool(cfg["local_step"]),
    )


def write_manifest(out_dir: Path, command: str, cfg: dict, inputs, outputs, extra=None):
    doc = {
        "command": command,
        "config": cfg,
        "seeds": {"seed": cfg["seed"]},
        "inputs": {str(p): io.sha256(p) for p in inputs},
        "outputs": {str(Path(p).name): io.sha256(p) for p in outputs},
        "tool_version": __version__,
    }
    if extra:
        doc.update(extra)
    return io.write_json(out_dir / "manifest.json", doc)


def _velocity_label(v: float) -> str:
    return f"{float(v):g}"


def cmd_generate(cfg: dict) -> Path:
    velocities = cfg["velocities"]
    if not velocities:
        raise UsageError("velocity list is empty")
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    files, parts, warnings = [], [], []
    for v in velocities:
        sc = sim_config(cfg, v)
        res = run_simulation(sc, BaselineSolver(sc), record_frames=True)
        path = io.write_frames(out / f"frames_{sc.scenario}_{_velocity_label(v)}.csv",
                               res.rho_frames, res.phi_frames)
        files.append(path)
        part = dataset_from_frames(res.rho_frames, res.phi_frames, sc.dx, v, warnings)
        part.source = [(i, step) for _, step in part.source for i in [len(files) - 1]]
        parts.append(part)
    pooled = concat_datasets(parts)
    idx = stride_indices(len(pooled), int(cfg["samples"]))
    selected = [list(pooled.source[i]) for i in idx]
    dataset_doc = {
        "scenario": cfg["scenario"],
        "velocities": [float(v) for v in velocities],
        "frame_files": [p.name for p in files],
        "frames_total": len(pooled),
        "samples_total": int(cfg["samples"]),
        "selection": "uniform stride over pooled non-degenerate frames",
        "selected": selected,
        "warnings": warnings,
        "seed": cfg["seed"],
        "dx": sim_config(cfg, velocities[0]).dx,
    }
    ds_path = io.write_json(out / "dataset.json", dataset_doc)
    write_manifest(out, "generate", cfg, [], files + [ds_path])
    return ds_path


def load_dataset(manifest_path):
    """Rebuild a training set from a dataset manifest and its frame files."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"dataset manifest {manifest_path} not found")
    doc = io.read_json(manifest_path)
    frames = [io.read_frames(manifest_path.parent / name) for name in doc["frame_files"]]
    parts = []
    for i, (_, rho, phi) in enumerate(frames):
        part = dataset_from_frames(rho, phi, doc["dx"], doc["velocities"][i])
        part.source = [(i, step) for _, step in part.source]
        parts.append(part)
    pooled = concat_datasets(parts)
    lookup = {tuple(s): k for k, s in enumerate(pooled.source)}
    idx = [lookup[tuple(s)] for s in doc["selected"]]
    data = pooled.subset(idx)
    data.source = [(doc["velocities"][f], step) for f, step in data.source]
    data.provenance = {k: doc[k] for k in ("scenario", "velocities", "samples_total")}
    return data


def cmd_train(cfg: dict) -> Path:
    out = Path(cfg["out_dir"])
    ds_path = Path(cfg["dataset"]) if cfg["dataset"] else out / "dataset.json"
    data = load_dataset(ds_path)
    spec = model_spec(cfg)
    tcfg = train_config(cfg)
    res = train_parallel(spec, data, tcfg)
    ckpt = io.save_checkpoint(
        out / "checkpoint.json", spec, res.params, tcfg.seed,
        scale=calibrate_scale(data), loss=tcfg.loss, lam=tcfg.lam, n_data=tcfg.n_data,
        epochs=tcfg.epochs, lr=tcfg.lr, workers=tcfg.workers,
        residual_convention=tcfg.residual_convention, local_step=tcfg.local_step, dataset=str(ds_path),
        final_loss=res.history[-1] if res.history else None,
    )
    log_path = io.write_loss_history(out / "train_log.csv", res.history, res.wall_ms)
    write_manifest(out, "train", cfg, [ds_path], [ckpt, log_path],
                   {"param_count": param_count(spec), "nondeterministic_columns": {"train_log.csv": ["wall_ms"]}})
    return ckpt


def _make_solver(cfg, sc, baseline):
    solver = str(cfg["solver"])
    if solver == "baseline":
        return BaselineSolver(sc), None
    if not solver.startswith("model:"):
        raise UsageError(f"unknown solver {solver!r}; use 'baseline' or 'model:<checkpoint>'")
    path = Path(solver[len("model:"):])
    spec, params, doc = io.load_checkpoint(path)
    if spec.width != sc.n_cells:
        raise ValueError(f"checkpoint width {spec.width} does not match grid {sc.n_cells}")
    if cfg["rescale"] == "oracle":
        return SurrogateSolver.paired(spec, params, baseline), doc
    return SurrogateSolver(spec, params, doc["meta"]["scale"], "calibrated"), doc


def cmd_simulate(cfg: dict) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    sc = sim_config(cfg)
    if cfg["rescale"] not in ("calibrated", "oracle"):
        raise UsageError(f"unknown rescale mode {cfg['rescale']!r}")
    solver_name = str(cfg["solver"])
    if solver_name != "baseline" and not solver_name.startswith("model:"):
        raise UsageError(f"unknown solver {solver_name!r}; use 'baseline' or 'model:<checkpoint>'")
    need_base = bool(cfg["pair_baseline"]) or cfg["rescale"] == "oracle"
    baseline = run_simulation(sc, BaselineSolver(sc), record_frames=True,
                              snapshot_steps=[sc.n_steps]) if need_base and solver_name != "baseline" else None
    solver, ckpt_doc = _make_solver(cfg, sc, baseline)
    hyb = run_hybrid(sc, solver, baseline)
    outputs = [
        io.write_diagnostics(out / "diagnostics.csv", hyb.run.diagnostics),
        io.write_phase_space(out / "phase_space.csv", hyb.run.particles),
    ]
    inputs = []
    if ckpt_doc is not None:
        inputs.append(Path(solver_name[len("model:"):]))
    if baseline is not None:
        outputs.append(io.write_diagnostics(out / "baseline_diagnostics.csv", baseline.diagnostics))
        outputs.append(io.write_phase_space(out / "baseline_phase_space.csv", baseline.particles))
        outputs.append(io.write_comparison(out / "comparison.csv", hyb.comparison_table()))
        offline = mrae_series(predict_fields(solver, baseline.rho_frames, sc), baseline.efield_frames)
        outputs.append(io.write_series(out / "prediction_errors.csv", ["step", "mrae_E"],
                                       [np.arange(offline.size), offline]))
    extra = {
        "scenario": sc.scenario, "drift": sc.drift,
        "model": None if ckpt_doc is None else ckpt_doc["model"],
        "training": None if ckpt_doc is None else ckpt_doc["meta"],
        "rescale": None if ckpt_doc is None else cfg["rescale"],
    }
    return write_manifest(out, "simulate", cfg, inputs, outputs, extra)


def _run_label(run_dir: Path, doc: dict) -> str:
    m = doc.get("model")
    if not m:
        return run_dir.name
    t = doc.get("training") or {}
    a = m.get("ansatz")
    tag = m["kind"] if a is None else f"{m['kind']}-{a['kind']}-NL{a['n_layers']}"
    return f"{tag}-{t.get('loss', '?')}-nd{t.get('n_data', '?')}"


def cmd_evaluate(cfg: dict) -> Path:
    inputs = [Path(p) for p in (cfg["inputs"] or [])]
    if not inputs:
        raise UsageError("evaluate needs inputs=[run_dir, ...]")
    metric_file = {"offline": "prediction_errors.csv", "inloop": "comparison.csv"}.get(cfg["metric"])
    if metric_file is None:
        raise UsageError(f"unknown metric {cfg['metric']!r}")
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    rows, series, velocities, used = [], {}, {}, []
    for run_dir in inputs:
        for name in (metric_file, "phase_space.csv", "baseline_phase_space.csv", "manifest.json"):
            if not (run_dir / name).exists():
                raise FileNotFoundError(f"{run_dir / name} missing; run simulate with pair_baseline=true")
        doc = io.read_json(run_dir / "manifest.json")
        label = _run_label(run_dir, doc)
        if label in series:
            label = f"{label}@{run_dir}"
        errs = io.read_series(run_dir / metric_file)["mrae_E"]
        ps = io.read_phase_space(run_dir / "phase_space.csv")
        base_ps = io.read_phase_space(run_dir / "baseline_phase_space.csv")
        summary = summarize_errors(errs)
        m = doc.get("model") or {}
        a = m.get("ansatz") or {}
        t = doc.get("training") or {}
        rows.append({
            "label": label, "model": m.get("kind", ""), "ansatz": a.get("kind", ""),
            "nl": a.get("n_layers", ""), "loss": t.get("loss", ""), "lambda": t.get("lam", ""),
            "nd": t.get("n_data", ""), "seed": doc["config"].get("seed"),
            "median": summary.median, "q1": summary.q1, "q3": summary.q3,
            "n_outliers": len(summary.outliers),
            "energy_distance": energy_distance(ps["v"], base_ps["v"]),
        })
        series[label] = errs
        velocities[label] = ps["v"]
        velocities.setdefault("baseline", base_ps["v"])
        used.append(run_dir / metric_file)

    tests = []
    for a, b in itertools.combinations(series, 2):
        n = min(series[a].size, series[b].size)
        diffs = series[a][:n] - series[b][:n]
        try:
            stat, p = wilcoxon_signed_rank(diffs)
        except MetricError:
            stat, p = 0.0, 1.0
        tests.append({"a": a, "b": b, "statistic": stat, "p_value": p,
                      "median_a": float(np.median(series[a])), "median_b": float(np.median(series[b]))})

    cols = list(rows[0].keys())
    report = out / "report.csv"
    with open(report, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r[c]) for c in cols) + "\n")
    wil = out / "wilcoxon.csv"
    with open(wil, "w") as fh:
        fh.write("a,b,statistic,p_value,median_a,median_b\n")
        for t in tests:
            fh.write(",".join(_fmt(t[c]) for c in ("a", "b", "statistic", "p_value", "median_a", "median_b")) + "\n")

    drift = float(cfg["v0"] if cfg["scenario"] == "two_stream" else cfg["vth"])
    vrange = default_velocity_range(cfg["scenario"], drift)
    hist_cols, header = [], []
    for label, v in velocities.items():
        edges, counts, density = velocity_histogram(v, int(cfg["bins"]), vrange)
        if not hist_cols:
            hist_cols += [edges[:-1], edges[1:]]
            header += ["bin_lo", "bin_hi"]
        hist_cols.append(density)
        header.append(f"density[{label}]")
    hist = io.write_series(out / "histograms.csv", header, hist_cols, int_cols=0)

    summary_doc = {
        "mrae_definition": MRAE_DEFINITION,
        "metric": cfg["metric"],
        "runs": rows,
        "wilcoxon": tests,
        "histogram_range": list(vrange),
    }
    js = io.write_json(out / "report.json", summary_doc)
    return write_manifest(out, "evaluate", cfg, used, [report, wil, hist, js])


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "simulate": cmd_simulate, "evaluate": cmd_evaluate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybrid-pic", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("overrides", nargs="*", help="key=value config overrides")
        p.add_argument("--config", help="YAML or JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out-dir")
        p.add_argument("--pair-baseline", action="store_true")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = parse_overrides(args.overrides)
        for flag in ("seed", "workers", "out_dir"):
            if getattr(args, flag) is not None:
                overrides[flag] = getattr(args, flag)
        if args.pair_baseline:
            overrides["pair_baseline"] = True
        cfg = resolve_config(load_config_file(args.config), overrides)
        COMMANDS[args.command](cfg)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, MetricError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
