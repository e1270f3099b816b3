"""Trained networks as the field solver inside the PIC cycle."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .metrics import mrae_series
from .nn import ModelSpec, model_forward, param_count
from .pic import (
    PoissonSolver,
    SimConfig,
    SimulationResult,
    electric_field,
    run_simulation,
)
from .training import Dataset

ZERO_RHO = 1e-14
RESCALE_MODES = ("calibrated", "oracle")


class CalibrationError(ValueError):
    pass


def calibrate_scale(data: Dataset) -> float:
    """Mean of max|phi| / max|rho| over samples with nonzero density."""
    s_rho = np.asarray(data.s_rho, float)
    keep = s_rho > 0
    if not np.any(keep):
        raise CalibrationError("no sample with nonzero charge density")
    return float(np.mean(np.asarray(data.s_phi, float)[keep] / s_rho[keep]))


class SurrogateSolver:
    """Network-backed Poisson solver.

    The density is divided by its max magnitude ``s`` before the network.
    The normalized output is scaled back by ``c * s`` (``calibrated``) or by
    the reference potential's max magnitude for the current step
    (``oracle``, taken from a paired baseline run).
    """

    def __init__(self, spec: ModelSpec, params, scale: float = 1.0, mode: str = "calibrated",
                 oracle_scales: Optional[np.ndarray] = None):
        params = np.asarray(params, float)
        if params.size != param_count(spec):
            raise ValueError(f"{spec.kind} needs {param_count(spec)} parameters, got {params.size}")
        if mode not in RESCALE_MODES:
            raise ValueError(f"unknown rescale mode {mode!r}")
        if mode == "calibrated" and not scale > 0:
            raise ValueError("calibration constant must be positive")
        if mode == "oracle" and oracle_scales is None:
            raise ValueError("oracle mode needs per-step reference scales")
        self.spec = spec
        self.params = params
        self.scale = float(scale)
        self.mode = mode
        self.oracle_scales = None if oracle_scales is None else np.asarray(oracle_scales, float)

    @classmethod
    def paired(cls, spec, params, baseline: SimulationResult) -> "SurrogateSolver":
        """Oracle-mode solver using the potentials recorded by a baseline run."""
        if baseline.phi_frames is None:
            raise ValueError("baseline run did not record frames")
        return cls(spec, params, mode="oracle", oracle_scales=np.abs(baseline.phi_frames).max(axis=1))

    def normalized(self, rho: np.ndarray) -> np.ndarray:
        return model_forward(self.spec, self.params, rho)

    def __call__(self, rho: np.ndarray, step: int = 0) -> np.ndarray:
        return model_poisson_solve(rho, self, step)


def model_poisson_solve(rho: np.ndarray, solver: SurrogateSolver, step: int = 0) -> np.ndarray:
    rho = np.asarray(rho, float)
    s = float(np.max(np.abs(rho)))
    if s < ZERO_RHO:
        return np.zeros_like(rho)
    out = solver.normalized(rho / s)
    if solver.mode == "calibrated":
        return out * (solver.scale * s)
    scales = solver.oracle_scales
    return out * scales[min(step, scales.size - 1)]


def predict_fields(solver: PoissonSolver, rho_frames: np.ndarray, config: SimConfig) -> np.ndarray:
    """Fields the solver would produce for recorded densities, step by step."""
    return np.array([electric_field(solver(r, k), config) for k, r in enumerate(rho_frames)])


@dataclass
class HybridResult:
    run: SimulationResult
    mrae_E: Optional[np.ndarray] = None
    baseline_maxE: Optional[np.ndarray] = None
    hybrid_maxE: Optional[np.ndarray] = None

    def comparison_table(self) -> np.ndarray:
        """Columns: step, mrae_E, baseline_maxE, hybrid_maxE."""
        steps = np.arange(self.mrae_E.size)
        return np.column_stack([steps, self.mrae_E, self.baseline_maxE, self.hybrid_maxE])


def run_hybrid(config: SimConfig, solver: PoissonSolver, baseline: Optional[SimulationResult] = None,
               snapshot_steps=()) -> HybridResult:
    """Run the PIC loop with ``solver``; compare fields step by step against ``baseline``."""
    run = run_simulation(config, solver, record_frames=True, snapshot_steps=snapshot_steps)
    if baseline is None or baseline.efield_frames is None:
        return HybridResult(run)
    n = min(len(run.efield_frames), len(baseline.efield_frames))
    e_h, e_b = run.efield_frames[:n], baseline.efield_frames[:n]
    return HybridResult(
        run,
        mrae_E=mrae_series(e_h, e_b),
        baseline_maxE=np.abs(e_b).max(axis=1),
        hybrid_maxE=np.abs(e_h).max(axis=1),
    )


def offline_errors(spec: ModelSpec, params, baseline: SimulationResult, mode: str = "oracle",
                   scale: float = 1.0) -> np.ndarray:
    """Per-step MRAE of E when the model sees each recorded baseline density.

    Teacher-forced: every step starts from the baseline state, so errors do
    not compound. Batched equivalent of ``predict_fields`` with a
    ``SurrogateSolver``.
    """
    rho = np.asarray(baseline.rho_frames, float)
    s = np.abs(rho).max(axis=1, keepdims=True)
    live = s[:, 0] >= ZERO_RHO
    phi = np.zeros_like(rho)
    out = model_forward(spec, np.asarray(params, float), rho[live] / s[live])
    if mode == "oracle":
        phi[live] = out * np.abs(baseline.phi_frames[live]).max(axis=1, keepdims=True)
    elif mode == "calibrated":
        phi[live] = out * (scale * s[live])
    else:
        raise ValueError(f"unknown rescale mode {mode!r}")
    efield = np.array([electric_field(p, baseline.config) for p in phi])
    return mrae_series(efield, baseline.efield_frames)
