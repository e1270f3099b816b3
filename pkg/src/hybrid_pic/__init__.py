"""Hybrid quantum-classical field solvers for 1D electrostatic particle-in-cell.

Modules:
    pic       baseline PIC loop (CIC deposit, spectral Poisson, leapfrog)
    qsim      statevector simulator with exact adjoint gradients
    nn        CQC / CCC models, forward and backward passes
    training  datasets, data and PINN losses, Adam, data-parallel training
    hybrid    trained networks as the Poisson solver inside the PIC loop
    metrics   MRAE, energy distance, Wilcoxon test, histograms
    io        CSV / JSON file formats
    cli       command-line entry point
"""
__version__ = "0.1.0"

from .pic import SimConfig, BaselineSolver, run_simulation  # noqa: E402
from .qsim import AnsatzSpec  # noqa: E402
from .nn import ModelSpec, param_count, init_params, model_forward  # noqa: E402

__all__ = [
    "SimConfig", "BaselineSolver", "run_simulation",
    "AnsatzSpec", "ModelSpec", "param_count", "init_params", "model_forward",
]
