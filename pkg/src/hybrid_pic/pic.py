"""1D electrostatic particle-in-cell engine on a periodic domain.

Dimensionless units: electron charge-to-mass ratio -1, mean electron density
1 and plasma frequency 1. Electrons are neutralized by a uniform ion
background added at deposition.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

SCENARIOS = ("two_stream", "thermal")
LOADINGS = ("quiet", "random")


class ConfigError(ValueError):
    """Invalid simulation or training configuration."""


class SolvabilityError(ValueError):
    """Charge density is not neutral, so the periodic Poisson problem has no solution."""


@dataclass(frozen=True)
class SimConfig:
    length: float = 1.0
    n_cells: int = 64
    particles_per_cell: int = 200
    dt: float = 0.05
    n_steps: int = 1000
    scenario: str = "two_stream"
    v0: float = 0.0
    vth: float = 0.0
    # amplitude is a fraction of the domain length
    perturbation_amplitude: float = 1e-3
    perturbation_mode: int = 1
    loading: str = "quiet"
    seed: int = 0

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigError(f"length must be positive, got {self.length}")
        if self.n_cells < 4:
            raise ConfigError(f"n_cells must be >= 4, got {self.n_cells}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ConfigError(f"n_steps must be >= 0, got {self.n_steps}")
        if self.particles_per_cell < 1:
            raise ConfigError("particles_per_cell must be >= 1")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.loading not in LOADINGS:
            raise ConfigError(f"unknown loading {self.loading!r}")
        if self.scenario == "two_stream" and self.vth != 0.0:
            raise ConfigError("two_stream scenario takes v0 only; vth must be 0")
        if self.scenario == "thermal" and self.v0 != 0.0:
            raise ConfigError("thermal scenario takes vth only; v0 must be 0")
        if self.vth < 0:
            raise ConfigError("vth must be non-negative")

    @property
    def dx(self) -> float:
        return self.length / self.n_cells

    @property
    def n_particles(self) -> int:
        return self.n_cells * self.particles_per_cell

    @property
    def drift(self) -> float:
        """The scenario's characteristic speed (v0 or vth)."""
        return self.v0 if self.scenario == "two_stream" else self.vth

    def grid(self) -> np.ndarray:
        return np.arange(self.n_cells) * self.dx


@dataclass
class ParticleEnsemble:
    x: np.ndarray
    v: np.ndarray
    q: float
    m: float
    beam: np.ndarray

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def qm(self) -> float:
        return self.q / self.m

    def copy(self) -> "ParticleEnsemble":
        return replace(self, x=self.x.copy(), v=self.v.copy(), beam=self.beam.copy())


class PoissonSolver(Protocol):
    def __call__(self, rho: np.ndarray, step: int) -> np.ndarray: ...


def init_particles(config: SimConfig) -> ParticleEnsemble:
    """Load two half-populations (beams) on a periodic domain.

    ``two_stream`` gives the beams velocities ``+v0`` and ``-v0``; ``thermal``
    draws every velocity from N(0, vth). Quiet loading places each beam's
    particles equispaced and then displaces them by
    ``A * L * sin(2 pi m x / L)``; random loading draws uniform positions.
    """
    n = config.n_particles
    L = config.length
    rng = np.random.default_rng(config.seed)
    n_a = n // 2
    n_b = n - n_a
    if config.loading == "quiet":
        x = np.concatenate([np.arange(n_a) * (L / n_a), np.arange(n_b) * (L / n_b)])
    else:
        x = rng.uniform(0.0, L, n)
    amp = config.perturbation_amplitude * L
    if amp != 0.0:
        x = x + amp * np.sin(2.0 * np.pi * config.perturbation_mode * x / L)
    x = np.mod(x, L)
    # mod can return L for tiny negative inputs
    x[x >= L] = 0.0
    beam = np.concatenate([np.zeros(n_a, dtype=np.int8), np.ones(n_b, dtype=np.int8)])
    if config.scenario == "two_stream":
        v = np.where(beam == 0, config.v0, -config.v0).astype(float)
    else:
        v = rng.normal(0.0, config.vth, n) if config.vth > 0 else np.zeros(n)
    # total electron mass L at unit density; |q/m| = 1
    return ParticleEnsemble(x=x, v=v, q=-L / n, m=L / n, beam=beam)


def _cic_weights(x: np.ndarray, dx: float, n_cells: int):
    s = x / dx
    i = np.floor(s).astype(np.int64)
    w = s - i
    # guard x/dx rounding up to exactly n_cells
    i = np.mod(i, n_cells)
    return i, (i + 1) % n_cells, w


def deposit_charge(particles: ParticleEnsemble, config: SimConfig) -> np.ndarray:
    """Cloud-in-cell charge density with the neutralizing ion background."""
    x = particles.x
    L, dx, ng = config.length, config.dx, config.n_cells
    if x.size and (x.min() < 0.0 or x.max() >= L):
        raise AssertionError("particle position outside [0, L)")
    i, ip, w = _cic_weights(x, dx, ng)
    rho = np.bincount(i, weights=1.0 - w, minlength=ng)
    rho += np.bincount(ip, weights=w, minlength=ng)
    rho *= particles.q / dx
    rho += -particles.q * particles.n / L
    return rho


def laplacian_eigenvalues(n_cells: int, dx: float) -> np.ndarray:
    """Eigenvalues of the 3-point periodic Laplacian on the rfft modes."""
    k = np.arange(n_cells // 2 + 1)
    return -(2.0 / dx * np.sin(np.pi * k / n_cells)) ** 2


def discrete_laplacian(f: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(f, -1) - 2.0 * f + np.roll(f, 1)) / dx**2


def solve_poisson(rho: np.ndarray, config: SimConfig) -> np.ndarray:
    """Solve lap(phi) = -rho for the periodic 3-point Laplacian, sum(phi) = 0."""
    rho = np.asarray(rho, dtype=float)
    if abs(rho.mean()) > 1e-8:
        raise SolvabilityError(f"mean charge density {rho.mean():.3e} is not zero")
    lam = laplacian_eigenvalues(rho.size, config.dx)
    rho_k = np.fft.rfft(rho)
    phi_k = np.zeros_like(rho_k)
    phi_k[1:] = -rho_k[1:] / lam[1:]
    return np.fft.irfft(phi_k, n=rho.size)


def electric_field(phi: np.ndarray, config: SimConfig) -> np.ndarray:
    return -(np.roll(phi, -1) - np.roll(phi, 1)) / (2.0 * config.dx)


def gather_field(efield: np.ndarray, particles: ParticleEnsemble, config: SimConfig) -> np.ndarray:
    i, ip, w = _cic_weights(particles.x, config.dx, config.n_cells)
    return (1.0 - w) * efield[i] + w * efield[ip]


def push_particles(
    particles: ParticleEnsemble, e_part: np.ndarray, dt: float, length: float
) -> ParticleEnsemble:
    """Leapfrog kick then drift; velocities live on half steps."""
    v = particles.v + particles.qm * e_part * dt
    x = np.mod(particles.x + v * dt, length)
    x[x >= length] = 0.0
    return replace(particles, x=x, v=v)


class BaselineSolver:
    """Spectral Poisson solve, the reference field solver."""

    def __init__(self, config: SimConfig):
        self.config = config

    def __call__(self, rho: np.ndarray, step: int = 0) -> np.ndarray:
        return solve_poisson(rho, self.config)


@dataclass
class Diagnostics:
    step: list = field(default_factory=list)
    time: list = field(default_factory=list)
    kinetic: list = field(default_factory=list)
    field_energy: list = field(default_factory=list)
    max_abs_E: list = field(default_factory=list)

    def append(self, step, time, kinetic, field_energy, max_abs_e):
        self.step.append(int(step))
        self.time.append(float(time))
        self.kinetic.append(float(kinetic))
        self.field_energy.append(float(field_energy))
        self.max_abs_E.append(float(max_abs_e))

    @property
    def total(self) -> np.ndarray:
        return np.asarray(self.kinetic) + np.asarray(self.field_energy)

    def __len__(self):
        return len(self.step)

    def as_array(self) -> np.ndarray:
        """Columns: step, time, kinetic, field, total, max_abs_E."""
        return np.column_stack(
            [self.step, self.time, self.kinetic, self.field_energy, self.total, self.max_abs_E]
        )


@dataclass
class PICState:
    particles: ParticleEnsemble
    step: int = 0

    def time(self, config: SimConfig) -> float:
        return self.step * config.dt


@dataclass
class StepResult:
    state: PICState
    rho: np.ndarray
    phi: np.ndarray
    efield: np.ndarray
    kinetic: float
    field_energy: float


def field_energy(efield: np.ndarray, dx: float) -> float:
    return 0.5 * float(np.sum(efield**2)) * dx


def compute_field(particles: ParticleEnsemble, config: SimConfig, solver: PoissonSolver, step: int):
    rho = deposit_charge(particles, config)
    phi = np.asarray(solver(rho, step), dtype=float)
    if phi.shape != rho.shape:
        raise ValueError(f"solver returned shape {phi.shape}, expected {rho.shape}")
    return rho, phi, electric_field(phi, config)


def setup_leapfrog(particles: ParticleEnsemble, config: SimConfig, solver: PoissonSolver) -> PICState:
    """Push velocities back half a step so they sit at t - dt/2."""
    _, _, efield = compute_field(particles, config, solver, 0)
    e_part = gather_field(efield, particles, config)
    v = particles.v - 0.5 * particles.qm * e_part * config.dt
    return PICState(replace(particles, v=v), 0)


def pic_step(state: PICState, solver: PoissonSolver, config: SimConfig) -> StepResult:
    """One cycle: deposit, solve, differentiate, gather, push.

    The kinetic energy reported for step k is the mean of the kinetic energies
    at t_k - dt/2 and t_k + dt/2.
    """
    p = state.particles
    rho, phi, efield = compute_field(p, config, solver, state.step)
    e_part = gather_field(efield, p, config)
    new = push_particles(p, e_part, config.dt, config.length)
    ke = 0.25 * p.m * (np.sum(p.v**2) + np.sum(new.v**2))
    return StepResult(
        state=PICState(new, state.step + 1),
        rho=rho,
        phi=phi,
        efield=efield,
        kinetic=float(ke),
        field_energy=field_energy(efield, config.dx),
    )


@dataclass
class SimulationResult:
    config: SimConfig
    particles: ParticleEnsemble
    diagnostics: Diagnostics
    rho_frames: Optional[np.ndarray] = None
    phi_frames: Optional[np.ndarray] = None
    efield_frames: Optional[np.ndarray] = None
    snapshots: dict = field(default_factory=dict)


def run_simulation(
    config: SimConfig,
    solver: Optional[PoissonSolver] = None,
    record_frames: bool = False,
    snapshot_steps: Sequence[int] = (),
    particles: Optional[ParticleEnsemble] = None,
    callback: Optional[Callable[[StepResult], None]] = None,
) -> SimulationResult:
    """Run ``config.n_steps`` PIC cycles.

    Frames (rho, phi, E) are those computed inside step k, at time k*dt.
    Snapshots hold ``(x, v, beam)`` copies of the particles at the start of
    the listed steps; step ``n_steps`` stores the final state.
    """
    solver = BaselineSolver(config) if solver is None else solver
    particles = init_particles(config) if particles is None else particles
    diag = Diagnostics()
    snapshots = {}
    wanted = set(int(s) for s in snapshot_steps)

    if config.n_steps == 0:
        _, _, efield = compute_field(particles, config, solver, 0)
        ke = 0.5 * particles.m * np.sum(particles.v**2)
        diag.append(0, 0.0, ke, field_energy(efield, config.dx), np.abs(efield).max())
        if 0 in wanted:
            snapshots[0] = particles.copy()
        return SimulationResult(config, particles, diag, snapshots=snapshots)

    state = setup_leapfrog(particles, config, solver)
    ng = config.n_cells
    rho_f = np.empty((config.n_steps, ng)) if record_frames else None
    phi_f = np.empty((config.n_steps, ng)) if record_frames else None
    e_f = np.empty((config.n_steps, ng)) if record_frames else None
    for k in range(config.n_steps):
        if k in wanted:
            snapshots[k] = state.particles.copy()
        res = pic_step(state, solver, config)
        diag.append(k, k * config.dt, res.kinetic, res.field_energy, np.abs(res.efield).max())
        if record_frames:
            rho_f[k], phi_f[k], e_f[k] = res.rho, res.phi, res.efield
        if callback is not None:
            callback(res)
        state = res.state
    if config.n_steps in wanted:
        snapshots[config.n_steps] = state.particles.copy()
    return SimulationResult(config, state.particles, diag, rho_f, phi_f, e_f, snapshots)
