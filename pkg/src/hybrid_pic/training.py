"""Datasets from baseline PIC runs, losses, Adam, and full-batch training.

Training is full batch: every epoch averages the gradient over all samples
and takes one Adam step. ``train_parallel`` splits the batch into shards that
worker processes differentiate independently; the shard sums are reduced in
a fixed order, so the update matches single-process training up to
floating-point reassociation.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .nn import ModelSpec, init_params, model_backward, model_forward
from .pic import BaselineSolver, ConfigError, SimConfig, discrete_laplacian, run_simulation

log = logging.getLogger(__name__)

ZERO_FRAME = 1e-14
LOSSES = ("data", "pinn")
CONVENTIONS = ("physical", "normalized_index")


class TrainingError(RuntimeError):
    """Training produced a non-finite loss; ``state`` holds the last good values."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


def normalize_frame(frame: np.ndarray):
    """Divide by the max absolute value; returns (normalized, scale)."""
    frame = np.asarray(frame, dtype=float)
    scale = float(np.max(np.abs(frame)))
    if scale < ZERO_FRAME:
        return np.zeros_like(frame), 0.0
    return frame / scale, scale


@dataclass
class Dataset:
    rho: np.ndarray        # (S, Ng) normalized charge density
    phi: np.ndarray        # (S, Ng) normalized potential
    s_rho: np.ndarray      # (S,) max |rho'| per frame
    s_phi: np.ndarray      # (S,) max |phi'| per frame
    source: list           # (drift value, step) per sample
    dx: float = 1.0 / 64
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return self.rho.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(
            self,
            rho=self.rho[idx], phi=self.phi[idx],
            s_rho=self.s_rho[idx], s_phi=self.s_phi[idx],
            source=[self.source[i] for i in idx],
        )

    def raw_rho(self) -> np.ndarray:
        return self.rho * self.s_rho[:, None]

    def raw_phi(self) -> np.ndarray:
        return self.phi * self.s_phi[:, None]


def dataset_from_frames(rho_frames, phi_frames, dx: float, drift: float = 0.0, warnings=None) -> Dataset:
    rho_n, phi_n, s_rho, s_phi, source = [], [], [], [], []
    for k, (r, p) in enumerate(zip(rho_frames, phi_frames)):
        rn, sr = normalize_frame(r)
        pn, sp = normalize_frame(p)
        if sr == 0.0 or sp == 0.0:
            msg = f"skipping all-zero frame (drift={drift}, step={k})"
            log.warning(msg)
            if warnings is not None:
                warnings.append(msg)
            continue
        rho_n.append(rn)
        phi_n.append(pn)
        s_rho.append(sr)
        s_phi.append(sp)
        source.append((float(drift), k))
    ng = np.shape(rho_frames)[-1]
    return Dataset(
        rho=np.array(rho_n).reshape(-1, ng), phi=np.array(phi_n).reshape(-1, ng),
        s_rho=np.array(s_rho), s_phi=np.array(s_phi), source=source, dx=dx,
    )


def concat_datasets(parts: Sequence[Dataset]) -> Dataset:
    return Dataset(
        rho=np.concatenate([p.rho for p in parts]),
        phi=np.concatenate([p.phi for p in parts]),
        s_rho=np.concatenate([p.s_rho for p in parts]),
        s_phi=np.concatenate([p.s_phi for p in parts]),
        source=[s for p in parts for s in p.source],
        dx=parts[0].dx,
    )


def stride_indices(total: int, samples: int) -> np.ndarray:
    """``samples`` indices spread by uniform stride over ``range(total)``."""
    if samples > total:
        raise ConfigError(f"requested {samples} samples from {total} frames")
    return (np.arange(samples) * total) // samples


def generate_dataset(
    velocities: Sequence[float],
    scenario: str = "two_stream",
    samples_total: int = 500,
    base: Optional[SimConfig] = None,
    return_runs: bool = False,
):
    """Run the baseline PIC per velocity and pool the normalized frames.

    ``velocities`` are v0 values for ``two_stream`` and vth values for
    ``thermal``. Samples are picked by uniform stride over all retained frames.
    """
    if len(velocities) == 0:
        raise ConfigError("velocity list is empty")
    base = base or SimConfig()
    warnings: list = []
    parts, runs = [], []
    for v in velocities:
        kw = {"v0": float(v), "vth": 0.0} if scenario == "two_stream" else {"vth": float(v), "v0": 0.0}
        cfg = replace(base, scenario=scenario, **kw)
        res = run_simulation(cfg, BaselineSolver(cfg), record_frames=True)
        runs.append(res)
        parts.append(dataset_from_frames(res.rho_frames, res.phi_frames, cfg.dx, v, warnings))
    pooled = concat_datasets(parts)
    if len(pooled) == 0:
        raise ConfigError("no usable frames")
    data = pooled.subset(stride_indices(len(pooled), samples_total))
    data.provenance = {
        "scenario": scenario,
        "velocities": [float(v) for v in velocities],
        "samples_total": samples_total,
        "frames_total": len(pooled),
        "warnings": warnings,
        "base_config": {k: getattr(base, k) for k in base.__dataclass_fields__},
    }
    return (data, runs) if return_runs else data


def data_loss(phi_pred, phi_true) -> float:
    phi_pred, phi_true = np.asarray(phi_pred), np.asarray(phi_true)
    return float(np.mean(np.abs(phi_true - phi_pred)))


def fd_second_derivative(phi: np.ndarray, dx: float) -> np.ndarray:
    """Periodic 3-point second derivative along the last axis."""
    phi = np.asarray(phi, dtype=float)
    return (np.roll(phi, -1, axis=-1) - 2.0 * phi + np.roll(phi, 1, axis=-1)) / dx**2


def sparse_select(n_data: int, n_grid: int = 64) -> np.ndarray:
    if not 1 <= n_data <= n_grid:
        raise ConfigError(f"N_d must be in [1, {n_grid}], got {n_data}")
    return np.round(np.arange(n_data) * n_grid / n_data).astype(int)


def residual_scale(s_phi, s_rho, dx: float, convention: str = "physical"):
    """(factor, spacing) for the residual of lap(phi) = -rho in normalized units."""
    if convention == "physical":
        return np.asarray(s_phi) / np.asarray(s_rho), dx
    if convention == "normalized_index":
        return np.ones_like(np.asarray(s_phi, dtype=float)), 1.0
    raise ConfigError(f"unknown residual convention {convention!r}")


def pinn_loss(phi_pred, rho_norm, phi_true, s_phi, s_rho, lam, data_idx, dx,
              convention: str = "physical") -> float:
    """Mean |c * phi_pred'' + rho| over all nodes plus lam * mean |phi error| on ``data_idx``.

    ``c`` is ``s_phi / s_rho`` with physical spacing ``dx`` (so the residual
    is that of the dimensional equation) or 1 with unit spacing.
    Accepts single frames or batches; batches are averaged.
    """
    data_idx = np.asarray(data_idx, dtype=int)
    if lam > 0 and data_idx.size == 0:
        raise ConfigError("PINN data term needs at least one data index")
    c, h = residual_scale(s_phi, s_rho, dx, convention)
    c = np.asarray(c)[..., None] if np.ndim(phi_pred) > 1 else c
    res = c * fd_second_derivative(phi_pred, h) + np.asarray(rho_norm)
    physics = np.mean(np.abs(res), axis=-1)
    data = np.mean(np.abs(np.asarray(phi_true)[..., data_idx] - np.asarray(phi_pred)[..., data_idx]), axis=-1) \
        if data_idx.size else 0.0
    return float(np.mean(physics + lam * data))


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "data"
    lam: float = 0.0
    lr: float = 1e-3
    epochs: int = 2000
    n_data: int = 64
    workers: int = 1
    seed: int = 0
    residual_convention: str = "physical"
    local_step: bool = False   # per-shard Adam steps, parameters averaged

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.residual_convention not in CONVENTIONS:
            raise ConfigError(f"unknown residual convention {self.residual_convention!r}")
        sparse_select(self.n_data)


def loss_and_grad(phi_pred, data: Dataset, cfg: TrainConfig, data_idx):
    """Per-sample losses and d(sum of losses)/d(phi_pred)."""
    ng = phi_pred.shape[-1]
    diff = data.phi[:, data_idx] - phi_pred[:, data_idx]
    grad = np.zeros_like(phi_pred)
    if cfg.loss == "data":
        losses = np.mean(np.abs(diff), axis=1)
        grad[:, data_idx] = -np.sign(diff) / len(data_idx)
        return losses, grad
    c, h = residual_scale(data.s_phi, data.s_rho, data.dx, cfg.residual_convention)
    c = c[:, None]
    res = c * fd_second_derivative(phi_pred, h) + data.rho
    losses = np.mean(np.abs(res), axis=1) + cfg.lam * np.mean(np.abs(diff), axis=1)
    # the 3-point stencil is symmetric, so its adjoint is itself
    grad = fd_second_derivative(c * np.sign(res) / ng, h)
    grad[:, data_idx] -= cfg.lam * np.sign(diff) / len(data_idx)
    return losses, grad


def shard_gradient(spec: ModelSpec, params, data: Dataset, cfg: TrainConfig, data_idx):
    """(sum of sample losses, sum of sample gradients) over one shard."""
    out, cache = model_forward(spec, params, data.rho, return_cache=True)
    losses, d_out = loss_and_grad(out, data, cfg, data_idx)
    return float(np.sum(losses)), model_backward(spec, params, data.rho, d_out, cache)


class Adam:
    def __init__(self, size, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        params, self.m, self.v = adam_step(
            params, grads, self.m, self.v, self.lr, self.t, self.beta1, self.beta2, self.eps
        )
        return params


def adam_step(params, grads, m, v, lr, t, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns (params, m, v)."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    m = beta1 * m + (1.0 - beta1) * grads
    v = beta2 * v + (1.0 - beta2) * grads**2
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


def shard_bounds(n: int, workers: int) -> list[tuple[int, int]]:
    """Even split with the remainder going to the last shard."""
    if workers > n:
        raise ConfigError(f"{workers} workers for {n} samples")
    size = n // workers
    bounds = [(i * size, (i + 1) * size) for i in range(workers)]
    bounds[-1] = (bounds[-1][0], n)
    return bounds


@dataclass
class TrainResult:
    params: np.ndarray
    history: list          # mean loss per epoch, at the parameters entering the epoch
    wall_ms: list
    param_history: Optional[list] = None


# worker-process globals, set once by the pool initializer
_WORKER: dict = {}


def _worker_init(spec, data, cfg, data_idx, bounds):
    _WORKER.update(spec=spec, cfg=cfg, data_idx=data_idx,
                   shards=[data.subset(np.arange(a, b)) for a, b in bounds])


def _worker_task(shard: int, params):
    w = _WORKER
    return shard_gradient(w["spec"], params, w["shards"][shard], w["cfg"], w["data_idx"])


def train_parallel(
    spec: ModelSpec,
    data: Dataset,
    cfg: TrainConfig,
    params: Optional[np.ndarray] = None,
    keep_param_history: bool = False,
    callback: Optional[Callable[[int, float, np.ndarray], None]] = None,
) -> TrainResult:
    """Full-batch Adam with the batch split over ``cfg.workers`` processes.

    Each worker returns its shard's loss and gradient sums; they are added in
    shard order and divided by the dataset size before the single update.
    ``workers=1`` runs in-process.

    With ``cfg.local_step`` each shard instead takes its own Adam step (own
    moment estimates) on its shard-mean gradient and the resulting parameter
    vectors are averaged in shard order. This is not equivalent to full-batch
    training for ``workers > 1``.
    """
    n = len(data)
    if n == 0:
        raise ConfigError("dataset is empty")
    bounds = shard_bounds(n, cfg.workers)
    data_idx = sparse_select(cfg.n_data, data.rho.shape[1])
    params = init_params(spec, cfg.seed) if params is None else np.array(params, dtype=float)
    opt = Adam(params.size, lr=cfg.lr)
    local_opts = [Adam(params.size, lr=cfg.lr) for _ in bounds] if cfg.local_step else None
    history, wall, p_hist = [], [], [] if keep_param_history else None

    pool = None
    if cfg.workers > 1:
        pool = ProcessPoolExecutor(
            max_workers=cfg.workers, initializer=_worker_init,
            initargs=(spec, data, cfg, data_idx, bounds),
        )
        shards = None
    else:
        shards = [data]
    try:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            if pool is None:
                parts = [shard_gradient(spec, params, shards[0], cfg, data_idx)]
            else:
                futures = [pool.submit(_worker_task, s, params) for s in range(len(bounds))]
                parts = [f.result() for f in futures]
            loss_sum, grad_sum = parts[0]
            for l, g in parts[1:]:
                loss_sum += l
                grad_sum = grad_sum + g
            loss = loss_sum / n
            if not np.isfinite(loss) or not np.all(np.isfinite(grad_sum)):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}",
                    {"epoch": epoch, "loss": loss, "params": params.copy(),
                     "history": list(history)},
                )
            if local_opts is None:
                params = opt.step(params, grad_sum / n)
            else:
                stepped = [o.step(params, g / (e - b)) for o, (_, g), (b, e) in zip(local_opts, parts, bounds)]
                params = stepped[0]
                for q in stepped[1:]:
                    params = params + q
                params = params / len(stepped)
            history.append(float(loss))
            wall.append((time.perf_counter() - t0) * 1e3)
            if p_hist is not None:
                p_hist.append(params.copy())
            if callback is not None:
                callback(epoch, loss, params)
    finally:
        if pool is not None:
            pool.shutdown()
    return TrainResult(params, history, wall, p_hist)


def train(spec: ModelSpec, data: Dataset, cfg: TrainConfig, **kwargs) -> TrainResult:
    """Single-process full-batch training (``cfg.workers`` is ignored)."""
    return train_parallel(spec, data, replace(cfg, workers=1), **kwargs)


def evaluate_loss(spec: ModelSpec, params, data: Dataset, cfg: TrainConfig) -> float:
    out = model_forward(spec, params, data.rho)
    losses, _ = loss_and_grad(out, data, cfg, sparse_select(cfg.n_data, data.rho.shape[1]))
    return float(np.mean(losses))
