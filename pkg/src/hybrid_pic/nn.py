"""Dense CCC and hybrid CQC networks with explicit forward/backward passes.

CQC: Linear -> ReLU -> quantum layer -> Linear -> Tanh
CCC: Linear -> ReLU -> Linear -> ReLU -> Linear -> Tanh

Parameters live in one flat float64 array. Each linear layer stores its
weights row-major as ``[out][in]`` followed by its bias; layers (and the
quantum angles) appear in stack order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .qsim import AnsatzSpec, quantum_forward, quantum_gradient

MODEL_KINDS = ("cqc", "ccc")


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "cqc"
    ansatz: Optional[AnsatzSpec] = None
    width: int = 64

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "cqc":
            ansatz = self.ansatz or AnsatzSpec()
            if ansatz.dim != self.width:
                raise ValueError(f"ansatz acts on {ansatz.dim} amplitudes, width is {self.width}")
            object.__setattr__(self, "ansatz", ansatz)
        else:
            object.__setattr__(self, "ansatz", None)

    def layers(self) -> list[tuple[str, int]]:
        """(name, parameter count) in stack order."""
        lin = self.width * self.width + self.width
        if self.kind == "ccc":
            return [("linear", lin), ("linear", lin), ("linear", lin)]
        return [("linear", lin), ("quantum", self.ansatz.n_params), ("linear", lin)]


def param_count(spec: ModelSpec) -> int:
    return sum(n for _, n in spec.layers())


def split_params(spec: ModelSpec, params: np.ndarray) -> list[np.ndarray]:
    params = np.asarray(params, dtype=float)
    if params.size != param_count(spec):
        raise ValueError(f"model needs {param_count(spec)} parameters, got {params.size}")
    out, start = [], 0
    for _, n in spec.layers():
        out.append(params[start:start + n])
        start += n
    return out


def unpack_linear(chunk: np.ndarray, width: int):
    w = chunk[: width * width].reshape(width, width)
    return w, chunk[width * width:]


def init_params(spec: ModelSpec, seed: int = 0) -> np.ndarray:
    """Uniform(+-1/sqrt(width)) weights, zero biases, Uniform[0, 2pi) angles."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(spec.width)
    chunks = []
    for name, n in spec.layers():
        if name == "linear":
            w = rng.uniform(-bound, bound, spec.width * spec.width)
            chunks += [w, np.zeros(spec.width)]
        else:
            chunks.append(rng.uniform(0.0, 2.0 * np.pi, n))
    return np.concatenate(chunks)


def linear_forward(weights: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    return x @ weights.T + bias


def activation(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation {kind!r}")


def model_forward(spec: ModelSpec, params: np.ndarray, x: np.ndarray, return_cache: bool = False):
    """Predict normalized potentials from normalized charge densities.

    ``x`` is ``(width,)`` or ``(batch, width)``.
    """
    x = np.asarray(x, dtype=float)
    chunks = split_params(spec, params)
    cache = [x]
    h = x
    if spec.kind == "ccc":
        for i, chunk in enumerate(chunks):
            w, b = unpack_linear(chunk, spec.width)
            h = linear_forward(w, b, h)
            h = activation("tanh" if i == 2 else "relu", h)
            cache.append(h)
    else:
        w1, b1 = unpack_linear(chunks[0], spec.width)
        h = activation("relu", linear_forward(w1, b1, h))
        cache.append(h)
        h = quantum_forward(h, spec.ansatz, chunks[1])
        cache.append(h)
        w2, b2 = unpack_linear(chunks[2], spec.width)
        h = activation("tanh", linear_forward(w2, b2, h))
        cache.append(h)
    return (h, cache) if return_cache else h


def _linear_backward(w, x_in, d_out):
    """Return (d_input, d_weights, d_bias) summed over any batch axis."""
    x2 = x_in.reshape(-1, x_in.shape[-1])
    d2 = d_out.reshape(-1, d_out.shape[-1])
    return d_out @ w, d2.T @ x2, d2.sum(axis=0)


def model_backward(spec: ModelSpec, params: np.ndarray, x: np.ndarray, upstream: np.ndarray, cache=None):
    """Gradient of ``sum(upstream * model_forward(x))`` w.r.t. the flat parameters.

    ReLU's derivative at exactly 0 is taken as 0.
    """
    if cache is None:
        _, cache = model_forward(spec, params, x, return_cache=True)
    chunks = split_params(spec, params)
    grads = []
    d = np.asarray(upstream, dtype=float) * (1.0 - cache[-1] ** 2)
    if spec.kind == "ccc":
        for i in (2, 1, 0):
            w, _ = unpack_linear(chunks[i], spec.width)
            d_in, dw, db = _linear_backward(w, cache[i], d)
            grads.append(np.concatenate([dw.ravel(), db]))
            if i > 0:
                d = d_in * (cache[i] > 0)
    else:
        w2, _ = unpack_linear(chunks[2], spec.width)
        d_in, dw2, db2 = _linear_backward(w2, cache[2], d)
        grads.append(np.concatenate([dw2.ravel(), db2]))
        d_h, d_theta = quantum_gradient(cache[1], spec.ansatz, chunks[1], d_in)
        grads.append(d_theta)
        w1, _ = unpack_linear(chunks[0], spec.width)
        d = d_h * (cache[1] > 0)
        _, dw1, db1 = _linear_backward(w1, cache[0], d)
        grads.append(np.concatenate([dw1.ravel(), db1]))
    return np.concatenate(grads[::-1])
