"""Statevector simulator for the variational quantum layer.

States are complex arrays of shape ``(..., 2**n)``; leading axes are a batch.
Qubit 0 is the most significant bit of the basis index, so on two qubits
``|10>`` is index 2.

The layer is ``probabilities(U(theta) @ embed(features))``. Gradients use
the adjoint method: the circuit is run forward once, then un-computed block
by block while the cotangent is carried backwards. A block is a run of
commuting gates (one rotation per qubit, or a set of CNOTs / CZs) fused into
one Kronecker product, permutation or sign vector.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

ANSATZ_KINDS = ("strongly_entangling", "basic_entangler", "simplified_two_design")
ALIASES = {
    "sel": "strongly_entangling",
    "strongly_entangling": "strongly_entangling",
    "bel": "basic_entangler",
    "basic": "basic_entangler",
    "basic_entangler": "basic_entangler",
    "s2d": "simplified_two_design",
    "simplified_two_design": "simplified_two_design",
}
EMBED_EPS = 1e-12

_PAULI = {
    "RX": np.array([[0, 1], [1, 0]], dtype=complex),
    "RY": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "RZ": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class AnsatzSpec:
    kind: str = "strongly_entangling"
    n_qubits: int = 6
    n_layers: int = 6

    def __post_init__(self):
        kind = ALIASES.get(self.kind)
        if kind is None:
            raise ValueError(f"unknown ansatz kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @property
    def n_params(self) -> int:
        n, nl = self.n_qubits, self.n_layers
        if self.kind == "strongly_entangling":
            return 3 * n * nl
        if self.kind == "basic_entangler":
            return n * nl
        return n + 2 * (n - 1) * nl

    def ranges(self) -> list[int]:
        """CNOT distance per strongly-entangling layer."""
        n = self.n_qubits
        return [(l % (n - 1)) + 1 if n > 1 else 0 for l in range(self.n_layers)]

    def operations(self) -> tuple:
        return _operations(self.kind, self.n_qubits, self.n_layers)


@lru_cache(maxsize=None)
def _operations(kind: str, n: int, nl: int) -> tuple:
    """Flatten an ansatz into elementary gates.

    Rotations are ``(name, qubit, param_index)``; two-qubit gates are
    ``(name, control, target)``. Rot(a, b, c) expands to RZ(a), RY(b), RZ(c).
    """
    ops = []
    if kind == "strongly_entangling":
        spec = AnsatzSpec(kind, n, nl)
        for l, r in enumerate(spec.ranges()):
            for q in range(n):
                base = 3 * (l * n + q)
                ops += [("RZ", q, base), ("RY", q, base + 1), ("RZ", q, base + 2)]
            if n > 1:
                ops += [("CNOT", q, (q + r) % n) for q in range(n)]
    elif kind == "basic_entangler":
        for l in range(nl):
            ops += [("RX", q, l * n + q) for q in range(n)]
            if n == 2:
                ops.append(("CNOT", 0, 1))
            elif n > 2:
                ops += [("CNOT", q, (q + 1) % n) for q in range(n)]
    else:
        ops += [("RY", q, q) for q in range(n)]
        even = [(k, k + 1) for k in range(0, n - 1, 2)]
        odd = [(k, k + 1) for k in range(1, n - 1, 2)]
        for l in range(nl):
            base = n + 2 * (n - 1) * l
            for j, (a, b) in enumerate(even + odd):
                p = base + 2 * j
                ops += [("CZ", a, b), ("RY", a, p), ("RY", b, p + 1)]
    return tuple(ops)


def n_qubits_of(state: np.ndarray) -> int:
    dim = state.shape[-1]
    n = dim.bit_length() - 1
    if 2**n != dim:
        raise ValueError(f"state dimension {dim} is not a power of two")
    return n


def rotation_matrix(gate: str, theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    if gate == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if gate == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if gate == "RZ":
        return np.array([[np.exp(-1j * theta / 2), 0], [0, np.exp(1j * theta / 2)]])
    raise ValueError(f"unknown rotation {gate!r}")


def rot_matrix(phi: float, theta: float, omega: float) -> np.ndarray:
    return rotation_matrix("RZ", omega) @ rotation_matrix("RY", theta) @ rotation_matrix("RZ", phi)


def _check_qubit(q: int, n: int):
    if not 0 <= q < n:
        raise IndexError(f"qubit {q} out of range for {n} qubits")


def apply_matrix_1q(state: np.ndarray, qubit: int, mat: np.ndarray) -> np.ndarray:
    n = n_qubits_of(state)
    _check_qubit(qubit, n)
    lead = state.shape[:-1]
    s = state.reshape(lead + (2**qubit, 2, 2 ** (n - qubit - 1)))
    a0, a1 = s[..., 0, :], s[..., 1, :]
    out = np.empty(s.shape, dtype=complex)
    out[..., 0, :] = mat[0, 0] * a0 + mat[0, 1] * a1
    out[..., 1, :] = mat[1, 0] * a0 + mat[1, 1] * a1
    return out.reshape(state.shape)


def apply_1q(state: np.ndarray, qubit: int, gate: str, angles) -> np.ndarray:
    """Apply RX, RY, RZ (one angle) or Rot (three angles) to ``qubit``."""
    state = np.asarray(state, dtype=complex)
    if gate == "Rot":
        mat = rot_matrix(*angles)
    else:
        theta = angles[0] if np.ndim(angles) else angles
        mat = rotation_matrix(gate, theta)
    return apply_matrix_1q(state, qubit, mat)


@lru_cache(maxsize=None)
def _cnot_perm(n: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(2**n)
    cbit = 1 << (n - 1 - control)
    tbit = 1 << (n - 1 - target)
    return np.where(idx & cbit, idx ^ tbit, idx)


@lru_cache(maxsize=None)
def _cz_sign(n: int, a: int, b: int) -> np.ndarray:
    idx = np.arange(2**n)
    both = (idx >> (n - 1 - a)) & (idx >> (n - 1 - b)) & 1
    return np.where(both == 1, -1.0, 1.0)


def apply_2q(state: np.ndarray, control: int, target: int, gate: str) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    n = n_qubits_of(state)
    _check_qubit(control, n)
    _check_qubit(target, n)
    if control == target:
        raise ValueError("control and target must differ")
    if gate == "CNOT":
        return state[..., _cnot_perm(n, control, target)]
    if gate == "CZ":
        return state * _cz_sign(n, control, target)
    raise ValueError(f"unknown two-qubit gate {gate!r}")


def _check_params(spec: AnsatzSpec, params) -> np.ndarray:
    params = np.asarray(params, dtype=float).ravel()
    if params.size != spec.n_params:
        raise ValueError(f"{spec.kind} with n={spec.n_qubits}, NL={spec.n_layers} "
                         f"needs {spec.n_params} parameters, got {params.size}")
    return params


def amplitude_embed(features, n_qubits: int | None = None) -> np.ndarray:
    """Normalize real features into state amplitudes.

    A feature vector with norm below 1e-12 (e.g. an all-zero ReLU output)
    maps to the uniform superposition.
    """
    f = np.asarray(features, dtype=float)
    dim = f.shape[-1]
    if n_qubits is not None and dim != 2**n_qubits:
        raise ValueError(f"expected {2**n_qubits} features, got {dim}")
    n_qubits_of(f)
    norm = np.linalg.norm(f, axis=-1, keepdims=True)
    safe = np.where(norm < EMBED_EPS, 1.0, norm)
    out = np.where(norm < EMBED_EPS, dim**-0.5, f / safe)
    return out.astype(complex)


def apply_ansatz(state: np.ndarray, spec: AnsatzSpec, params) -> np.ndarray:
    params = _check_params(spec, params)
    state = np.asarray(state, dtype=complex)
    if state.shape[-1] != spec.dim:
        raise ValueError(f"state has dimension {state.shape[-1]}, ansatz needs {spec.dim}")
    lead = state.shape[:-1]
    rows = state.reshape(-1, spec.dim)
    for block in _blocks(spec):
        rows = block.forward(rows, params)
    return rows.reshape(lead + (spec.dim,))


def circuit_unitary(spec: AnsatzSpec, params) -> np.ndarray:
    """Matrix U with ``apply_ansatz(psi) == U @ psi``."""
    return apply_ansatz(np.eye(spec.dim, dtype=complex), spec, params).T


def probabilities(state: np.ndarray) -> np.ndarray:
    return np.abs(state) ** 2


def quantum_forward(features, spec: AnsatzSpec, params) -> np.ndarray:
    """Born probabilities of the ansatz applied to the amplitude-embedded features."""
    psi = amplitude_embed(features, spec.n_qubits)
    if psi.ndim > 1 and psi.shape[0] >= spec.dim:
        out = psi @ circuit_unitary(spec, params).T
    else:
        out = apply_ansatz(psi, spec, params)
    return probabilities(out)


def _adjoint(final, cot, spec, params):
    """Walk the circuit backwards, returning (input cotangent, parameter grads).

    ``final`` holds output states as rows and ``cot`` the matching complex
    cotangents dL/dRe + i dL/dIm. Parameter gradients are summed over rows.
    """
    grads = np.zeros(params.size)
    phi, lam = final, cot
    for block in reversed(_blocks(spec)):
        phi, lam = block.backward(phi, lam, params, grads)
    return lam, grads


def quantum_gradient(features, spec: AnsatzSpec, params, upstream):
    """Reverse-mode gradient of ``sum(upstream * quantum_forward(features))``.

    Returns ``(d_features, d_params)``. With a batch of features,
    ``d_features`` is per sample and ``d_params`` is summed over the batch.
    """
    params = _check_params(spec, params)
    f = np.asarray(features, dtype=float)
    u = np.asarray(upstream, dtype=float)
    psi = amplitude_embed(f, spec.n_qubits).real
    dim = spec.dim
    if f.ndim > 1 and f.shape[0] >= dim:
        U = circuit_unitary(spec, params)
        out = psi @ U.T
        g = 2.0 * u * out
        # cotangent on U's columns: outer products summed over samples
        gbar = g.reshape(-1, dim).T @ psi.reshape(-1, dim)
        _, d_params = _adjoint(U.T, gbar.T, spec, params)
        d_psi = np.real(g @ U.conj())
    else:
        out = apply_ansatz(psi.astype(complex), spec, params)
        g = 2.0 * u * out
        lam, d_params = _adjoint(out.reshape(-1, dim), g.reshape(-1, dim), spec, params)
        d_psi = np.real(lam).reshape(f.shape)

    d_params[_dead_params(spec.kind, spec.n_qubits, spec.n_layers)] = 0.0

    norm = np.linalg.norm(f, axis=-1, keepdims=True)
    small = norm < EMBED_EPS
    proj = d_psi - psi * np.sum(psi * d_psi, axis=-1, keepdims=True)
    d_features = np.where(small, 0.0, proj / np.where(small, 1.0, norm))
    return d_features, d_params


class _LocalBlock:
    """Rotations acting on each qubit, applied as one Kronecker product."""

    def __init__(self, n: int, rotations: dict):
        self.n = n
        self.rotations = rotations  # qubit -> [(gate, param_index), ...] in time order

    def _qubit_matrices(self, params):
        mats = []
        for q in range(self.n):
            m = np.eye(2, dtype=complex)
            for gate, idx in self.rotations.get(q, ()):
                m = rotation_matrix(gate, params[idx]) @ m
            mats.append(m)
        return mats

    @staticmethod
    def _kron(mats):
        k = np.ones((1, 1), dtype=complex)
        for m in mats:
            r, c = k.shape
            k = (k[:, None, :, None] * m[None, :, None, :]).reshape(2 * r, 2 * c)
        return k

    def forward(self, rows, params):
        return rows @ self._kron(self._qubit_matrices(params)).T

    def backward(self, phi, lam, params, grads):
        mats = self._qubit_matrices(params)
        k = self._kron(mats)
        phi_in = phi @ k.conj()
        # dL/dK_ij = sum over rows of conj(lam)_i * phi_in_j
        z = lam.conj().T @ phi_in
        n = self.n
        for q, rots in self.rotations.items():
            pre, suf = self._kron(mats[:q]), self._kron(mats[q + 1:])
            zr = z.reshape(2**q, 2, 2 ** (n - q - 1), 2**q, 2, 2 ** (n - q - 1))
            env = np.einsum("pasqbt,pq,st->ab", zr, pre, suf)
            seq = [rotation_matrix(g, params[i]) for g, i in rots]
            for j, (gate, idx) in enumerate(rots):
                d = -0.5j * _PAULI[gate] @ seq[j]
                for r in reversed(seq[:j]):
                    d = d @ r
                for r in seq[j + 1:]:
                    d = r @ d
                grads[idx] += np.real(np.sum(env * d))
        return phi_in, lam @ k.conj()


class _PermBlock:
    """A run of CNOT gates, merged into one basis permutation."""

    def __init__(self, n: int, gates):
        perm = np.arange(2**n)
        for c, t in gates:
            perm = perm[_cnot_perm(n, c, t)]
        self.perm = perm
        self.inverse = np.argsort(perm)

    def forward(self, rows, params):
        return rows[:, self.perm]

    def backward(self, phi, lam, params, grads):
        return phi[:, self.inverse], lam[:, self.inverse]


class _SignBlock:
    """A run of CZ gates, merged into one diagonal of signs."""

    def __init__(self, n: int, gates):
        sign = np.ones(2**n)
        for a, b in gates:
            sign = sign * _cz_sign(n, a, b)
        self.sign = sign

    def forward(self, rows, params):
        return rows * self.sign

    def backward(self, phi, lam, params, grads):
        return phi * self.sign, lam * self.sign


@lru_cache(maxsize=None)
def _blocks_cached(kind: str, n: int, nl: int):
    ops = _operations(kind, n, nl)
    if kind == "simplified_two_design":
        ops = _sort_commuting(ops)
    blocks, cur_kind, cur = [], None, []

    def flush():
        if not cur:
            return
        if cur_kind == "rot":
            rots = {}
            for name, q, idx in cur:
                rots.setdefault(q, []).append((name, idx))
            blocks.append(_LocalBlock(n, rots))
        elif cur_kind == "CNOT":
            blocks.append(_PermBlock(n, [(c, t) for _, c, t in cur]))
        else:
            blocks.append(_SignBlock(n, [(c, t) for _, c, t in cur]))

    for op in ops:
        k = "rot" if op[0] in _PAULI else op[0]
        if k != cur_kind:
            flush()
            cur_kind, cur = k, []
        cur.append(op)
    flush()
    return tuple(blocks)


def _sort_commuting(ops):
    """Within each CZ/RY pair block, move the CZs ahead of the rotations.

    The pairs of one block are disjoint, so this leaves the unitary unchanged
    while letting consecutive CZs and RYs merge.
    """
    out, i = [], 0
    while i < len(ops):
        if ops[i][0] != "CZ":
            out.append(ops[i])
            i += 1
            continue
        j = i
        used, czs, rys = set(), [], []
        while j < len(ops) and ops[j][0] == "CZ" and not {ops[j][1], ops[j][2]} & used:
            used |= {ops[j][1], ops[j][2]}
            czs.append(ops[j])
            rys += list(ops[j + 1:j + 3])
            j += 3
        out += czs + rys
        i = j
    return out


def _blocks(spec: AnsatzSpec):
    return _blocks_cached(spec.kind, spec.n_qubits, spec.n_layers)


@lru_cache(maxsize=None)
def _dead_params(kind: str, n: int, nl: int) -> np.ndarray:
    """Indices of angles that cannot change the output probabilities.

    An RZ's generator Z_q is pushed forward through the rest of the circuit
    as a Z-string: CNOT(c, t) maps Z_t to Z_c Z_t, CZ and RZ leave it alone.
    If no later RX/RY touches the string it stays diagonal, so the gate only
    adds phases before measurement and its gradient is exactly zero. Left to
    round-off, those components would be amplified by Adam's normalization.
    """
    ops = _operations(kind, n, nl)
    dead = []
    for k, (name, q, idx) in enumerate(ops):
        if name != "RZ":
            continue
        support = {q}
        for op in ops[k + 1:]:
            if op[0] == "CNOT":
                if op[2] in support:
                    support ^= {op[1]}
            elif op[0] in ("RX", "RY") and op[1] in support:
                break
        else:
            dead.append(idx)
    return np.array(dead, dtype=int)
