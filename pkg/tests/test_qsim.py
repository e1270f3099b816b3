import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybrid_pic.qsim import (
    AnsatzSpec,
    amplitude_embed,
    apply_1q,
    apply_2q,
    apply_ansatz,
    circuit_unitary,
    probabilities,
    quantum_forward,
    quantum_gradient,
)

KINDS = ["strongly_entangling", "basic_entangler", "simplified_two_design"]


# -- dense reference: explicit 2^n matrices built from the gate definitions ----

def _r(gate, t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return {
        "RX": np.array([[c, -1j * s], [-1j * s, c]]),
        "RY": np.array([[c, -s], [s, c]], dtype=complex),
        "RZ": np.diag([np.exp(-1j * t / 2), np.exp(1j * t / 2)]),
    }[gate]


def dense_1q(n, q, m):
    out = np.eye(1)
    for k in range(n):
        out = np.kron(out, m if k == q else np.eye(2))
    return out


def dense_2q(n, c, t, gate):
    dim = 2**n
    u = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        bits = [(i >> (n - 1 - k)) & 1 for k in range(n)]
        if gate == "CNOT":
            if bits[c]:
                bits[t] ^= 1
            j = sum(b << (n - 1 - k) for k, b in enumerate(bits))
            u[j, i] = 1
        else:
            u[i, i] = -1 if bits[c] and bits[t] else 1
    return u


def dense_ansatz(kind, n, nl, p):
    u = np.eye(2**n, dtype=complex)

    def rot(q, g, a):
        nonlocal u
        u = dense_1q(n, q, _r(g, a)) @ u

    def ent(c, t, g):
        nonlocal u
        u = dense_2q(n, c, t, g) @ u

    if kind == "strongly_entangling":
        w = p.reshape(nl, n, 3)
        for l in range(nl):
            for q in range(n):
                rot(q, "RZ", w[l, q, 0])
                rot(q, "RY", w[l, q, 1])
                rot(q, "RZ", w[l, q, 2])
            r = l % (n - 1) + 1
            for q in range(n):
                ent(q, (q + r) % n, "CNOT")
    elif kind == "basic_entangler":
        w = p.reshape(nl, n)
        for l in range(nl):
            for q in range(n):
                rot(q, "RX", w[l, q])
            if n == 2:
                ent(0, 1, "CNOT")
            else:
                for q in range(n):
                    ent(q, (q + 1) % n, "CNOT")
    else:
        for q in range(n):
            rot(q, "RY", p[q])
        w = p[n:].reshape(nl, n - 1, 2)
        pairs = [(k, k + 1) for k in range(0, n - 1, 2)] + [(k, k + 1) for k in range(1, n - 1, 2)]
        for l in range(nl):
            for j, (a, b) in enumerate(pairs):
                ent(a, b, "CZ")
                rot(a, "RY", w[l, j, 0])
                rot(b, "RY", w[l, j, 1])
    return u


def random_state(rng, n):
    s = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return s / np.linalg.norm(s)


# -- embedding and gates -------------------------------------------------------

def test_embed_examples():
    e5 = np.zeros(64)
    e5[5] = 1.0
    np.testing.assert_array_equal(amplitude_embed(e5, 6), e5)
    np.testing.assert_allclose(probabilities(amplitude_embed(np.ones(64), 6)), 1 / 64)
    f = np.zeros(64)
    f[:2] = 3, 4
    np.testing.assert_allclose(amplitude_embed(f, 6)[:2], [0.6, 0.8])
    np.testing.assert_allclose(amplitude_embed(np.zeros(64), 6), 1 / 8)
    with pytest.raises(ValueError):
        amplitude_embed(np.ones(63), 6)


def test_gate_examples():
    zero = np.array([1, 0], dtype=complex)
    np.testing.assert_allclose(apply_1q(zero, 0, "RY", [np.pi]), [0, 1], atol=1e-15)
    s = random_state(np.random.default_rng(0), 3)
    np.testing.assert_allclose(apply_1q(s, 1, "Rot", [0, 0, 0]), s, atol=1e-15)
    basis = np.zeros(8, complex)
    basis[6] = 1
    np.testing.assert_allclose(probabilities(apply_1q(basis, 2, "RZ", [0.7])), probabilities(basis))
    ket10 = np.array([0, 0, 1, 0], complex)
    np.testing.assert_array_equal(apply_2q(ket10, 0, 1, "CNOT"), [0, 0, 0, 1])
    ket00 = np.array([1, 0, 0, 0], complex)
    np.testing.assert_array_equal(apply_2q(ket00, 0, 1, "CNOT"), ket00)
    with pytest.raises(IndexError):
        apply_1q(s, 3, "RX", [0.1])
    with pytest.raises(ValueError):
        apply_2q(s, 1, 1, "CNOT")


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 5), st.sampled_from(["RX", "RY", "RZ", "Rot"]))
def test_1q_gates_match_dense_and_invert(seed, n, gate):
    rng = np.random.default_rng(seed)
    s = random_state(rng, n)
    q = int(rng.integers(n))
    ang = rng.uniform(-np.pi, np.pi, 3 if gate == "Rot" else 1)
    out = apply_1q(s, q, gate, ang)
    if gate == "Rot":
        m = _r("RZ", ang[2]) @ _r("RY", ang[1]) @ _r("RZ", ang[0])
    else:
        m = _r(gate, ang[0])
    np.testing.assert_allclose(out, dense_1q(n, q, m) @ s, atol=1e-12)
    assert abs(np.linalg.norm(out) - 1) < 1e-12
    if gate == "Rot":
        back = apply_1q(apply_1q(apply_1q(out, q, "RZ", [-ang[2]]), q, "RY", [-ang[1]]), q, "RZ", [-ang[0]])
    else:
        back = apply_1q(out, q, gate, -ang)
    np.testing.assert_allclose(back, s, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 5), st.sampled_from(["CNOT", "CZ"]))
def test_2q_gates_match_dense_and_self_inverse(seed, n, gate):
    rng = np.random.default_rng(seed)
    s = random_state(rng, n)
    c, t = rng.choice(n, 2, replace=False)
    out = apply_2q(s, int(c), int(t), gate)
    np.testing.assert_allclose(out, dense_2q(n, c, t, gate) @ s, atol=1e-14)
    assert abs(np.linalg.norm(out) - 1) < 1e-12
    np.testing.assert_allclose(apply_2q(out, int(c), int(t), gate), s, atol=1e-14)
    if gate == "CZ":
        np.testing.assert_array_equal(out, apply_2q(s, int(t), int(c), "CZ"))


# -- ansatz ----------------------------------------------------------------------

def test_param_counts_and_ranges():
    assert AnsatzSpec("sel", 6, 6).n_params == 108
    assert AnsatzSpec("bel", 6, 6).n_params == 36
    assert AnsatzSpec("s2d", 6, 6).n_params == 66
    assert AnsatzSpec("sel", 6, 7).ranges() == [1, 2, 3, 4, 5, 1, 2]
    with pytest.raises(ValueError):
        AnsatzSpec("qaoa")


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("n,nl", [(2, 2), (3, 3), (4, 2), (5, 3)])
def test_ansatz_matches_dense_oracle(kind, n, nl):
    spec = AnsatzSpec(kind, n, nl)
    rng = np.random.default_rng(n * 10 + nl)
    p = rng.uniform(0, 2 * np.pi, spec.n_params)
    want = dense_ansatz(kind, n, nl, p)
    np.testing.assert_allclose(circuit_unitary(spec, p), want, atol=1e-12)
    s = random_state(rng, n)
    out = apply_ansatz(s, spec, p)
    np.testing.assert_allclose(out, want @ s, atol=1e-12)
    assert abs(np.linalg.norm(out) - 1) < 1e-12


def test_ansatz_examples():
    s = random_state(np.random.default_rng(3), 6)
    for kind in KINDS:
        spec = AnsatzSpec(kind, 6, 0)
        p = np.zeros(spec.n_params) if kind != "simplified_two_design" else np.zeros(6)
        np.testing.assert_allclose(apply_ansatz(s, spec, p), s, atol=1e-15)
    zero = np.zeros(64, complex)
    zero[0] = 1
    np.testing.assert_allclose(apply_ansatz(zero, AnsatzSpec(), np.zeros(108)), zero, atol=1e-15)
    with pytest.raises(ValueError):
        apply_ansatz(zero, AnsatzSpec(), np.zeros(107))


def test_forward_examples_and_composition():
    e3 = np.zeros(64)
    e3[3] = 2.0
    np.testing.assert_allclose(quantum_forward(e3, AnsatzSpec("sel", 6, 0), np.zeros(0)), e3 / 2, atol=1e-15)
    rng = np.random.default_rng(4)
    spec = AnsatzSpec()
    p = rng.uniform(0, 2 * np.pi, 108)
    x = rng.normal(size=(70, 64))
    out = quantum_forward(x, spec, p)
    assert np.all((out >= 0) & (out <= 1))
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
    # batch >= 64 uses the explicit unitary; both paths agree with the composition
    for row, got in zip(x[:3], out[:3]):
        want = probabilities(apply_ansatz(amplitude_embed(row, 6), spec, p))
        np.testing.assert_allclose(got, want, atol=1e-13)
        np.testing.assert_allclose(quantum_forward(row, spec, p), want, atol=1e-13)


# -- gradients -------------------------------------------------------------------

def _loss(f, spec, p, u):
    return float(np.sum(u * quantum_forward(f, spec, p)))


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("batch", [None, 3, 70])
def test_gradient_matches_finite_differences(kind, batch):
    n, nl = (6, 2) if batch != 70 else (6, 1)
    spec = AnsatzSpec(kind, n, nl)
    rng = np.random.default_rng([KINDS.index(kind), batch or 0])
    p = rng.uniform(0, 2 * np.pi, spec.n_params)
    shape = (64,) if batch is None else (batch, 64)
    f = rng.normal(size=shape)
    u = rng.normal(size=shape)
    d_f, d_p = quantum_gradient(f, spec, p, u)
    h = 1e-5
    fd_p = np.array([(_loss(f, spec, p + h * e, u) - _loss(f, spec, p - h * e, u)) / (2 * h)
                     for e in np.eye(p.size)])
    assert _rel(d_p, fd_p) < 1e-5
    flat = f.reshape(-1)
    idx = rng.choice(flat.size, 12, replace=False)
    fd_f = []
    for i in idx:
        e = np.zeros(flat.size)
        e[i] = h
        fd_f.append((_loss((flat + e).reshape(shape), spec, p, u) - _loss((flat - e).reshape(shape), spec, p, u)) / (2 * h))
    assert _rel(d_f.reshape(-1)[idx], np.array(fd_f)) < 1e-5


def test_basic_entangler_parameter_shift():
    spec = AnsatzSpec("bel", 6, 3)
    rng = np.random.default_rng(7)
    p = rng.uniform(0, 2 * np.pi, spec.n_params)
    f, u = rng.normal(size=64), rng.normal(size=64)
    _, d_p = quantum_gradient(f, spec, p, u)
    shift = np.array([(_loss(f, spec, p + np.pi / 2 * e, u) - _loss(f, spec, p - np.pi / 2 * e, u)) / 2
                      for e in np.eye(p.size)])
    np.testing.assert_allclose(d_p, shift, atol=1e-10)


def test_zero_upstream_and_zero_features():
    spec = AnsatzSpec()
    p = np.random.default_rng(8).uniform(0, 2 * np.pi, 108)
    d_f, d_p = quantum_gradient(np.ones(64), spec, p, np.zeros(64))
    assert not d_f.any() and not d_p.any()
    d_f, d_p = quantum_gradient(np.zeros(64), spec, p, np.ones(64) + np.arange(64))
    assert not d_f.any()
    assert np.all(np.isfinite(d_p))


@pytest.mark.parametrize("kind", KINDS)
def test_phase_only_angles_have_exactly_zero_gradient(kind):
    from hybrid_pic.qsim import _dead_params
    spec = AnsatzSpec(kind, 6, 3)
    dead = _dead_params(spec.kind, 6, 3)
    if kind == "strongly_entangling":
        # the last Rot's omega on every qubit is followed only by CNOTs
        np.testing.assert_array_equal(dead, [3 * (2 * 6 + q) + 2 for q in range(6)])
    else:
        assert dead.size == 0
    rng = np.random.default_rng(9)
    p = rng.uniform(0, 2 * np.pi, spec.n_params)
    f = rng.normal(size=(3, 64))
    base = quantum_forward(f, spec, p)
    for i in dead:
        q = p.copy()
        q[i] += 1.3
        np.testing.assert_allclose(quantum_forward(f, spec, q), base, atol=1e-13)
    _, d_p = quantum_gradient(f, spec, p, rng.normal(size=(3, 64)))
    assert np.all(d_p[dead] == 0.0)
