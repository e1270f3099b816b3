"""
A variational quantum layer on a statevector
============================================

The hybrid network squeezes a 64-vector through six qubits: the vector is
amplitude-encoded, a trainable circuit is applied and the 64 computational
basis probabilities come out. Everything is plain numpy.
"""
import numpy as np

from hybrid_pic.qsim import (
    AnsatzSpec,
    amplitude_embed,
    apply_ansatz,
    circuit_unitary,
    probabilities,
    quantum_forward,
    quantum_gradient,
)

rng = np.random.default_rng(0)
x = rng.normal(size=64)

# amplitude encoding: the state is x / |x|
state = amplitude_embed(x)
print("embedded norm", np.linalg.norm(state))

###############################################################################
# Three circuit families with six layers each. They differ in gates and in
# how many angles they train.
for kind in ("strongly_entangling", "basic_entangler", "simplified_two_design"):
    spec = AnsatzSpec(kind, 6, 6)
    theta = rng.uniform(0, 2 * np.pi, spec.n_params)
    u = circuit_unitary(spec, theta)
    out = probabilities(apply_ansatz(state, spec, theta))
    print(f"{kind:22s} params {spec.n_params:3d}  unitarity err {np.abs(u.conj().T @ u - np.eye(64)).max():.1e}"
          f"  sum(p) {out.sum():.12f}")

###############################################################################
# Gradients come from one backward sweep over the circuit. For single-angle
# rotations the parameter-shift rule gives the same numbers exactly.
spec = AnsatzSpec("basic_entangler", 6, 2)
theta = rng.uniform(0, 2 * np.pi, spec.n_params)
w = rng.normal(size=64)
_, grad = quantum_gradient(x, spec, theta, w)


def f(t):
    return float(w @ quantum_forward(x, spec, t))


shift = np.array([(f(theta + np.pi / 2 * e) - f(theta - np.pi / 2 * e)) / 2 for e in np.eye(theta.size)])
print("adjoint vs parameter shift, max diff", np.abs(grad - shift).max())
