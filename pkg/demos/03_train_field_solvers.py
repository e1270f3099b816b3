"""
Learning the Poisson solve
==========================

Frames of (charge density, potential) from three two-stream runs form the
training set. A fully classical network (CCC) and one with the quantum
layer in the middle (CQC) are trained to map normalized density to
normalized potential and then tested on a drift velocity they never saw.

Pass an epoch count to shorten the run: ``python 03_train_field_solvers.py 300``.
"""
import sys
import time

import numpy as np

from hybrid_pic.hybrid import offline_errors
from hybrid_pic.metrics import summarize_errors
from hybrid_pic.nn import ModelSpec, param_count
from hybrid_pic.pic import SimConfig, run_simulation
from hybrid_pic.training import TrainConfig, generate_dataset, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 2000

# 3 runs x 1000 frames, 500 picked at a uniform stride
data = generate_dataset([0.03, 0.05, 0.1])
print(f"{len(data)} samples from {data.provenance['frames_total']} frames")

# held-out drift velocity
test = run_simulation(SimConfig(v0=0.07), record_frames=True)

###############################################################################
# Full-batch Adam, learning rate 1e-3, mean absolute error on the potential.
for kind in ("ccc", "cqc"):
    spec = ModelSpec(kind)
    t0 = time.perf_counter()
    res = train(spec, data, TrainConfig(epochs=epochs))
    s = summarize_errors(offline_errors(spec, res.params, test))
    print(f"{kind.upper()} {param_count(spec)} params, {time.perf_counter() - t0:.0f}s: "
          f"loss {res.history[0]:.3f} -> {res.history[-1]:.4f}; "
          f"held-out MRAE median {s.median:.3f} (IQR {s.q1:.3f}-{s.q3:.3f})")

###############################################################################
# The MRAE above is teacher-forced: each test-run density goes through the
# network, the output is rescaled by the true potential's peak and the
# resulting E field is compared with the recorded one.
