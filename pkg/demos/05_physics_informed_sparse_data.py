"""
Physics-informed training from sparse samples
=============================================

Keep only 20 of the 64 grid values of each target potential. A network fitted
to those alone has nothing to say about the other 44 points. Adding the
finite-difference residual of lap(phi) = -rho over the full grid fills them in.
"""
import sys

import numpy as np

from hybrid_pic.hybrid import offline_errors
from hybrid_pic.metrics import wilcoxon_signed_rank
from hybrid_pic.nn import ModelSpec
from hybrid_pic.pic import SimConfig, run_simulation
from hybrid_pic.training import TrainConfig, generate_dataset, sparse_select, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 3000

data = generate_dataset([0.03, 0.05, 0.1])
test = run_simulation(SimConfig(v0=0.07), record_frames=True)
print("sparse sample points:", sparse_select(20))

spec = ModelSpec("ccc")
runs = {
    "dense data": TrainConfig(epochs=epochs),
    "sparse data": TrainConfig(epochs=epochs, n_data=20),
    "sparse + residual": TrainConfig(epochs=epochs, n_data=20, loss="pinn", lam=0.3),
}
errs = {}
for name, cfg in runs.items():
    errs[name] = offline_errors(spec, train(spec, data, cfg).params, test)
    print(f"{name:18s} held-out MRAE median {np.median(errs[name]):.3f}")

###############################################################################
# Paired per-step comparison of the two sparse models.
stat, p = wilcoxon_signed_rank(errs["sparse + residual"] - errs["sparse data"])
print(f"Wilcoxon signed-rank: statistic {stat:.0f}, p = {p:.1e}")
