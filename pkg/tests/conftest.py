import pytest

from hybrid_pic.hybrid import offline_errors
from hybrid_pic.nn import ModelSpec
from hybrid_pic.pic import SimConfig, run_simulation
from hybrid_pic.qsim import AnsatzSpec
from hybrid_pic.training import TrainConfig, generate_dataset, train

ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def emit(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)


class Models:
    """Session cache of the default dataset, the held-out run and trained models.

    MRAE from ``errors`` is teacher-forced: the model sees each recorded
    density of the held-out v0=0.07 baseline run, the output is rescaled by
    the true potential's max magnitude and its E field is compared with the
    recorded one.
    """

    train_velocities = (0.03, 0.05, 0.1)

    def __init__(self):
        self._trained = {}
        self._errors = {}
        self._dataset = None
        self._held_out = None

    def dataset(self):
        if self._dataset is None:
            self._dataset = generate_dataset(self.train_velocities)
        return self._dataset

    def held_out(self):
        if self._held_out is None:
            cfg = SimConfig(v0=0.07)
            self._held_out = run_simulation(cfg, record_frames=True, snapshot_steps=[0, cfg.n_steps])
        return self._held_out

    def trained(self, kind, ansatz="sel", nl=6, seed=0, loss="data", lam=0.0, nd=64, epochs=2000):
        key = (kind, ansatz, nl, seed, loss, lam, nd, epochs)
        if key not in self._trained:
            spec = ModelSpec(kind, AnsatzSpec(ansatz, 6, nl) if kind == "cqc" else None)
            cfg = TrainConfig(loss=loss, lam=lam, n_data=nd, epochs=epochs, seed=seed)
            self._trained[key] = spec, train(spec, self.dataset(), cfg).params
        return self._trained[key]

    def errors(self, *key):
        if key not in self._errors:
            spec, params = self.trained(*key)
            self._errors[key] = offline_errors(spec, params, self.held_out())
        return self._errors[key]


@pytest.fixture(scope="session")
def models():
    return Models()
