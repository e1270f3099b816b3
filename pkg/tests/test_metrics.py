import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import rankdata

from hybrid_pic.metrics import (
    MetricError,
    default_velocity_range,
    energy_distance,
    field_envelope,
    growth_decades,
    growth_summary,
    mrae,
    mrae_series,
    summarize_errors,
    velocity_histogram,
    wilcoxon_signed_rank,
)


def pairwise_energy_distance(u, v):
    u, v = np.asarray(u, float), np.asarray(v, float)
    xy = np.abs(u[:, None] - v[None, :]).mean()
    xx = np.abs(u[:, None] - u[None, :]).mean()
    yy = np.abs(v[:, None] - v[None, :]).mean()
    return np.sqrt(max(2 * xy - xx - yy, 0.0))


def exact_wilcoxon(d):
    d = np.asarray(d, float)
    d = d[d != 0]
    r = rankdata(np.abs(d))
    w_obs = min(r[d > 0].sum(), r[d < 0].sum())
    count = 0
    for signs in itertools.product([0, 1], repeat=d.size):
        wp = sum(ri for ri, s in zip(r, signs) if s)
        if min(wp, r.sum() - wp) <= w_obs + 1e-9:
            count += 1
    return w_obs, count / 2**d.size


# -- MRAE ------------------------------------------------------------------------

def test_mrae_examples():
    rng = np.random.default_rng(0)
    e = rng.normal(size=64)
    assert mrae(e, e) == 0.0
    assert mrae(2 * e, e) == pytest.approx(1.0)
    p = rng.normal(size=64)
    assert mrae(p, e) == pytest.approx(sum(abs(a - b) for a, b in zip(p, e)) / sum(abs(b) for b in e))
    with pytest.raises(MetricError):
        mrae(e, np.zeros(64))
    rows = rng.normal(size=(5, 64))
    np.testing.assert_allclose(mrae_series(rows + 0.1, rows), [mrae(r + 0.1, r) for r in rows])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-1e3, 1e3).filter(lambda a: abs(a) > 1e-3))
def test_mrae_scale_invariant(seed, a):
    rng = np.random.default_rng(seed)
    p, t = rng.normal(size=64), rng.normal(size=64)
    assert mrae(a * p, a * t) == pytest.approx(mrae(p, t), rel=1e-12)


# -- energy distance --------------------------------------------------------------

def test_energy_distance_examples():
    u = np.random.default_rng(1).normal(size=30)
    assert energy_distance(u, u) == 0.0
    assert energy_distance([0.0], [1.0]) == pytest.approx(np.sqrt(2))
    with pytest.raises(MetricError):
        energy_distance([], [1.0])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 50), st.integers(1, 50), st.booleans())
def test_energy_distance_matches_pairwise(seed, m, n, ties):
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=m), rng.normal(0.3, 1.5, size=n)
    if ties:
        u, v = np.round(u, 1), np.round(v, 1)
    d = energy_distance(u, v)
    assert d == pytest.approx(pairwise_energy_distance(u, v), abs=1e-10)
    assert d == energy_distance(v, u) or abs(d - energy_distance(v, u)) < 1e-14
    assert d >= 0
    # zero iff the empirical distributions coincide
    assert energy_distance(u, rng.permutation(np.concatenate([u, u]))) < 1e-12


# -- Wilcoxon ----------------------------------------------------------------------

def test_wilcoxon_examples():
    stat, p = wilcoxon_signed_rank(np.arange(1, 9, dtype=float))
    assert stat == 0.0 and p == pytest.approx(2 / 2**8)
    sym = np.array([1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0])
    assert wilcoxon_signed_rank(sym)[1] == pytest.approx(1.0)
    with pytest.raises(MetricError):
        wilcoxon_signed_rank(np.zeros(10))
    with pytest.raises(MetricError):
        wilcoxon_signed_rank([1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0])


@pytest.mark.parametrize("seed", range(6))
def test_wilcoxon_exact_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = 6 + seed
    d = np.round(rng.normal(0.3, 1.0, size=n), 1 if seed % 2 else 6)
    stat, p = wilcoxon_signed_rank(d, method="exact")
    w, p_ref = exact_wilcoxon(d)
    assert stat == w and p == pytest.approx(p_ref, abs=1e-12)


@pytest.mark.parametrize("n", [10, 11, 12])
@pytest.mark.parametrize("seed", range(4))
def test_wilcoxon_exact_vs_normal(n, seed):
    d = np.random.default_rng(100 * n + seed).normal(0.2, 1.0, size=n)
    p_exact = wilcoxon_signed_rank(d, method="exact")[1]
    p_norm = wilcoxon_signed_rank(d, method="approx")[1]
    assert abs(p_exact - p_norm) < 0.05


def test_wilcoxon_large_sample_against_scipy():
    from scipy.stats import wilcoxon
    d = np.random.default_rng(5).normal(0.1, 1.0, size=400)
    d[:20] = np.round(d[:20], 1)
    stat, p = wilcoxon_signed_rank(d)
    ref = wilcoxon(d, correction=True, method="approx")
    assert stat == pytest.approx(ref.statistic)
    assert p == pytest.approx(ref.pvalue, rel=1e-6)


# -- histograms and summaries ---------------------------------------------------------

def test_histogram():
    edges, counts, dens = velocity_histogram(np.full(100, 0.05), 50, (-0.3, 0.3))
    assert np.count_nonzero(counts) == 1 and counts.sum() == 100
    v = np.random.default_rng(2).normal(0, 0.1, 5000)
    edges, counts, dens = velocity_histogram(v, 40, (-0.2, 0.2))
    assert counts.sum() == 5000
    assert np.sum(dens * np.diff(edges)) == pytest.approx(1.0, abs=1e-12)
    assert default_velocity_range("two_stream", 0.07) == pytest.approx((-0.21, 0.21))
    assert default_velocity_range("thermal", 0.05) == pytest.approx((-0.2, 0.2))


def test_summarize_errors():
    s = summarize_errors(np.full(20, 0.3))
    assert s.median == s.q1 == s.q3 == 0.3 and s.outliers == []
    s = summarize_errors([1, 2, 3, 4, 5])
    assert (s.median, s.q1, s.q3) == (3, 2, 4)
    x = np.random.default_rng(3).lognormal(size=101)
    s = summarize_errors(x)
    srt = np.sort(x)
    assert s.median == srt[50]
    assert s.q1 == pytest.approx(srt[25]) and s.q3 == pytest.approx(srt[75])
    fence = s.q3 + 1.5 * (s.q3 - s.q1)
    assert s.outliers == sorted(v for v in x if v > fence or v < s.q1 - 1.5 * (s.q3 - s.q1))
    assert s.whisker_high == max(v for v in x if v <= fence)


def test_growth_summary():
    dt = 0.05
    t = np.arange(600) * dt
    rate, sat = growth_summary(1e-4 * np.exp(0.37 * t), dt)
    assert rate == pytest.approx(0.37, rel=1e-2)
    rate, sat = growth_summary(np.full(300, 0.2), dt)
    assert abs(rate) < 1e-12 and sat == pytest.approx(0.2)
    with pytest.raises(MetricError):
        growth_summary(np.array([1.0, 0.0, 2.0]), dt)


@pytest.mark.slow
def test_growth_summary_on_baseline_run():
    from hybrid_pic.pic import SimConfig, run_simulation
    # a smaller seed perturbation than the default, so the initial field sits
    # well below the saturated one
    cfg = SimConfig(v0=0.1, perturbation_amplitude=1e-4)
    amp = np.asarray(run_simulation(cfg).diagnostics.max_abs_E)
    rate, sat = growth_summary(amp, cfg.dt)
    assert rate > 0
    assert sat / amp[0] >= 100


def test_growth_decades_on_oscillating_signal():
    t = np.arange(1000) * 0.05
    amp = np.minimum(1e-4 * np.exp(0.3 * t), 0.1) * np.abs(np.cos(t)) + 1e-12
    env = field_envelope(amp, 64)
    assert np.all(env >= amp)
    assert growth_decades(amp) == pytest.approx(3.0, abs=0.15)
