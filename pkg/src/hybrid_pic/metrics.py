"""Error metrics and statistical comparisons for field predictions and runs."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import maximum_filter1d
from scipy.special import ndtr
from scipy.stats import rankdata

MRAE_DEFINITION = "sum|E_pred - E_true| / sum|E_true| per time step"


class MetricError(ValueError):
    pass


def mrae(e_pred, e_true) -> float:
    """Aggregate relative absolute error of one field snapshot."""
    e_pred, e_true = np.asarray(e_pred, float), np.asarray(e_true, float)
    denom = np.sum(np.abs(e_true))
    if denom == 0.0:
        raise MetricError("MRAE undefined for an identically zero reference field")
    return float(np.sum(np.abs(e_pred - e_true)) / denom)


def mrae_series(e_pred, e_true) -> np.ndarray:
    """Per-row MRAE of two ``(steps, Ng)`` field histories."""
    e_pred, e_true = np.asarray(e_pred, float), np.asarray(e_true, float)
    denom = np.sum(np.abs(e_true), axis=-1)
    if np.any(denom == 0.0):
        raise MetricError("MRAE undefined for an identically zero reference field")
    return np.sum(np.abs(e_pred - e_true), axis=-1) / denom


def energy_distance(u, v) -> float:
    """sqrt(2 E|X-Y| - E|X-X'| - E|Y-Y'|) for 1-D samples.

    Uses the identity with the squared CDF difference,
    D^2 = 2 * integral (U(x) - V(x))^2 dx, evaluated between sorted samples.
    """
    u = np.sort(np.asarray(u, float).ravel())
    v = np.sort(np.asarray(v, float).ravel())
    if u.size == 0 or v.size == 0:
        raise MetricError("energy distance needs two non-empty samples")
    allv = np.concatenate([u, v])
    allv.sort()
    widths = np.diff(allv)
    cu = np.searchsorted(u, allv[:-1], side="right") / u.size
    cv = np.searchsorted(v, allv[:-1], side="right") / v.size
    return float(np.sqrt(2.0 * np.sum((cu - cv) ** 2 * widths)))


def wilcoxon_signed_rank(diffs, method: str = "auto", correction: bool = True):
    """Two-sided Wilcoxon signed-rank test on paired differences.

    Zero differences are dropped. The statistic is ``min(W+, W-)`` over
    average ranks of ``|d|``. ``method='auto'`` enumerates all sign flips for
    n <= 12 and otherwise uses the normal approximation with tie variance
    correction (and a 0.5 continuity correction when ``correction``).
    Returns ``(statistic, p_value)``.
    """
    d = np.asarray(diffs, float).ravel()
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        raise MetricError("all differences are zero")
    if n < 6:
        raise MetricError(f"need at least 6 non-zero differences, got {n}")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    total = n * (n + 1) / 2.0
    stat = min(w_plus, total - w_plus)
    if method == "auto":
        method = "exact" if n <= 12 else "approx"
    if method == "exact":
        signs = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
        w_all = signs @ ranks
        p = 2.0 * np.mean(w_all <= stat + 1e-9)
    elif method == "approx":
        mean = total / 2.0
        _, counts = np.unique(np.abs(d), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(counts**3 - counts) / 48.0
        cc = 0.5 if correction else 0.0
        z = (stat - mean + cc) / np.sqrt(var)
        z = min(z, 0.0)
        p = 2.0 * ndtr(z)
    else:
        raise ValueError(f"unknown method {method!r}")
    return stat, float(min(1.0, p))


def velocity_histogram(v, n_bins: int = 50, vrange=None):
    """Uniform-bin histogram of particle velocities.

    Values outside ``vrange`` are counted in the edge bins so the counts
    always sum to the number of particles. Returns ``(edges, counts, density)``
    with the density integrating to one.
    """
    v = np.asarray(v, float).ravel()
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if vrange is None:
        lo, hi = float(v.min()), float(v.max())
    else:
        lo, hi = map(float, vrange)
    if hi <= lo:
        lo, hi = lo - 0.5, lo + 0.5
    edges = np.linspace(lo, hi, n_bins + 1)
    counts, _ = np.histogram(np.clip(v, lo, hi), bins=edges)
    density = counts / (v.size * np.diff(edges))
    return edges, counts, density


def default_velocity_range(scenario: str, drift: float):
    scale = 3.0 if scenario == "two_stream" else 4.0
    return (-scale * drift, scale * drift)


@dataclass
class ErrorSummary:
    n: int
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: list

    def as_dict(self):
        return asdict(self)


def summarize_errors(values) -> ErrorSummary:
    """Boxplot statistics; quartiles use linear interpolation (numpy default)."""
    x = np.asarray(values, float).ravel()
    if x.size == 0:
        raise MetricError("empty error series")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    outliers = np.sort(x[(x < lo_fence) | (x > hi_fence)])
    return ErrorSummary(
        n=int(x.size), median=float(med), q1=float(q1), q3=float(q3),
        whisker_low=float(inside.min()), whisker_high=float(inside.max()),
        outliers=[float(o) for o in outliers],
    )


def growth_summary(amplitude, dt: float, window: int = 100, tail_fraction: float = 0.2):
    """Return (growth_rate, saturation_level) of a field-amplitude history.

    The growth rate is the steepest least-squares slope of log(amplitude)
    against time over any ``window`` consecutive steps; the saturation level
    is the mean amplitude over the last ``tail_fraction`` of the run.
    """
    a = np.asarray(amplitude, float).ravel()
    if a.size < 2:
        raise MetricError("need at least two samples")
    if np.any(a <= 0.0):
        raise MetricError("amplitudes must be positive to fit a growth rate")
    w = min(window, a.size)
    y = np.lib.stride_tricks.sliding_window_view(np.log(a), w)
    tc = (np.arange(w) - (w - 1) / 2.0) * dt
    slopes = (y @ tc) / np.sum(tc * tc)
    rate = float(np.max(slopes))
    tail = max(1, int(round(tail_fraction * a.size)))
    return rate, float(np.mean(a[-tail:]))


def field_envelope(amplitude, window: int = 64) -> np.ndarray:
    """Running maximum over ``window`` steps centred on each step.

    Removes the zero crossings of the plasma oscillation so growth can be
    read off a smooth curve.
    """
    a = np.asarray(amplitude, float).ravel()
    return maximum_filter1d(a, size=max(1, int(window)), mode="nearest")


def growth_decades(amplitude, window: int = 64) -> float:
    """log10 of envelope peak over the envelope minimum that precedes it."""
    env = field_envelope(amplitude, window)
    if np.any(env <= 0.0):
        raise MetricError("amplitudes must be positive")
    k = int(np.argmax(env))
    return float(np.log10(env[k] / env[: k + 1].min()))
