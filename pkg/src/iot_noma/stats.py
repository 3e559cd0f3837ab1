"""Fairness, confidence intervals, significance tests and convergence detection."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special, stats


def jain(values) -> float:
    """Jain's fairness index (sum x)^2 / (n sum x^2); 1 for an empty or all-zero input."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        return 1.0
    sq = float(np.sum(x * x))
    if sq == 0.0:
        return 1.0
    return float(np.sum(x) ** 2 / (x.size * sq))


def confidence_interval_95(samples) -> tuple[float, float]:
    """Mean and Student-t 95% half-width (n-1 degrees of freedom)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("need at least one sample")
    mean = float(x.mean())
    if x.size == 1:
        return mean, 0.0
    sd = float(x.std(ddof=1))
    return mean, float(stats.t.ppf(0.975, x.size - 1) * sd / math.sqrt(x.size))


def t_two_sided_p(t: float, df: int) -> float:
    """Two-sided tail probability of Student's t via the regularized incomplete beta."""
    if math.isinf(t):
        return 0.0
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: int
    degenerate: bool = False


def paired_t_test(a, b) -> TTestResult:
    """Paired t-test of a - b, pairs matched by position (seed)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("paired_t_test needs two equal-length 1-D samples with n >= 2")
    d = a - b
    n = d.size
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, n - 1, degenerate=True)
        return TTestResult(math.copysign(math.inf, mean), 0.0, n - 1, degenerate=True)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t, t_two_sided_p(t, n - 1), n - 1)


def cohens_d(a, b) -> float:
    """(mean(a) - mean(b)) / pooled sample standard deviation."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ValueError("cohens_d needs at least two samples per group")
    diff = float(a.mean() - b.mean())
    pooled = math.sqrt(((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2))
    if pooled == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return diff / pooled


def moving_average(series, window: int = 50) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` entries average what exists so far."""
    x = np.asarray(series, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def convergence_episode(series, window: int = 50, tol: float = 0.01):
    """First 1-based episode whose trailing ``window`` moving-average values vary by < tol.

    Variation is (max - min) / |mean| of the moving average over the last
    ``window`` episodes. Returns None if the series never settles.
    """
    ma = moving_average(series, window)
    for e in range(window, ma.size + 1):
        seg = ma[e - window : e]
        spread = float(seg.max() - seg.min())
        scale = abs(float(seg.mean()))
        if spread == 0.0 or (scale > 0 and spread / scale < tol):
            return e
    return None


def episode_reaching_fraction(series, fraction: float = 0.9, tail: int = 100):
    """First 1-based episode whose value reaches ``fraction`` of the final-``tail`` mean."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        return None
    final = float(x[-tail:].mean())
    # for negative finals "90%" means within 10% of |final| below it
    target = final - (1.0 - fraction) * abs(final)
    hit = np.nonzero(x >= target)[0]
    return int(hit[0]) + 1 if hit.size else None


@dataclass
class MetricSummary:
    mean: float
    std: float
    ci95: float

    def as_dict(self):
        return asdict(self)


def summarize(samples) -> MetricSummary:
    x = np.asarray(samples, dtype=float)
    mean, half = confidence_interval_95(x)
    return MetricSummary(mean, float(x.std(ddof=1)) if x.size > 1 else 0.0, half)
