"""Summary statistics for experiment columns."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy import stats

from gasketsim.types import StatSummary


def binomial_ci(successes: int, trials: int, confidence: float = 0.99) -> tuple[float, float]:
    """Exact (Clopper-Pearson) confidence interval for a binomial proportion."""
    if trials == 0:
        return (0.0, 1.0)
    ci = stats.binomtest(successes, trials).proportion_ci(
        confidence_level=confidence, method="exact"
    )
    return (float(ci.low), float(ci.high))


def mean_stderr(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        return (math.nan, math.nan)
    if len(values) == 1:
        return (float(values[0]), math.nan)
    return (float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values))))


def ratio_stderr(num: float, num_se: float, den: float, den_se: float) -> float:
    """Delta-method standard error of num/den for independent estimates."""
    if den == 0 or num == 0:
        return math.nan
    ratio = num / den
    return abs(ratio) * math.sqrt((num_se / num) ** 2 + (den_se / den) ** 2)


def ks_normal(sample: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance to the standard normal."""
    return float(stats.kstest(np.asarray(sample, dtype=np.float64), "norm").statistic)


def correlation_matrix(columns: np.ndarray) -> list[list[Optional[float]]]:
    """Pairwise Pearson correlations of the columns of a 2-D array.

    Entries involving a constant column are ``None``.
    """
    columns = np.asarray(columns, dtype=np.float64)
    k = columns.shape[1]
    std = columns.std(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(columns, rowvar=False) if k > 1 else np.ones((1, 1))
    corr = np.atleast_2d(corr)
    out: list[list[Optional[float]]] = []
    for i in range(k):
        row: list[Optional[float]] = []
        for j in range(k):
            if std[i] == 0 or std[j] == 0:
                row.append(None)
            else:
                row.append(float(corr[i, j]))
        out.append(row)
    return out


def _finite(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


def summarize_column(
    values: np.ndarray, indicator: bool = False, confidence: float = 0.99
) -> StatSummary:
    """Mean, standard error, median and range; exact CI for indicator columns."""
    values = np.asarray(values, dtype=np.float64)
    values = values[~np.isnan(values)]
    count = len(values)
    if count == 0:
        return StatSummary(count=0)
    mean, stderr = mean_stderr(values)
    summary = StatSummary(
        count=count,
        mean=_finite(mean),
        stderr=_finite(stderr),
        median=float(np.median(values)),
        minimum=float(values.min()),
        maximum=float(values.max()),
    )
    if indicator:
        successes = int(values.sum())
        low, high = binomial_ci(successes, count, confidence)
        summary.successes = successes
        summary.ci_low = low
        summary.ci_high = high
    return summary
