"""Tests for gasketsim.stats."""

import math

import numpy as np
import pytest

from gasketsim.stats import (
    binomial_ci,
    correlation_matrix,
    ks_normal,
    mean_stderr,
    ratio_stderr,
    summarize_column,
)


class TestBinomialCi:
    """Exact intervals for indicator frequencies."""

    def test_contains_the_estimate(self):
        low, high = binomial_ci(5, 10)
        assert low < 0.5 < high

    def test_zero_successes_start_at_zero(self):
        low, high = binomial_ci(0, 50)
        assert low == 0.0
        assert 0.0 < high < 0.2

    def test_no_trials(self):
        assert binomial_ci(0, 0) == (0.0, 1.0)

    def test_coverage_of_rare_indicator(self):
        """Bernoulli(1/256) frequencies fall inside their 99% intervals about 99% of the time."""
        rng = np.random.default_rng(256)
        p = 1 / 256
        covered = 0
        for _ in range(200):
            successes = int(rng.binomial(4096, p))
            low, high = binomial_ci(successes, 4096, confidence=0.99)
            covered += low <= p <= high
        assert covered >= 194

    def test_higher_confidence_is_wider(self):
        narrow = binomial_ci(30, 100, confidence=0.9)
        wide = binomial_ci(30, 100, confidence=0.999)
        assert wide[0] < narrow[0]
        assert wide[1] > narrow[1]


class TestMoments:
    """Means, standard errors and ratios."""

    def test_mean_stderr(self):
        mean, se = mean_stderr(np.array([1.0, 2.0, 3.0, 4.0]))
        assert mean == pytest.approx(2.5)
        assert se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2.0)

    def test_single_value_has_no_stderr(self):
        mean, se = mean_stderr(np.array([7.0]))
        assert mean == 7.0
        assert math.isnan(se)

    def test_empty(self):
        mean, se = mean_stderr(np.array([]))
        assert math.isnan(mean) and math.isnan(se)

    def test_ratio_stderr(self):
        assert ratio_stderr(2.0, 0.1, 4.0, 0.2) == pytest.approx(0.5 * math.sqrt(0.0025 + 0.0025))

    def test_ratio_stderr_zero_denominator(self):
        assert math.isnan(ratio_stderr(1.0, 0.1, 0.0, 0.1))


class TestCorrelation:
    """Pairwise correlations of indicator columns."""

    def test_identical_and_opposite_columns(self):
        x = np.array([0, 1, 0, 1, 1], dtype=float)
        corr = correlation_matrix(np.stack([x, x, 1 - x], axis=1))
        assert corr[0][1] == pytest.approx(1.0)
        assert corr[0][2] == pytest.approx(-1.0)

    def test_constant_column_gives_none(self):
        x = np.array([0, 1, 0, 1], dtype=float)
        corr = correlation_matrix(np.stack([x, np.zeros(4)], axis=1))
        assert corr[0][0] == pytest.approx(1.0)
        assert corr[0][1] is None
        assert corr[1][1] is None

    def test_single_column(self):
        assert correlation_matrix(np.array([[0.0], [1.0]])) == [[pytest.approx(1.0)]]


class TestSummaries:
    """Column summaries written to summary.json."""

    def test_numeric_column(self):
        s = summarize_column(np.array([1.0, 3.0, np.nan, 5.0]))
        assert s.count == 3
        assert s.mean == pytest.approx(3.0)
        assert s.median == 3.0
        assert s.minimum == 1.0
        assert s.maximum == 5.0
        assert s.successes is None

    def test_indicator_column(self):
        s = summarize_column(np.array([1.0, 0.0, 1.0, 1.0]), indicator=True)
        assert s.successes == 3
        assert s.ci_low < 0.75 < s.ci_high

    def test_empty_column(self):
        s = summarize_column(np.array([np.nan]))
        assert s.count == 0
        assert s.mean is None

    def test_single_value_stderr_is_dropped(self):
        assert summarize_column(np.array([2.0])).stderr is None

    def test_ks_distance_of_normal_sample(self):
        sample = np.random.default_rng(0).standard_normal(5000)
        assert ks_normal(sample) < 0.03
        assert ks_normal(sample + 1.0) > 0.3
