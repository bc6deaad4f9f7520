"""Test the statistics policy behind experiment verdicts."""
import math

import pytest

from sdlalab.stats import (
    Interval,
    Verdict,
    chi_square_homogeneity,
    combine,
    correlation_interval,
    loglog_slope,
    mean_interval,
    non_increasing_verdict,
    two_proportion_z,
    wilson_interval,
    z_quantile,
)


class TestIntervals:
    """Test proportion, mean and correlation intervals."""

    def test_z_quantile(self):
        assert z_quantile(0.95) == pytest.approx(1.959964, abs=1e-5)

    def test_wilson_zero_successes(self):
        iv = wilson_interval(0, 20)
        assert iv.estimate == 0.0
        assert iv.lo == 0.0
        assert 0.0 < iv.hi < 0.25

    def test_wilson_all_successes(self):
        iv = wilson_interval(20, 20)
        assert iv.hi == 1.0
        assert 0.75 < iv.lo < 1.0

    def test_wilson_contains_estimate(self):
        iv = wilson_interval(37, 100)
        assert iv.lo < 0.37 < iv.hi

    def test_wilson_no_trials(self):
        iv = wilson_interval(0, 0)
        assert math.isnan(iv.estimate)
        assert (iv.lo, iv.hi) == (0.0, 1.0)

    def test_mean_interval(self):
        iv, se = mean_interval([1.0, 2.0, 3.0, 4.0])
        assert iv.estimate == pytest.approx(2.5)
        assert se == pytest.approx(math.sqrt(5.0 / 12.0))
        assert iv.lo < 2.5 < iv.hi

    def test_mean_of_one_value(self):
        _, se = mean_interval([1.0])
        assert se == math.inf

    def test_correlation_of_constant_is_nan(self):
        iv = correlation_interval([1, 1, 1, 1, 1], [0, 1, 0, 1, 0])
        assert math.isnan(iv.estimate)
        assert (iv.lo, iv.hi) == (-1.0, 1.0)

    def test_correlation_interval_contains_estimate(self):
        x = [0, 1, 0, 1, 1, 0, 1, 0, 0, 1]
        y = [0, 1, 1, 1, 0, 0, 1, 0, 0, 1]
        iv = correlation_interval(x, y)
        assert -1.0 <= iv.lo <= iv.estimate <= iv.hi <= 1.0

    def test_overlaps(self):
        assert Interval(0.5, 0.4, 0.6).overlaps(Interval(0.7, 0.55, 0.8))
        assert not Interval(0.5, 0.4, 0.6).overlaps(Interval(0.7, 0.65, 0.8))


class TestComparisons:
    """Test two-sample comparisons."""

    def test_equal_proportions(self):
        z, se = two_proportion_z(5, 10, 50, 100)
        assert z == 0.0
        assert se > 0.0

    def test_separated_proportions(self):
        z, _ = two_proportion_z(90, 100, 10, 100)
        assert z > 5.0

    def test_degenerate_proportions(self):
        z, se = two_proportion_z(0, 10, 0, 10)
        assert z == 0.0
        assert se == 0.0

    def test_chi_square_same_law(self):
        assert chi_square_homogeneity({"a": 50, "b": 50}, {"a": 50, "b": 50}) == pytest.approx(1.0)

    def test_chi_square_different_laws(self):
        assert chi_square_homogeneity({"a": 100}, {"b": 100}) < 1e-6

    def test_chi_square_rare_categories_pooled(self):
        p = chi_square_homogeneity({"a": 1, "b": 1, "c": 40}, {"c": 40, "d": 2})
        assert 0.0 <= p <= 1.0

    def test_chi_square_single_category(self):
        assert chi_square_homogeneity({"a": 10}, {"a": 12}) == 1.0


class TestTrends:
    """Test slopes and trend verdicts."""

    def test_inverse_square_slope(self):
        xs = [1, 2, 4, 8, 16]
        assert loglog_slope(xs, [1.0 / x**2 for x in xs]) == pytest.approx(-2.0)

    def test_slope_ignores_zeros(self):
        assert loglog_slope([1, 2, 4], [0.0, 0.5, 0.25]) == pytest.approx(-1.0)
        assert math.isnan(loglog_slope([1, 2], [0.0, 0.0]))

    def test_clear_decrease_passes(self):
        ivs = [Interval(0.8, 0.7, 0.9), Interval(0.5, 0.4, 0.6), Interval(0.2, 0.1, 0.3)]
        assert non_increasing_verdict(ivs) is Verdict.PASS

    def test_clear_increase_fails(self):
        ivs = [Interval(0.2, 0.1, 0.3), Interval(0.8, 0.7, 0.9)]
        assert non_increasing_verdict(ivs) is Verdict.FAIL

    def test_overlap_is_inconclusive(self):
        ivs = [Interval(0.5, 0.3, 0.7), Interval(0.45, 0.25, 0.65)]
        assert non_increasing_verdict(ivs) is Verdict.INCONCLUSIVE
        assert non_increasing_verdict(ivs, require_decrease=False) is Verdict.PASS

    def test_too_few_points(self):
        assert non_increasing_verdict([Interval(0.5, 0.4, 0.6)]) is Verdict.INCONCLUSIVE

    def test_combine(self):
        assert combine([]) is Verdict.PASS
        assert combine([Verdict.PASS, Verdict.INCONCLUSIVE]) is Verdict.INCONCLUSIVE
        assert combine([Verdict.INCONCLUSIVE, Verdict.FAIL]) is Verdict.FAIL
