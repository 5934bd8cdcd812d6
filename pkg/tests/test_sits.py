import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agrimon.errors import InsufficientData, InvalidBounds, InvalidWindow, MissingDaily
from agrimon.sits import (
    FixedStepSeries,
    TimeSeries,
    accumulate_window,
    cumulative_integral,
    interpolate_fixed_step,
    month_third_anchors,
    resample_window_mean,
    rolling_median,
    slope_series,
    threshold_filter,
)


def fs(values, start=0, step=5):
    return FixedStepSeries(start + step * np.arange(len(values)), values)


class TestInterpolateFixedStep:
    def test_symmetric_weights(self):
        out = interpolate_fixed_step(TimeSeries([12, 18], [0.4, 0.6]), [15])
        assert out.values[0] == pytest.approx(0.5, abs=1e-15)

    def test_lone_observation(self):
        out = interpolate_fixed_step(TimeSeries([14, 40], [0.7, 0.1]), [15])
        assert out.values[0] == 0.7

    def test_linear_fill_of_empty_anchor(self):
        # phase 1 fills 15 -> 0.2 and 35 -> 0.6; anchor 25 has no observation
        out = interpolate_fixed_step(TimeSeries([15, 35], [0.2, 0.6]), [15, 25, 35], window_radius=3)
        expected_mid = 0.2 + (0.6 - 0.2) * (25 - 15) / (35 - 15)
        np.testing.assert_allclose(out.values, [0.2, expected_mid, 0.6], atol=1e-15)

    def test_weighted_mean_against_hand_weights(self):
        out = interpolate_fixed_step(TimeSeries([10, 13, 30], [1.0, 4.0, 0.0]), [12])
        w1, w2 = 1 / 3, 1 / 2
        assert out.values[0] == pytest.approx((w1 * 1 + w2 * 4) / (w1 + w2))

    def test_edges_take_nearest(self):
        out = interpolate_fixed_step(TimeSeries([50, 60], [0.3, 0.5]), [10, 50, 60, 100], window_radius=1)
        np.testing.assert_array_equal(out.values, [0.3, 0.3, 0.5, 0.5])

    def test_insufficient(self):
        with pytest.raises(InsufficientData):
            interpolate_fixed_step(TimeSeries([1, 2], [0.5, None]), [1, 2])

    def test_month_third_windows(self):
        anchors, windows = month_third_anchors(2021, months=[2])
        np.testing.assert_array_equal(anchors, [36, 46, 56])
        assert windows == [(32, 41), (42, 51), (52, 59)]
        ts = TimeSeries([33, 41, 55], [0.1, 0.3, 0.9])
        out = interpolate_fixed_step(ts, anchors, windows=windows)
        w = 1 / (1 + np.array([3, 5]))
        assert out.values[0] == pytest.approx((w[0] * 0.1 + w[1] * 0.3) / w.sum())
        assert out.values[2] == pytest.approx(0.9)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 200), st.floats(-1, 1)), min_size=2, max_size=30, unique_by=lambda p: p[0]))
    def test_no_nulls_and_exact_at_observed_anchors(self, pts):
        pts = sorted(pts)
        ts = TimeSeries.from_points(pts)
        anchors = np.arange(0, 201, 10)
        out = interpolate_fixed_step(ts, anchors)
        assert not out.has_nulls
        lookup = dict(pts)
        for a, v in zip(anchors, out.values):
            if a in lookup:
                assert v == lookup[a]


class TestResample:
    def test_bin_mean(self):
        out = resample_window_mean(TimeSeries([0, 5, 12], [1.0, 3.0, 7.0]), step=10)
        np.testing.assert_array_equal(out.values, [2.0, 7.0])
        np.testing.assert_array_equal(out.anchors, [0, 10])

    def test_one_per_bin_identity(self):
        vals = [0.1, 0.5, 0.2, 0.9]
        out = resample_window_mean(TimeSeries([0, 10, 20, 30], vals), step=10)
        np.testing.assert_array_equal(out.values, vals)

    def test_empty_middle_bin(self):
        out = resample_window_mean(TimeSeries([0, 20], [2.0, 6.0]), step=10)
        np.testing.assert_array_equal(out.values, [2.0, 4.0, 6.0])

    def test_all_null(self):
        with pytest.raises(InsufficientData):
            resample_window_mean(TimeSeries([0, 1], [None, None]))


class TestRollingMedian:
    def test_constant(self):
        np.testing.assert_array_equal(rolling_median(fs([3.0] * 6), 3).values, [3.0] * 6)

    def test_center_spike(self):
        assert rolling_median(fs([0.0, 100.0, 0.0]), 3).values[1] == 0.0

    def test_ramp_with_spike(self):
        clean = np.linspace(0, 1, 11)
        noisy = clean.copy()
        noisy[5] = 5.0
        out = rolling_median(fs(noisy), 3).values
        assert out.max() <= 1.0
        far = np.abs(np.arange(11) - 5) > 1
        np.testing.assert_array_equal(out[far], clean[far])
        assert np.abs(out - clean).max() <= 0.1 + 1e-12

    def test_even_window(self):
        with pytest.raises(InvalidWindow):
            rolling_median(fs([1.0, 2.0, 3.0]), 2)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=25), st.sampled_from([1, 3, 5, 7]))
    def test_idempotent_on_monotone(self, vals, w):
        vals = sorted(vals)
        if w > len(vals):
            return
        once = rolling_median(fs(vals), w)
        np.testing.assert_array_equal(rolling_median(once, w).values, once.values)


class TestThresholdFilter:
    def test_identity(self):
        np.testing.assert_array_equal(threshold_filter(fs([0.1, 0.2]), 0, 1).values, [0.1, 0.2])

    def test_out_of_range_to_null(self):
        out = threshold_filter(fs([0.1, 1.5, -0.2]), 0, 1).values
        assert out[0] == 0.1 and np.isnan(out[1]) and np.isnan(out[2])

    def test_bad_bounds(self):
        with pytest.raises(InvalidBounds):
            threshold_filter(fs([0.1]), 1, 0)


class TestSlope:
    def test_hand_example(self):
        np.testing.assert_array_equal(slope_series(fs([0.0, 5.0, 10.0])).values, [1.0, 1.0])

    def test_linear_and_constant(self):
        np.testing.assert_allclose(slope_series(fs(0.3 * 5 * np.arange(10))).values, 0.3)
        np.testing.assert_array_equal(slope_series(fs([2.0] * 5), s=2).values, [0.0] * 3)

    def test_too_short(self):
        with pytest.raises(InsufficientData):
            slope_series(fs([1.0, 2.0]), s=2)


class TestCumulativeIntegral:
    def test_rectangle(self):
        out = cumulative_integral(FixedStepSeries(np.arange(100, 111), np.ones(11)))
        assert out.values[-1] == 10.0

    def test_zero(self):
        out = cumulative_integral(FixedStepSeries(np.arange(100, 111), np.zeros(11)))
        assert (out.values == 0).all()

    def test_ramp(self):
        out = cumulative_integral(FixedStepSeries(np.arange(100, 111), np.linspace(0, 1, 11)))
        assert out.values[-1] == pytest.approx(5.0, abs=1e-12)

    def test_drops_anchors_before_start(self):
        out = cumulative_integral(FixedStepSeries([90, 100, 110], [5.0, 1.0, 1.0]))
        np.testing.assert_array_equal(out.anchors, [100, 110])
        np.testing.assert_array_equal(out.values, [0.0, 10.0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 10), min_size=2, max_size=30))
    def test_monotone_and_slope_recovery(self, vals):
        series = FixedStepSeries(100 + 5 * np.arange(len(vals)), vals)
        cum = cumulative_integral(series)
        assert (np.diff(cum.values) >= 0).all()
        rec = slope_series(cum).values
        v = np.asarray(vals)
        # recovered value is the trapezoid mean of neighbouring samples
        np.testing.assert_allclose(rec, (v[1:] + v[:-1]) / 2, rtol=1e-9, atol=1e-9)
        bound = 0.5 * np.abs(np.diff(v)).max() + 1e-9
        assert np.abs(rec - v[1:]).max() <= bound


class TestAccumulate:
    def test_constant(self):
        out = accumulate_window(TimeSeries(np.arange(1, 15), [2.0] * 14))
        assert (out.values == 14.0).all()
        assert out.days[0] == 7

    def test_identity_w1(self):
        vals = np.random.default_rng(0).random(9)
        out = accumulate_window(TimeSeries(np.arange(9), vals), w=1)
        np.testing.assert_array_equal(out.values, vals)

    def test_one_to_seven(self):
        out = accumulate_window(TimeSeries(np.arange(1, 8), np.arange(1, 8, dtype=float)))
        assert out.values.tolist() == [28.0]

    def test_gap(self):
        with pytest.raises(MissingDaily):
            accumulate_window(TimeSeries([1, 2, 3, 5, 6, 7, 8, 9], [1.0] * 8))
        with pytest.raises(MissingDaily):
            accumulate_window(TimeSeries(np.arange(1, 9), [1.0, None] + [1.0] * 6))
