"""Satellite image time-series preparation.

Raw per-parcel traces (:class:`TimeSeries`) are irregular and may contain
nulls (NaN). :class:`FixedStepSeries` holds values on caller-chosen anchor
days. All functions are pure and return new objects.
"""
from __future__ import annotations

import calendar
import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientData, InvalidBounds, InvalidWindow, MissingDaily


def _as_float_array(values) -> np.ndarray:
    return np.array([np.nan if v is None else v for v in values], dtype=np.float64)


@dataclass(frozen=True)
class TimeSeries:
    days: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        days = np.asarray(self.days, dtype=np.float64)
        vals = _as_float_array(self.values)
        if days.shape != vals.shape or days.ndim != 1:
            raise ValueError("days and values must be 1-D and of equal length")
        if np.any(np.diff(days) <= 0):
            raise ValueError("days must be strictly increasing")
        object.__setattr__(self, "days", days)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_points(cls, points) -> TimeSeries:
        points = list(points)
        return cls([p[0] for p in points], [p[1] for p in points])

    def __len__(self):
        return self.days.size

    def valid(self) -> TimeSeries:
        ok = ~np.isnan(self.values)
        return TimeSeries(self.days[ok], self.values[ok])


@dataclass(frozen=True)
class FixedStepSeries:
    anchors: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=np.float64)
        vals = _as_float_array(self.values)
        if anchors.shape != vals.shape or anchors.ndim != 1:
            raise ValueError("anchors and values must be 1-D and of equal length")
        if np.any(np.diff(anchors) <= 0):
            raise ValueError("anchors must be strictly increasing")
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.anchors.size

    @property
    def has_nulls(self) -> bool:
        return bool(np.isnan(self.values).any())

    def value_at(self, day: float) -> float:
        return float(np.interp(day, self.anchors, self.values))

    def fill(self) -> FixedStepSeries:
        """Linearly fill nulls between valid anchors, nearest value at the edges."""
        return FixedStepSeries(self.anchors, _linear_fill(self.anchors, self.values))


def _linear_fill(anchors: np.ndarray, values: np.ndarray) -> np.ndarray:
    ok = ~np.isnan(values)
    if not ok.any():
        raise InsufficientData("no valid value to fill from")
    # np.interp extends with the nearest valid value beyond the ends
    return np.interp(anchors, anchors[ok], values[ok])


def month_third_anchors(year: int = 2021, months=range(1, 13)):
    """Anchors on the 5th, 15th and 25th of each month with their windows.

    Returns ``(anchors, windows)`` in day-of-year; windows cover the 1st-10th,
    11th-20th and 21st-last day of each month.
    """
    anchors, windows = [], []
    for m in months:
        last = calendar.monthrange(year, m)[1]
        for day, lo, hi in ((5, 1, 10), (15, 11, 20), (25, 21, last)):
            doy = lambda d: dt.date(year, m, d).timetuple().tm_yday  # noqa: E731
            anchors.append(doy(day))
            windows.append((doy(lo), doy(hi)))
    return np.array(anchors, dtype=np.float64), windows


def interpolate_fixed_step(ts: TimeSeries, anchors, window_radius: float = 5, windows=None) -> FixedStepSeries:
    """Map an irregular series onto fixed anchors.

    Each anchor with observations inside its window (``anchor +/- window_radius``
    or the explicit ``windows[i] = (lo, hi)``, inclusive) takes the
    inverse-distance weighted mean with weights ``1 / (1 + |day - anchor|)``; an
    observation exactly on the anchor day is passed through unchanged. Anchors
    left empty are linearly interpolated between filled neighbours and take the
    nearest filled value beyond the first/last one.
    """
    obs = ts.valid()
    if len(obs) < 2:
        raise InsufficientData("need at least 2 non-null observations")
    anchors = np.asarray(anchors, dtype=np.float64)
    if windows is not None and len(windows) != anchors.size:
        raise ValueError("one window per anchor is required")
    vals = np.full(anchors.size, np.nan)
    for i, a in enumerate(anchors):
        if windows is None:
            lo, hi = a - window_radius, a + window_radius
        else:
            lo, hi = windows[i]
        sel = (obs.days >= lo) & (obs.days <= hi)
        if not sel.any():
            continue
        days, v = obs.days[sel], obs.values[sel]
        exact = days == a
        if exact.any():
            vals[i] = v[exact][0]
            continue
        w = 1.0 / (1.0 + np.abs(days - a))
        vals[i] = np.sum(w * v) / np.sum(w)
    if np.isnan(vals).all():
        raise InsufficientData("no observation falls inside any anchor window")
    return FixedStepSeries(anchors, _linear_fill(anchors, vals))


def resample_window_mean(ts: TimeSeries, step: float = 10, start: float | None = None) -> FixedStepSeries:
    """Mean of non-null values in consecutive ``step``-day bins.

    Bins are ``[start + k*step, start + (k+1)*step)`` starting at the first
    observation day unless ``start`` is given; each bin is labelled by its
    first day. Empty bins are linearly filled.
    """
    obs = ts.valid()
    if len(obs) == 0:
        raise InsufficientData("series has no non-null value")
    start = obs.days[0] if start is None else float(start)
    n_bins = int(np.floor((obs.days[-1] - start) / step)) + 1
    idx = np.floor((obs.days - start) / step).astype(int)
    keep = idx >= 0
    sums = np.bincount(idx[keep], weights=obs.values[keep], minlength=n_bins)
    counts = np.bincount(idx[keep], minlength=n_bins)
    vals = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    anchors = start + step * np.arange(n_bins)
    return FixedStepSeries(anchors, _linear_fill(anchors, vals))


def rolling_median(fs: FixedStepSeries, w: int) -> FixedStepSeries:
    """Centered running median; the window shrinks symmetrically near the ends."""
    if w % 2 == 0 or w < 1:
        raise InvalidWindow(f"window must be odd and positive, got {w}")
    n = len(fs)
    if w > n:
        raise InvalidWindow(f"window {w} longer than series ({n})")
    h = w // 2
    out = np.empty(n)
    for i in range(n):
        r = min(h, i, n - 1 - i)
        seg = fs.values[i - r : i + r + 1]
        seg = seg[~np.isnan(seg)]
        out[i] = np.median(seg) if seg.size else np.nan
    return FixedStepSeries(fs.anchors, out)


def threshold_filter(fs: FixedStepSeries, lo: float, hi: float) -> FixedStepSeries:
    if lo > hi:
        raise InvalidBounds(f"lower bound {lo} exceeds upper bound {hi}")
    v = fs.values.copy()
    v[(v < lo) | (v > hi)] = np.nan
    return FixedStepSeries(fs.anchors, v)


def slope_series(fs: FixedStepSeries, s: int = 1) -> FixedStepSeries:
    """Finite-difference slope over ``s`` steps, per day; drops the first ``s`` anchors."""
    if s < 1:
        raise ValueError("s must be >= 1")
    if len(fs) <= s:
        raise InsufficientData(f"series of length {len(fs)} too short for s={s}")
    dy = fs.values[s:] - fs.values[:-s]
    dx = fs.anchors[s:] - fs.anchors[:-s]
    return FixedStepSeries(fs.anchors[s:], dy / dx)


def cumulative_integral(fs: FixedStepSeries, start_day: float = 100) -> FixedStepSeries:
    """Running trapezoidal integral (value x days) from ``start_day``.

    Anchors before ``start_day`` are dropped. If the first kept anchor lies
    after ``start_day`` the gap is integrated at the first value.
    """
    keep = fs.anchors >= start_day
    if not keep.any():
        raise InsufficientData(f"no anchor at or after day {start_day}")
    a, v = fs.anchors[keep], fs.values[keep]
    if np.isnan(v).any():
        raise InsufficientData("cannot integrate a series with nulls; fill it first")
    out = np.empty(a.size)
    out[0] = (a[0] - start_day) * v[0]
    if a.size > 1:
        out[1:] = out[0] + np.cumsum(np.diff(a) * (v[1:] + v[:-1]) / 2.0)
    return FixedStepSeries(a, out)


def accumulate_window(daily: TimeSeries, w: int = 7) -> TimeSeries:
    """Trailing ``w``-day sums of a daily series; the first ``w - 1`` days are dropped."""
    if w < 1:
        raise ValueError("w must be >= 1")
    if len(daily) < w:
        raise MissingDaily(f"need at least {w} daily values")
    gaps = np.nonzero(np.diff(daily.days) != 1)[0]
    if gaps.size:
        raise MissingDaily(f"daily series has a gap after day {daily.days[gaps[0]]:g}")
    nulls = np.nonzero(np.isnan(daily.values))[0]
    if nulls.size:
        raise MissingDaily(f"null daily value on day {daily.days[nulls[0]]:g}")
    sums = np.lib.stride_tricks.sliding_window_view(daily.values, w).sum(axis=1)
    return TimeSeries(daily.days[w - 1 :], sums)
