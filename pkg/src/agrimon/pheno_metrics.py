"""Seasonality metrics from smoothed vegetation-index series.

Season start is where NDWI drops below a rising NDVI, season end where PSRI
climbs above a falling NDVI. Peak, base level, rates and four season
integrals follow from those two days. Series are expected on a common,
evenly spaced anchor grid.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import savgol_filter

from .errors import InvalidParams, NoSeasonEnd, NoSeasonStart
from .sits import FixedStepSeries, rolling_median


@dataclass(frozen=True)
class SeasonMetrics:
    sos: float
    pos: float
    eos: float
    rate_inc: float
    rate_dec: float
    large_integral: float
    small_integral: float
    biomass_indicator: float
    yield_indicator: float
    base_level: float

    def as_dict(self) -> dict:
        return asdict(self)


def despike_median(fs: FixedStepSeries, passes: int = 3, z: float = 2.0) -> FixedStepSeries:
    """Replace points far from their 3-point running median by that median.

    A point is a spike when it deviates from the median by more than ``z``
    standard deviations of the whole (current) series. Stops early once a
    pass changes nothing.
    """
    cur = fs
    for _ in range(passes):
        if len(cur) < 3:
            break
        med = rolling_median(cur, 3).values
        sd = np.nanstd(cur.values)
        spikes = np.abs(cur.values - med) > z * sd
        if not spikes.any():
            break
        cur = FixedStepSeries(cur.anchors, np.where(spikes, med, cur.values))
    return cur


def savitzky_golay(fs: FixedStepSeries, window: int, order: int) -> FixedStepSeries:
    """Least-squares polynomial smoothing; edges use a fit over the first/last window."""
    if window % 2 == 0 or window < 1:
        raise InvalidParams(f"window must be odd, got {window}")
    if order >= window or order < 0:
        raise InvalidParams(f"order {order} must be in [0, window)")
    if window > len(fs):
        raise InvalidParams(f"window {window} longer than series ({len(fs)})")
    if fs.has_nulls:
        raise InvalidParams("fill nulls before smoothing")
    return FixedStepSeries(fs.anchors, savgol_filter(fs.values, window, order, mode="interp"))


def _check_aligned(*series: FixedStepSeries):
    ref = series[0].anchors
    for s in series[1:]:
        if s.anchors.shape != ref.shape or not np.array_equal(s.anchors, ref):
            raise ValueError("series must share identical anchors")


@dataclass(frozen=True)
class _Crossing:
    """Crossing between anchors ``near`` and ``far``; ``r`` is the fraction of the
    step measured from ``near`` (the anchor on the peak side)."""

    near: int
    far: int
    r: float

    def day(self, t: np.ndarray) -> float:
        return float(t[self.near] + self.r * (t[self.far] - t[self.near]))

    def value(self, y: np.ndarray) -> float:
        return float(y[self.near] + (y[self.far] - y[self.near]) * self.r)


def _sos_crossing(ndvi: np.ndarray, ndwi: np.ndarray, peak: int) -> _Crossing | None:
    gap = ndwi - ndvi
    for k in range(peak - 1, -1, -1):
        if gap[k] > 0 and gap[k + 1] <= 0:
            return _Crossing(k + 1, k, float(-gap[k + 1] / (gap[k] - gap[k + 1])))
    return None


def _eos_crossing(ndvi: np.ndarray, other: np.ndarray, peak: int) -> _Crossing | None:
    gap = other - ndvi
    for j in range(peak, ndvi.size - 1):
        if gap[j] <= 0 and gap[j + 1] > 0:
            return _Crossing(j, j + 1, float(-gap[j] / (gap[j + 1] - gap[j])))
    return None


def _require_season(ndvi: FixedStepSeries, min_amplitude: float) -> int:
    y = ndvi.values
    if np.isnan(y).any():
        raise NoSeasonStart("NDVI series has nulls")
    if y.max() - y.min() < min_amplitude:
        raise NoSeasonStart("NDVI series is flat")
    return int(np.argmax(y))


def detect_sos(ndvi: FixedStepSeries, ndwi: FixedStepSeries, min_amplitude: float = 0.05) -> float:
    """Latest day before the NDVI maximum where NDWI drops below NDVI."""
    return _detect_sos(ndvi, ndwi, min_amplitude)[0]


def _detect_sos(ndvi, ndwi, min_amplitude):
    _check_aligned(ndvi, ndwi)
    peak = _require_season(ndvi, min_amplitude)
    cross = _sos_crossing(ndvi.values, ndwi.values, peak)
    if cross is None:
        raise NoSeasonStart("NDWI never drops below NDVI before the NDVI peak")
    return cross.day(ndvi.anchors), cross, peak


def detect_eos(
    ndvi: FixedStepSeries, psri: FixedStepSeries, ndwi: FixedStepSeries | None = None, min_amplitude: float = 0.05
) -> float:
    """First day after the NDVI maximum where PSRI rises above NDVI.

    Without such a crossing, falls back to the first day after the maximum
    where NDVI drops below ``base + 0.1 * amplitude``; the base there is the
    mean of the minimum left of season start (or of the series start when
    ``ndwi`` is not given) and the minimum right of the peak.
    """
    sos_cross = None
    if ndwi is not None:
        _, sos_cross, _ = _detect_sos(ndvi, ndwi, min_amplitude)
    return _detect_eos(ndvi, psri, sos_cross, min_amplitude)[0]


def _detect_eos(ndvi, psri, sos_cross, min_amplitude):
    _check_aligned(ndvi, psri)
    peak = _require_season(ndvi, min_amplitude)
    y = ndvi.values
    cross = _eos_crossing(y, psri.values, peak)
    if cross is None:
        left = y[: sos_cross.far + 1] if sos_cross is not None else y[: peak + 1]
        left_min = min(left.min(), sos_cross.value(y)) if sos_cross is not None else left.min()
        base = (left_min + y[peak:].min()) / 2.0
        thr = base + 0.1 * (y[peak] - base)
        cross = _eos_crossing(y, np.full_like(y, thr), peak)
        if cross is None:
            raise NoSeasonEnd("neither a PSRI crossing nor an NDVI drop after the peak")
    return cross.day(ndvi.anchors), cross


def _outward_trapezoid(t: np.ndarray, f: np.ndarray, peak: int, cross: _Crossing, step: int) -> float:
    """Integrate f from the peak anchor outwards to a crossing (step=-1 left, +1 right)."""
    total = 0.0
    i = peak
    while i != cross.near:
        j = i + step
        total += abs(t[j] - t[i]) * (f[i] + f[j]) / 2.0
        i = j
    fc = f[cross.near] + (f[cross.far] - f[cross.near]) * cross.r
    total += cross.r * abs(t[cross.far] - t[cross.near]) * (f[cross.near] + fc) / 2.0
    return total


def extract_season(
    ndvi: FixedStepSeries,
    ndwi: FixedStepSeries,
    psri: FixedStepSeries,
    min_amplitude: float = 0.05,
) -> SeasonMetrics:
    """Season metrics from aligned NDVI, NDWI and PSRI series.

    Integrals use the trapezoid rule on the anchors inside the season plus
    the interpolated start and end points. ``small_integral`` counts only
    NDVI above the base level and equals ``biomass_indicator`` (start to
    peak) plus ``yield_indicator`` (peak to end).
    """
    _check_aligned(ndvi, ndwi, psri)
    t, y = ndvi.anchors, ndvi.values
    sos, sc, _ = _detect_sos(ndvi, ndwi, min_amplitude)
    eos, ec = _detect_eos(ndvi, psri, sc, min_amplitude)

    inside = np.arange(sc.near, ec.near + 1)
    peak = int(inside[np.argmax(y[inside])])
    pos = float(t[peak])
    if not sos < pos < eos:
        raise NoSeasonStart(f"degenerate season: sos={sos:g}, pos={pos:g}, eos={eos:g}")

    y_sos, y_eos = sc.value(y), ec.value(y)
    left_min = min(y[: sc.far + 1].min(), y_sos)
    right_min = min(y[ec.far :].min(), y_eos)
    base = (left_min + right_min) / 2.0

    above = np.maximum(y - base, 0.0)
    large = _outward_trapezoid(t, y, peak, sc, -1) + _outward_trapezoid(t, y, peak, ec, +1)
    biomass = _outward_trapezoid(t, above, peak, sc, -1)
    yld = _outward_trapezoid(t, above, peak, ec, +1)
    return SeasonMetrics(
        sos=sos,
        pos=pos,
        eos=eos,
        rate_inc=(y[peak] - y_sos) / (pos - sos),
        rate_dec=(y[peak] - y_eos) / (eos - pos),
        large_integral=large,
        small_integral=biomass + yld,
        biomass_indicator=biomass,
        yield_indicator=yld,
        base_level=base,
    )


def smooth_series(fs: FixedStepSeries, window: int = 5, order: int = 2, despike: bool = True) -> FixedStepSeries:
    """Fill nulls, optionally despike, then Savitzky-Golay smooth."""
    out = fs.fill() if fs.has_nulls else fs
    if despike:
        out = despike_median(out)
    return savitzky_golay(out, window, order)


def season_from_raw(
    ndvi: FixedStepSeries,
    ndwi: FixedStepSeries,
    psri: FixedStepSeries,
    window: int = 5,
    order: int = 2,
    despike: bool = True,
) -> SeasonMetrics:
    """Smooth the three series and extract the season."""
    return extract_season(*(smooth_series(s, window, order, despike) for s in (ndvi, ndwi, psri)))
