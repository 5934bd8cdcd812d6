"""Vegetation indices from Sentinel-2 reflectances and growing degree days.

Band names follow Sentinel-2 (``B02`` blue, ``B03`` green, ``B04`` red,
``B06`` red edge, ``B08`` NIR, ``B11``/``B12`` SWIR). Every index works on
scalars or numpy arrays; a zero denominator yields NaN (null), never inf.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import InvalidTemps, MissingBand, UnknownIndex

# name -> (bands, numerator, denominator, post-scale)
_Formula = tuple[tuple[str, ...], Callable, Callable, float]

FORMULAS: dict[str, _Formula] = {
    "NDVI": (("B08", "B04"), lambda b: b["B08"] - b["B04"], lambda b: b["B08"] + b["B04"], 1.0),
    "NDWI": (("B03", "B08"), lambda b: b["B03"] - b["B08"], lambda b: b["B08"] + b["B03"], 1.0),
    "NDMI": (("B08", "B11"), lambda b: b["B08"] - b["B11"], lambda b: b["B08"] + b["B11"], 1.0),
    "PSRI": (("B04", "B02", "B06"), lambda b: b["B04"] - b["B02"], lambda b: b["B06"], 1.0),
    "SAVI": (
        ("B08", "B04"),
        lambda b: b["B08"] - b["B04"],
        lambda b: b["B08"] + b["B04"] + 0.428,
        1.0 + 0.428,
    ),
    "EVI": (
        ("B08", "B04", "B02"),
        lambda b: 2.5 * (b["B08"] - b["B04"]),
        lambda b: (b["B08"] + 6 * b["B04"] - 7.5 * b["B02"]) + 1.0,
        1.0,
    ),
    "VARIGREEN": (
        ("B03", "B04", "B02"),
        lambda b: b["B03"] - b["B04"],
        lambda b: b["B03"] + b["B04"] - b["B02"],
        1.0,
    ),
    "GARI": (
        ("B08", "B03", "B02", "B04"),
        lambda b: b["B08"] - (b["B03"] - (b["B02"] - b["B04"])),
        lambda b: b["B08"] - (b["B03"] + (b["B02"] - b["B04"])),
        1.0,
    ),
    "SIPI": (("B08", "B02", "B04"), lambda b: b["B08"] - b["B02"], lambda b: b["B08"] - b["B04"], 1.0),
    "WDRVI": (("B08", "B04"), lambda b: 0.2 * b["B08"] - b["B04"], lambda b: 0.2 * b["B08"] + b["B04"], 1.0),
    "GVMI": (
        ("B08", "B12"),
        lambda b: (b["B08"] + 0.1) - (b["B12"] + 0.02),
        lambda b: (b["B08"] + 0.1) + (b["B12"] + 0.02),
        1.0,
    ),
    # green index and green chlorophyll vegetation index
    "GI": (("B03", "B04"), lambda b: b["B03"], lambda b: b["B04"], 1.0),
    "GCVI": (("B08", "B03"), lambda b: b["B08"] - b["B03"], lambda b: b["B03"], 1.0),
}

NORMALIZED_DIFFERENCE = ("NDVI", "NDWI", "NDMI", "WDRVI", "GVMI")


def available_indices() -> list[str]:
    return sorted(FORMULAS)


def required_bands(name: str) -> tuple[str, ...]:
    return _lookup(name)[0]


def _lookup(name: str) -> _Formula:
    try:
        return FORMULAS[name.upper()]
    except KeyError:
        raise UnknownIndex(f"unknown index {name!r}; known: {', '.join(available_indices())}") from None


def compute_index(name: str, sample: Mapping[str, float | np.ndarray]):
    """Evaluate vegetation index ``name`` (case-insensitive) on band reflectances.

    Returns a float for scalar input and an array for array input. Where the
    denominator is zero the result is NaN.
    """
    bands, num, den, scale = _lookup(name)
    missing = [b for b in bands if b not in sample]
    if missing:
        raise MissingBand(f"{name.upper()} needs bands {', '.join(missing)}")
    b = {k: np.asarray(sample[k], dtype=np.float64) for k in bands}
    n = num(b)
    d = den(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(d == 0, np.nan, n / np.where(d == 0, 1.0, d))
    if scale != 1.0:
        out = out * scale
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class WeatherDaily:
    day: int
    tmin: float
    tmax: float
    precip: float = float("nan")
    radiation: float = float("nan")
    soil_t: float = float("nan")
    soil_m: float = float("nan")
    rh: float = float("nan")
    wind: float = float("nan")

    def __post_init__(self):
        if self.tmax < self.tmin:
            raise InvalidTemps(f"day {self.day}: tmax {self.tmax} < tmin {self.tmin}")


def gdd(tmax, tmin, tbase: float = 15.6):
    """Growing degree days: ``max((tmax + tmin) / 2 - tbase, 0)``."""
    tmax_a = np.asarray(tmax, dtype=np.float64)
    tmin_a = np.asarray(tmin, dtype=np.float64)
    if np.any(tmax_a < tmin_a):
        raise InvalidTemps("tmax must be >= tmin")
    out = np.maximum((tmax_a + tmin_a) / 2.0 - tbase, 0.0)
    return float(out) if out.ndim == 0 else out


def accumulated_gdd(days, tmax, tmin, start_day: float = 100, tbase: float = 15.6):
    """Running GDD sum from ``start_day`` (zero before it)."""
    days = np.asarray(days, dtype=np.float64)
    daily = np.where(days >= start_day, gdd(tmax, tmin, tbase), 0.0)
    return np.cumsum(daily)
