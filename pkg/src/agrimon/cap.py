"""Decision support for subsidy-compliance checks.

Covers confidence banding of classifier decisions, persistence-based
selection of parcels for on-the-spot checks, the crop-diversification rule
and the nitrate-runoff water-buffer rule.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from shapely.geometry.base import BaseGeometry
from shapely.ops import nearest_points, unary_union

from .errors import (
    InvalidArea,
    InvalidCount,
    InvalidParams,
    InvalidScores,
    MissingParcel,
    NoWaterData,
    UnknownCrop,
)


class TrafficLight(str, Enum):
    GREEN = "green"
    YELLOW = "yellow"
    RED = "red"
    UNRELIABLE = "unreliable"


@dataclass(frozen=True)
class Bands:
    """Lower gap bounds of the confidence bands.

    Only the green bound is an established operating value; yellow and red
    are adjustable defaults.
    """

    green: float = 0.5
    yellow: float = 0.3
    red: float = 0.15

    def __post_init__(self):
        if not 0 <= self.red <= self.yellow <= self.green <= 1:
            raise InvalidParams(f"bands must satisfy 0 <= red <= yellow <= green <= 1, got {self}")


DEFAULT_BANDS = Bands()


def score_gap(scores) -> float:
    """Difference between the two highest class scores."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size < 2:
        raise InvalidScores(f"need at least 2 class scores, got {s.size}")
    if np.isnan(s).any() or (s < 0).any():
        raise InvalidScores("class scores must be non-negative numbers")
    top2 = np.partition(s, s.size - 2)[-2:]
    return float(top2[1] - top2[0])


def traffic_light(scores, bands: Bands = DEFAULT_BANDS) -> TrafficLight:
    gap = score_gap(scores)
    if gap >= bands.green:
        return TrafficLight.GREEN
    if gap >= bands.yellow:
        return TrafficLight.YELLOW
    if gap >= bands.red:
        return TrafficLight.RED
    return TrafficLight.UNRELIABLE


def persistence_threshold(run_count: int) -> int:
    """Minimum number of confident mismatches for an alarm after ``run_count`` runs.

    One run gives 0; otherwise ``(n + 1) / 2 - 1`` for odd ``n`` and ``n / 2``
    for even ``n``, capped at 5.
    """
    if isinstance(run_count, bool) or int(run_count) != run_count or run_count < 1:
        raise InvalidCount(f"run count must be a positive integer, got {run_count!r}")
    n = int(run_count)
    if n == 1:
        return 0
    t = (n + 1) // 2 - 1 if n % 2 else n // 2
    return min(t, 5)


@dataclass(frozen=True)
class ParcelDecision:
    predicted: object
    declared: object
    scores: np.ndarray


@dataclass
class ClassificationRun:
    """Predictions of one classification run, keyed by parcel id."""

    run_day: float
    decisions: dict = field(default_factory=dict)
    n_classes: int | None = None

    def add(self, parcel_id, predicted, declared, scores):
        s = np.asarray(scores, dtype=np.float64)
        if s.ndim != 1 or s.size < 2 or np.isnan(s).any() or (s < 0).any():
            raise InvalidScores(f"parcel {parcel_id}: scores must be >= 0 with at least 2 classes")
        if self.n_classes is None:
            self.n_classes = int(s.size)
        elif s.size != self.n_classes:
            raise InvalidScores(f"parcel {parcel_id}: {s.size} scores, expected {self.n_classes}")
        self.decisions[parcel_id] = ParcelDecision(predicted, declared, s)

    def __len__(self):
        return len(self.decisions)


def green_mismatches(run: ClassificationRun, bands: Bands = DEFAULT_BANDS) -> set:
    """Parcels confidently predicted as something other than their declaration."""
    return {
        pid
        for pid, d in run.decisions.items()
        if d.predicted != d.declared and score_gap(d.scores) >= bands.green
    }


def mismatch_counts(runs, bands: Bands = DEFAULT_BANDS, parcels=None) -> dict:
    """Per parcel, the number of runs with a confident mismatch.

    ``parcels`` defaults to those of the first run; every run must cover
    each of them (MissingParcel otherwise).
    """
    runs = list(runs)
    if not runs:
        raise InvalidCount("at least one classification run is required")
    ids = list(runs[0].decisions) if parcels is None else list(parcels)
    mis = dict.fromkeys(ids, 0)
    for r in runs:
        missing = [p for p in ids if p not in r.decisions]
        if missing:
            raise MissingParcel(f"run on day {r.run_day} lacks parcels {missing[:5]}")
        for pid in green_mismatches(r, bands):
            if pid in mis:
                mis[pid] += 1
    return mis


def smart_sampling(runs, bands: Bands = DEFAULT_BANDS, parcels=None) -> set:
    """Parcels whose confident-mismatch count reaches the persistence threshold.

    Runs are taken in the given chronological order. A parcel is alarmed
    when it was confidently mismatched at least
    ``persistence_threshold(len(runs))`` times, and at least once.
    """
    runs = list(runs)
    mis = mismatch_counts(runs, bands, parcels)
    pt = persistence_threshold(len(runs))
    return {pid for pid, m in mis.items() if m >= pt and m > 0}


@dataclass(frozen=True)
class CropType:
    code: object
    name: str
    family: str = ""
    season: str = "summer"  # winter | summer | year-round

    def __post_init__(self):
        if self.season not in SEASONS:
            raise InvalidParams(f"crop {self.code}: unknown season {self.season!r}")


SEASONS = ("winter", "summer", "year-round")


class CropTaxonomy:
    """Crop code to crop type lookup."""

    def __init__(self, crops=()):
        self._crops = {c.code: c for c in crops}

    def __getitem__(self, code) -> CropType:
        try:
            return self._crops[code]
        except KeyError:
            raise UnknownCrop(f"crop code {code!r} is not in the taxonomy") from None

    def __contains__(self, code):
        return code in self._crops

    def __iter__(self):
        return iter(self._crops.values())

    def __len__(self):
        return len(self._crops)

    def season(self, code) -> str:
        return self[code].season


# common arable crops with their usual sowing season
DEFAULT_TAXONOMY = CropTaxonomy(
    [
        CropType("soft_wheat", "Soft wheat", "cereal", "winter"),
        CropType("durum_wheat", "Durum wheat", "cereal", "winter"),
        CropType("barley", "Barley", "cereal", "winter"),
        CropType("oats", "Oats", "cereal", "winter"),
        CropType("rapeseed", "Rapeseed", "oilseed", "winter"),
        CropType("maize", "Maize", "cereal", "summer"),
        CropType("sunflower", "Sunflower", "oilseed", "summer"),
        CropType("rice", "Rice", "cereal", "summer"),
        CropType("cotton", "Cotton", "fibre", "summer"),
        CropType("alfalfa", "Alfalfa", "forage", "year-round"),
        CropType("vineyard", "Vinification vineyard", "permanent", "year-round"),
        CropType("olive", "Olive grove", "permanent", "year-round"),
    ]
)


def season_filter(alarms, latest_run: ClassificationRun, taxonomy: CropTaxonomy = DEFAULT_TAXONOMY) -> set:
    """Keep alarms whose predicted and declared crops belong to different seasons."""
    out = set()
    for pid in alarms:
        if pid not in latest_run.decisions:
            raise MissingParcel(f"alarmed parcel {pid} is absent from the latest run")
        d = latest_run.decisions[pid]
        if taxonomy.season(d.predicted) != taxonomy.season(d.declared):
            out.add(pid)
    return out


# crop diversification


@dataclass(frozen=True)
class GreeningVerdict:
    farmer_id: object
    status: str  # exempt | compliant | breach
    reason: str
    total_ha: float
    n_crops: int
    main_share: float
    top2_share: float


def greening1_check(holdings, small_ha: float = 10.0, large_ha: float = 30.0) -> dict:
    """Crop-diversification verdict per farmer.

    ``holdings`` yields ``(farmer_id, crop, area_ha)`` per parcel; the
    whole arable land of each farmer is assumed present. Up to ``small_ha``
    the farmer is exempt. Up to ``large_ha`` at least two crops are needed
    and the main crop may cover at most 75%. Above it at least three crops
    are needed and the two main crops may cover at most 95%.
    """
    areas: dict = defaultdict(lambda: defaultdict(float))
    for farmer, crop, area in holdings:
        area = float(area)
        if not area >= 0 or math.isinf(area):
            raise InvalidArea(f"farmer {farmer}: invalid parcel area {area}")
        areas[farmer][crop] += area
    out = {}
    for farmer, crops in areas.items():
        total = sum(crops.values())
        by_size = sorted(crops.values(), reverse=True)
        n = sum(1 for a in by_size if a > 0)
        main = by_size[0] / total if total > 0 else 0.0
        top2 = sum(by_size[:2]) / total if total > 0 else 0.0
        reasons = []
        if total <= small_ha:
            status = "exempt"
            reasons.append(f"{total:.4f} ha <= {small_ha:g} ha")
        elif total <= large_ha:
            if n < 2:
                reasons.append(f"{n} crop type(s), at least 2 required")
            if main > 0.75:
                reasons.append(f"main crop covers {100 * main:.1f}% > 75%")
            status = "breach" if reasons else "compliant"
        else:
            if n < 3:
                reasons.append(f"{n} crop type(s), at least 3 required")
            if top2 > 0.95:
                reasons.append(f"two main crops cover {100 * top2:.1f}% > 95%")
            status = "breach" if reasons else "compliant"
        out[farmer] = GreeningVerdict(farmer, status, "; ".join(reasons), total, n, main, top2)
    return out


# water buffer / runoff


def bearing_deg(frm, to) -> float:
    """Compass bearing (clockwise from north, in [0, 360)) of the line from ``frm`` to ``to``."""
    dx, dy = to[0] - frm[0], to[1] - frm[1]
    return math.degrees(math.atan2(dx, dy)) % 360.0


def aspect_window(aspect: float, half: float = 45.0) -> tuple[float, float]:
    """Wrapped bounds of the open window ``aspect +- half`` on the compass."""
    lo = aspect - half
    lo = lo if lo > 0 else lo + 360.0
    hi = aspect + half
    hi = hi if hi <= 360 else hi - 360.0
    return lo, hi


def in_aspect_window(alpha: float, aspect: float, half: float = 45.0) -> bool:
    lo, hi = aspect_window(aspect, half)
    a = alpha % 360.0
    if lo < hi:
        return lo < a < hi
    return a > lo or a < hi


@dataclass(frozen=True)
class RunoffAssessment:
    risk: str  # low | high
    distance_m: float
    bearing_deg: float | None
    slope: float
    aspect: float


def smr1_check(
    polygon: BaseGeometry,
    slope: float,
    aspect: float,
    waters,
    buffer_m: float = 10.0,
    min_slope: float = 12.0,
    half_window: float = 45.0,
) -> RunoffAssessment:
    """Nitrate-runoff risk of a parcel near surface water (planar metres).

    High risk needs the parcel within ``buffer_m`` of water, a slope above
    ``min_slope`` degrees, and the proximity line, taken from the parcel's
    closest point to the water's closest point, pointing within
    ``half_window`` degrees of the slope aspect.
    """
    waters = [w for w in (waters or []) if w is not None and not w.is_empty]
    if not waters:
        raise NoWaterData("no surface-water geometry supplied")
    water = unary_union(waters)
    dist = float(polygon.distance(water))
    if dist > buffer_m or not slope > min_slope:
        return RunoffAssessment("low", dist, None, float(slope), float(aspect))
    p_parcel, p_water = nearest_points(polygon, water)
    alpha = bearing_deg((p_parcel.x, p_parcel.y), (p_water.x, p_water.y))
    risk = "high" if in_aspect_window(alpha, aspect, half_window) else "low"
    return RunoffAssessment(risk, dist, alpha, float(slope), float(aspect))


__all__ = [
    "DEFAULT_BANDS",
    "DEFAULT_TAXONOMY",
    "Bands",
    "ClassificationRun",
    "CropTaxonomy",
    "CropType",
    "GreeningVerdict",
    "ParcelDecision",
    "RunoffAssessment",
    "TrafficLight",
    "aspect_window",
    "bearing_deg",
    "green_mismatches",
    "greening1_check",
    "in_aspect_window",
    "mismatch_counts",
    "persistence_threshold",
    "score_gap",
    "season_filter",
    "smart_sampling",
    "smr1_check",
    "traffic_light",
]
