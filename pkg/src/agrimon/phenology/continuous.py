"""Continuous-scale phenology from reference parcels, and per-date stage regressors.

A query parcel's recent slope profile is compared against sliding windows
of labelled reference parcels. Each window ends on a day inside a candidate
stage of the reference and so maps to a value on the 100-700 scale. Those
values then serve as pseudo-labels for random-forest regressors trained at
regular prediction dates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InsufficientData, MissingFeature, OutOfSeason
from ..ml import Dataset, rf_fit, rf_predict
from ..ml.forest import RandomForestModel
from ..sits import TimeSeries
from .stages import ContinuousStage, Stage, admissible_stages


@dataclass(frozen=True)
class ReferenceParcel:
    """Labelled parcel: daily-ish feature series plus stage start/end days."""

    parcel_id: str
    features: dict  # name -> TimeSeries
    windows: dict  # Stage -> (start_day, end_day)

    @classmethod
    def from_boundaries(cls, parcel_id, features, boundaries) -> "ReferenceParcel":
        """``boundaries`` holds the six stage start days followed by the end of the last stage."""
        b = [float(v) for v in boundaries]
        if len(b) != 7 or any(b2 < b1 for b1, b2 in zip(b, b[1:])):
            raise ValueError("need 7 non-decreasing boundary days")
        return cls(parcel_id, dict(features), {Stage(k + 1): (b[k], b[k + 1]) for k in range(6)})


def _valid(ts: TimeSeries) -> tuple[np.ndarray, np.ndarray]:
    ok = ~np.isnan(ts.values)
    return ts.days[ok], ts.values[ok]


def slope_profile(ts: TimeSeries, end_days, tw: float = 75, s: float = 5) -> np.ndarray:
    """Slopes ``(y(j) - y(j-s)) / s`` at every ``s`` days over the ``tw`` days ending at each end day.

    Values between observations are linearly interpolated. Returns an
    array of shape (len(end_days), tw // s).
    """
    days, vals = _valid(ts)
    offsets = np.arange(-tw + s, 1, s, dtype=np.float64)
    j = np.asarray(end_days, dtype=np.float64)[:, None] + offsets[None, :]
    return (np.interp(j, days, vals) - np.interp(j - s, days, vals)) / s


def _covers(ts: TimeSeries, lo: float, hi: float) -> bool:
    days, _ = _valid(ts)
    return days.size > 0 and days[0] <= lo and days[-1] >= hi


@dataclass(frozen=True)
class ContinuousPrediction:
    stage: ContinuousStage
    kept: dict  # feature -> ((value, mae, parcel_id), ...) for the best windows


def predict_continuous(
    features: dict,
    refs,
    dop: float,
    tw: float = 75,
    s: float = 5,
    top: int = 3,
    detail: bool = False,
):
    """Continuous stage of a parcel on day ``dop``.

    For every feature the query slope profile is compared by mean absolute
    error with reference windows ending on each whole day of every stage
    admissible at ``dop``. The ``top`` closest windows per feature are kept
    and the median of their scale values is returned. A window ending at day
    ``i`` of a stage spanning [start, end) scores ``100 * stage + 100 * (i -
    start) / (end - start)``.

    Raises OutOfSeason when no stage can occur on ``dop`` or no reference
    window falls inside an admissible stage, and InsufficientData when a
    query series does not cover ``[dop - tw, dop]``.
    """
    stages = admissible_stages(dop)
    if not stages:
        raise OutOfSeason(f"no stage can occur on day {dop}")
    refs = list(refs)
    if not features:
        raise MissingFeature("no query features")
    kept, pooled = {}, []
    for name, ts in features.items():
        if not _covers(ts, dop - tw, dop):
            raise InsufficientData(f"{name} does not cover days {dop - tw}..{dop}")
        q = slope_profile(ts, [dop], tw, s)[0]
        vals, errs, owners = [], [], []
        for ref in refs:
            if name not in ref.features:
                raise MissingFeature(f"reference {ref.parcel_id} lacks {name}")
            rts = ref.features[name]
            rdays, _ = _valid(rts)
            if not rdays.size:
                continue
            for st in stages:
                start, end = ref.windows[st]
                ends = np.arange(math.ceil(start), end, 1.0)
                ends = ends[(ends - tw >= rdays[0]) & (ends <= rdays[-1])]
                if not ends.size:
                    continue
                seg = slope_profile(rts, ends, tw, s)
                errs.append(np.abs(seg - q[None, :]).mean(axis=1))
                vals.append(100.0 * int(st) + 100.0 * (ends - start) / (end - start))
                owners.extend([ref.parcel_id] * ends.size)
        if not vals:
            raise OutOfSeason(f"no reference window inside stages {[x.name for x in stages]} on day {dop}")
        v, e = np.concatenate(vals), np.concatenate(errs)
        order = np.lexsort((v, e))[:top]
        kept[name] = tuple((float(v[k]), float(e[k]), owners[k]) for k in order)
        pooled.extend(v[order])
    value = float(np.clip(np.median(pooled), 100.0, 700.0))
    out = ContinuousStage(value)
    return ContinuousPrediction(out, kept) if detail else out


# per-date regressors


@dataclass(frozen=True)
class DateRegressor:
    day: float
    model: RandomForestModel
    columns: tuple  # feature names of the truncated space
    depth: int
    holdout_mae: float
    n_labels: int


@dataclass(frozen=True)
class SkippedDate:
    day: float
    n_labels: int
    reason: str


@dataclass
class StageRegressors:
    regressors: list
    skipped: list = field(default_factory=list)

    def __len__(self):
        return len(self.regressors)

    def for_day(self, day: float) -> DateRegressor:
        """Regressor of the latest prediction date not after ``day``."""
        ok = [r for r in self.regressors if r.day <= day]
        if not ok:
            raise OutOfSeason(f"no regressor trained for a date on or before {day}")
        return ok[-1]

    def predict(self, cube: np.ndarray, obs_days, feature_names, day: float) -> np.ndarray:
        reg = self.for_day(day)
        X = truncated_features(cube, obs_days, feature_names, reg.day)[0]
        return np.clip(rf_predict(reg.model, X), 100.0, 700.0)


def truncated_features(cube: np.ndarray, obs_days, feature_names, day: float):
    """Flatten a (parcels, dates, features) cube keeping dates up to ``day``."""
    cube = np.asarray(cube, dtype=np.float64)
    obs_days = np.asarray(obs_days, dtype=np.float64)
    keep = np.nonzero(obs_days <= day)[0]
    if not keep.size:
        raise InsufficientData(f"no observation on or before day {day}")
    X = cube[:, keep, :].reshape(cube.shape[0], -1)
    cols = tuple(f"{f}_{obs_days[t]:g}" for t in keep for f in feature_names)
    return X, cols


def train_stage_regressors(
    cube,
    obs_days,
    feature_names,
    labels: dict,
    depths=(4, 8, 12),
    n_trees: int = 30,
    holdout: float = 0.2,
    min_labels: int = 50,
    seed: int = 0,
    workers: int = 1,
) -> StageRegressors:
    """One random-forest regressor per prediction date.

    ``labels`` maps a prediction day to an array of continuous-scale values
    per parcel (NaN where a parcel has no label). Features are the cube
    values at observation days up to that day. The depth is chosen by the
    MAE on a seeded ``holdout`` share of the labels (ties to the shallower
    tree) and the forest is then refitted on every label. Dates with fewer
    than ``min_labels`` labels are skipped and reported.
    """
    out = StageRegressors([])
    for k, day in enumerate(sorted(labels)):
        y = np.asarray(labels[day], dtype=np.float64)
        rows = np.nonzero(~np.isnan(y))[0]
        if rows.size < min_labels:
            out.skipped.append(SkippedDate(float(day), int(rows.size), f"fewer than {min_labels} labels"))
            continue
        try:
            X, cols = truncated_features(cube, obs_days, feature_names, day)
        except InsufficientData as exc:
            out.skipped.append(SkippedDate(float(day), int(rows.size), str(exc)))
            continue
        X, y = X[rows], y[rows]
        date_seed = int(np.random.SeedSequence([seed, k]).generate_state(1)[0])
        perm = np.random.default_rng(date_seed).permutation(rows.size)
        n_hold = max(1, int(round(holdout * rows.size)))
        te, tr = perm[:n_hold], perm[n_hold:]
        scores = []
        for d in depths:
            m = rf_fit(Dataset(X[tr], y[tr], cols), n_trees, d, date_seed, task="regress", workers=workers)
            scores.append(float(np.abs(rf_predict(m, X[te]) - y[te]).mean()))
        best = int(np.argmin(scores))
        model = rf_fit(Dataset(X, y, cols), n_trees, depths[best], date_seed, task="regress", workers=workers)
        out.regressors.append(DateRegressor(float(day), model, cols, int(depths[best]), scores[best], int(rows.size)))
    return out


__all__ = [
    "ContinuousPrediction",
    "DateRegressor",
    "ReferenceParcel",
    "SkippedDate",
    "StageRegressors",
    "predict_continuous",
    "slope_profile",
    "train_stage_regressors",
    "truncated_features",
]
