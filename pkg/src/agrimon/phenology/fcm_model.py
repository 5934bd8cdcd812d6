"""Unsupervised phenology estimation with fuzzy c-means.

Each element is one field on one acquisition day. Six fuzzy clusters are
fitted and mapped to the six stages through the order in which fields pass
through them. A second-ranked stage whose membership clears the partition
threshold, and that neighbours the top stage, becomes the secondary label.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..errors import AmbiguousStageOrder, EmptyData, MissingFeature
from ..ml import Dataset, FcmModel, fcm_fit
from .stages import METACLASSES, Metaclass, Stage

DOY_FEATURES = ("doy_sin", "doy_cos")


def doy_columns(days) -> tuple[np.ndarray, np.ndarray]:
    ang = 2 * np.pi * np.asarray(days, dtype=np.float64) / 365.0
    return np.sin(ang), np.cos(ang)


@dataclass
class ElementSpace:
    """One row per (field, day) with the chosen features plus sin/cos of the day."""

    dataset: Dataset
    field_ids: np.ndarray
    days: np.ndarray
    dropped: list = field(default_factory=list)  # (field, day, missing features)

    def frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.dataset.X, columns=list(self.dataset.feature_names))
        df.insert(0, "day", self.days)
        df.insert(0, "field_id", self.field_ids)
        return df


def build_element_space(table: pd.DataFrame, features, fields=None, days=None) -> ElementSpace:
    """Pivot long per-field values into the element matrix.

    ``table`` has columns ``parcel_id`` (or ``field_id``), ``date`` (or
    ``day``, a day of year), ``variable`` and ``value``, the layout produced
    by zonal statistics. Rows lacking any requested feature are dropped and
    reported in ``dropped``; with ``fields`` and ``days`` given, absent
    (field, day) pairs are reported too.
    """
    t = table.rename(columns={"parcel_id": "field_id", "date": "day"})
    for col in ("field_id", "day", "variable", "value"):
        if col not in t.columns:
            raise MissingFeature(f"element table lacks column {col!r}")
    features = list(features)
    wide = t.pivot_table(index=["field_id", "day"], columns="variable", values="value", aggfunc="first")
    if fields is not None and days is not None:
        full = pd.MultiIndex.from_product([list(fields), list(days)], names=["field_id", "day"])
        wide = wide.reindex(full)
    wide = wide.reindex(columns=features)
    missing = wide.isna()
    bad = missing.any(axis=1)
    dropped = [
        (fid, day, tuple(c for c in features if missing.loc[(fid, day), c]))
        for fid, day in wide.index[bad.to_numpy()]
    ]
    wide = wide[~bad.to_numpy()]
    fid = wide.index.get_level_values("field_id").to_numpy()
    day = wide.index.get_level_values("day").to_numpy(dtype=np.float64)
    s, c = doy_columns(day)
    X = np.column_stack([wide.to_numpy(dtype=np.float64), s, c]) if len(features) else np.column_stack([s, c])
    ds = Dataset(X.reshape(len(day), len(features) + 2), None, tuple(features) + DOY_FEATURES)
    return ElementSpace(ds, fid, day, dropped)


@dataclass(frozen=True)
class Prediction:
    metaclass: Metaclass
    ranking: tuple  # all six stages by decreasing membership
    weights: dict  # Stage -> membership


@dataclass(frozen=True)
class FcmPhenoModel:
    fcm: FcmModel
    stage_order: tuple  # stage_order[cluster] = Stage
    th_w: float
    feature_set: tuple
    mean: np.ndarray
    scale: np.ndarray

    def _matrix(self, X) -> np.ndarray:
        if isinstance(X, pd.DataFrame):
            missing = [f for f in self.feature_set if f not in X.columns]
            if missing:
                raise MissingFeature(f"missing features {missing}")
            X = X[list(self.feature_set)].to_numpy(dtype=np.float64)
        elif isinstance(X, dict):
            X = np.array([[X[f] for f in self.feature_set]], dtype=np.float64)
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        return (X - self.mean) / self.scale

    def stage_weights(self, X) -> np.ndarray:
        """Membership per stage (columns RE..BO) for each row."""
        U = self.fcm.membership(self._matrix(X))
        out = np.zeros_like(U)
        for cl, st in enumerate(self.stage_order):
            out[:, int(st) - 1] = U[:, cl]
        return out

    def predict(self, X) -> list[Prediction]:
        return [metaclass_from_weights(w, self.th_w) for w in self.stage_weights(X)]


def metaclass_from_weights(w, th_w: float) -> Prediction:
    """Top stage, plus the runner-up as secondary when it reaches ``th_w`` and is adjacent."""
    w = np.asarray(w, dtype=np.float64)
    order = np.argsort(-w, kind="stable")
    ranking = tuple(Stage(int(i) + 1) for i in order)
    primary, second = ranking[0], ranking[1]
    sec = second if (w[order[1]] >= th_w and abs(int(second) - int(primary)) == 1) else None
    return Prediction(Metaclass(primary, sec), ranking, {Stage(i + 1): float(w[i]) for i in range(w.size)})


def predict_metaclass(model: FcmPhenoModel, x) -> Prediction:
    return model.predict(x)[0]


def _field_orders(labels: np.ndarray, field_ids: np.ndarray, days: np.ndarray, c: int) -> list[tuple]:
    """Per field, clusters in order of first appearance along the day axis (complete orders only)."""
    orders = []
    for fid in pd.unique(field_ids):
        sel = np.nonzero(field_ids == fid)[0]
        seq = labels[sel[np.argsort(days[sel], kind="stable")]]
        seen = tuple(dict.fromkeys(int(v) for v in seq))
        if len(seen) == c:
            orders.append(seen)
    return orders


def modal_stage_order(labels, field_ids, days, c: int = 6) -> tuple:
    """Cluster order shared by most fields.

    Fields that never visit every cluster are ignored. A tie between
    several most-common orders goes to the one closest (fewest discordant
    pairs) to the clusters' mean-day ranking. Raises AmbiguousStageOrder
    when no field yields a complete order, or when several fields exist
    and no two agree.
    """
    labels = np.asarray(labels)
    field_ids = np.asarray(field_ids)
    days = np.asarray(days, dtype=np.float64)
    orders = _field_orders(labels, field_ids, days, c)
    if not orders:
        raise AmbiguousStageOrder("no field passes through every cluster")
    counts = Counter(orders)
    top = max(counts.values())
    if top == 1 and len(orders) > 1:
        raise AmbiguousStageOrder("every field shows a different cluster order")
    tied = sorted(o for o, n in counts.items() if n == top)
    if len(tied) == 1:
        return tied[0]
    mean_day = [days[labels == k].mean() if (labels == k).any() else np.inf for k in range(c)]
    rank = {k: r for r, k in enumerate(np.argsort(mean_day, kind="stable"))}

    def discord(o):
        return sum(rank[a] > rank[b] for i, a in enumerate(o) for b in o[i + 1 :])

    return min(tied, key=lambda o: (discord(o), o))


def fit_phenology(
    space: ElementSpace,
    seed: int,
    features=None,
    c: int = 6,
    m: float = 2.0,
    percentile: float = 98.0,
    max_iter: int = 300,
    tol: float = 1e-7,
    n_init: int = 5,
) -> FcmPhenoModel:
    """Fit the fuzzy metaclass model on an element space.

    Features are standardized with the training mean and standard
    deviation. FCM is restarted ``n_init`` times from seeds derived from
    ``seed`` and the run with the lowest final objective is kept. The
    partition threshold is the ``percentile`` of the third-ranked
    membership over all training elements.
    """
    ds = space.dataset
    if ds.n == 0:
        raise EmptyData("empty element space")
    feats = tuple(features) if features is not None else ds.feature_names
    X = ds.select(feats).X
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Z = (X - mean) / scale
    seeds = np.random.SeedSequence(seed).generate_state(max(n_init, 1))
    runs = [fcm_fit(Z, c, m=m, seed=int(s), max_iter=max_iter, tol=tol) for s in seeds]
    fcm, U = min(runs, key=lambda r: r[0].objective[-1])
    labels = np.argmax(U, axis=1)
    order = modal_stage_order(labels, space.field_ids, space.days, c)
    stage_order = [None] * c
    for pos, cl in enumerate(order):
        stage_order[cl] = Stage(pos + 1)
    third = np.sort(U, axis=1)[:, -3] if c >= 3 else np.zeros(U.shape[0])
    th_w = float(np.percentile(third, percentile))
    return FcmPhenoModel(fcm, tuple(stage_order), th_w, feats, mean, scale)


def baseline_doy(space: ElementSpace, seed: int, **kw) -> FcmPhenoModel:
    """Same pipeline with only the sin/cos day-of-year features."""
    return fit_phenology(space, seed, features=DOY_FEATURES, **kw)


def fit_ensemble(space: ElementSpace, feature_sets, seed: int, **kw) -> list[FcmPhenoModel]:
    """One model per feature set, each seeded from ``seed`` and its position."""
    seeds = np.random.SeedSequence(seed).generate_state(max(len(feature_sets), 1))
    return [fit_phenology(space, int(sd), features=fs, **kw) for sd, fs in zip(seeds, feature_sets)]


def ensemble_vote(models, x) -> Prediction:
    """Most common metaclass across models.

    Ties go to the metaclass whose primary stage has the highest membership
    averaged over all models, then to the lower metaclass index.
    """
    models = list(models)
    if not models:
        raise EmptyData("no models to vote")
    preds = [predict_metaclass(mdl, x) for mdl in models]
    votes = Counter(p.metaclass for p in preds)
    top = max(votes.values())
    tied = [mc for mc, n in votes.items() if n == top]
    mean_w = {s: np.mean([p.weights[s] for p in preds]) for s in Stage}
    winner = min(tied, key=lambda mc: (-mean_w[mc.primary], mc.index))
    ranking = tuple(sorted(Stage, key=lambda s: (-mean_w[s], int(s))))
    return Prediction(winner, ranking, {s: float(v) for s, v in mean_w.items()})


def truth_metaclass(progress: float, margin: float = 0.25) -> Metaclass:
    """Metaclass of a field at continuous progress ``progress`` in [0, 6).

    The integer part picks the stage; within ``margin`` of a stage boundary
    the neighbouring stage is added as secondary.
    """
    k = min(int(np.floor(progress)), 5)
    frac = progress - k
    primary = Stage(k + 1)
    if frac < margin and k > 0:
        return Metaclass(primary, Stage(k))
    if frac > 1 - margin and k < 5:
        return Metaclass(primary, Stage(k + 2))
    return Metaclass(primary)


__all__ = [
    "DOY_FEATURES",
    "METACLASSES",
    "ElementSpace",
    "FcmPhenoModel",
    "Prediction",
    "baseline_doy",
    "build_element_space",
    "ensemble_vote",
    "fit_ensemble",
    "fit_phenology",
    "metaclass_from_weights",
    "modal_stage_order",
    "predict_metaclass",
    "truth_metaclass",
]
