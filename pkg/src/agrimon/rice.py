"""Weakly supervised paddy-rice mapping.

Pipeline: split land from water with k=2 k-means, cluster the land pixels
for a range of k, pick the cluster closest to the rice reference signature
for each k, keep the k whose pseudo-labels best match a small labelled
subset, then train a random forest on the pseudo-labels and map every
pixel. The labelled subset only steers cluster selection and never enters
forest training.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingFeature, NoQualifyingClustering
from .ml import Dataset, binary_scores, kmeans_fit, rf_fit, rf_predict
from .ml.forest import RandomForestModel


@dataclass(frozen=True)
class RiceReferenceSignature:
    """Mean rice time series over the clustering feature columns."""

    feature_names: tuple
    signature: np.ndarray

    @classmethod
    def from_labels(cls, ds: Dataset, rows, is_rice) -> "RiceReferenceSignature":
        rows = np.asarray(rows)
        is_rice = np.asarray(is_rice, dtype=bool)
        if not is_rice.any():
            raise MissingFeature("reference subset holds no rice rows")
        return cls(ds.feature_names, ds.X[rows[is_rice]].mean(axis=0))


@dataclass(frozen=True)
class ClusterCandidate:
    k: int
    rice_cluster_index: int
    precision: float
    recall: float
    f1: float
    seed: int = 0


def _ndvi_columns(ds: Dataset, prefix: str) -> np.ndarray:
    cols = [i for i, nm in enumerate(ds.feature_names) if nm.upper().startswith(prefix.upper())]
    if not cols:
        raise MissingFeature(f"no {prefix} feature columns for the land/water split")
    return np.asarray(cols)


def land_water_split(ds: Dataset, seed: int = 0, ndvi_prefix: str = "NDVI", water_ndvi_max: float = 0.2) -> np.ndarray:
    """Boolean land mask from a two-cluster k-means.

    The cluster whose centroid has the lower mean NDVI is water, unless that
    mean exceeds ``water_ndvi_max`` or the cluster is empty, in which case
    the split is degenerate and every row is land.
    """
    cols = _ndvi_columns(ds, ndvi_prefix)
    if ds.n < 2:
        return np.ones(ds.n, dtype=bool)
    model, lab = kmeans_fit(ds.X, 2, seed=seed)
    green = model.centroids[:, cols].mean(axis=1)
    water = int(np.argmin(green))
    if green[water] > water_ndvi_max or not (lab == water).any():
        return np.ones(ds.n, dtype=bool)
    return lab != water


def identify_rice_cluster(centroids: np.ndarray, ref: RiceReferenceSignature) -> int:
    """Index of the centroid with the smallest mean squared error to the signature."""
    mse = ((np.asarray(centroids) - ref.signature[None, :]) ** 2).mean(axis=1)
    return int(np.argmin(mse))


def select_best_k(
    candidates, min_recall: float = 0.85, min_precision: float = 0.90
) -> ClusterCandidate:
    """Highest-F1 candidate with recall and precision above the floors; ties go to the smaller k."""
    ok = [c for c in candidates if c.recall > min_recall and c.precision > min_precision]
    if not ok:
        raise NoQualifyingClustering(
            f"no clustering reaches recall > {min_recall} and precision > {min_precision}"
        )
    return min(ok, key=lambda c: (-c.f1, c.k))


def _k_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


@dataclass
class KSweep:
    candidates: list
    assignments: dict  # k -> land-pixel cluster labels
    land_mask: np.ndarray


def sweep_k(
    ds: Dataset,
    land_mask: np.ndarray,
    ref: RiceReferenceSignature,
    ref_rows,
    ref_is_rice,
    k_min: int = 5,
    k_max: int = 15,
    seed: int = 0,
    workers: int = 1,
) -> KSweep:
    """Cluster land pixels for each k and score the rice cluster on the reference rows.

    Reference rows that fall on water count as predicted non-rice. Each k
    uses its own seed derived from ``seed`` and k, so the sweep gives the
    same answer in any order or thread count.
    """
    land_idx = np.nonzero(land_mask)[0]
    X_land = ds.X[land_idx]
    ref_rows = np.asarray(ref_rows)
    ref_is_rice = np.asarray(ref_is_rice, dtype=bool)

    def one(k):
        s = _k_seed(seed, k)
        model, lab = kmeans_fit(X_land, k, seed=s)
        rc = identify_rice_cluster(model.centroids, ref)
        pseudo = np.zeros(ds.n, dtype=bool)
        pseudo[land_idx[lab == rc]] = True
        sc = binary_scores(ref_is_rice, pseudo[ref_rows])
        return ClusterCandidate(k, rc, sc["precision"], sc["recall"], sc["f1"], s), lab

    ks = list(range(k_min, k_max + 1))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            res = list(pool.map(one, ks))
    else:
        res = [one(k) for k in ks]
    return KSweep([r[0] for r in res], {k: r[1] for k, r in zip(ks, res)}, land_mask)


def pseudo_labels(sweep: KSweep, cand: ClusterCandidate) -> np.ndarray:
    lab = np.zeros(sweep.land_mask.size, dtype=bool)
    land_idx = np.nonzero(sweep.land_mask)[0]
    lab[land_idx[sweep.assignments[cand.k] == cand.rice_cluster_index]] = True
    return lab


@dataclass
class RiceMap:
    labels: np.ndarray
    total_area_ha: float
    model: RandomForestModel
    metrics: dict = field(default_factory=dict)


def rice_map(
    X_all,
    pseudo,
    n_trees: int = 50,
    depth: int = 12,
    pixel_area_ha: float = 0.01,
    seed: int = 0,
    truth=None,
    workers: int = 1,
    feature_names=(),
) -> RiceMap:
    """Train a forest on pseudo-labels and map every pixel.

    ``total_area_ha`` is the rice pixel count times ``pixel_area_ha`` (a
    10 m pixel is 0.01 ha). With ``truth`` given, precision/recall/F1 of both
    the map and the pseudo-labels are reported.
    """
    pseudo = np.asarray(pseudo, dtype=bool)
    ds = Dataset(X_all, pseudo.astype(np.int64), feature_names)
    model = rf_fit(ds, n_trees=n_trees, max_depth=depth, seed=seed, task="classify", workers=workers)
    labels = rf_predict(model, ds.X).astype(bool)
    metrics = {}
    if truth is not None:
        metrics["map"] = binary_scores(truth, labels)
        metrics["pseudo"] = binary_scores(truth, pseudo)
    return RiceMap(labels, float(labels.sum() * pixel_area_ha), model, metrics)


@dataclass
class RicePipelineResult:
    land_mask: np.ndarray
    sweep: KSweep
    best: ClusterCandidate
    pseudo: np.ndarray
    map: RiceMap


def run_rice_pipeline(
    ds: Dataset,
    ref_rows,
    ref_is_rice,
    k_min: int = 5,
    k_max: int = 15,
    seed: int = 0,
    n_trees: int = 50,
    depth: int = 12,
    pixel_area_ha: float = 0.01,
    truth=None,
    workers: int = 1,
    water_ndvi_max: float = 0.2,
) -> RicePipelineResult:
    ref = RiceReferenceSignature.from_labels(ds, ref_rows, ref_is_rice)
    land = land_water_split(ds, seed=seed, water_ndvi_max=water_ndvi_max)
    sweep = sweep_k(ds, land, ref, ref_rows, ref_is_rice, k_min, k_max, seed, workers)
    best = select_best_k(sweep.candidates)
    pseudo = pseudo_labels(sweep, best)
    rmap = rice_map(ds.X, pseudo, n_trees, depth, pixel_area_ha, seed, truth, workers, ds.feature_names)
    return RicePipelineResult(land, sweep, best, pseudo, rmap)
