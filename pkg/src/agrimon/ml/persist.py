"""Versioned JSON save/load for fitted models."""
from __future__ import annotations

import json

import numpy as np

from .cluster import FcmModel, KMeansModel
from .forest import RandomForestModel, Tree

FORMAT = "agrimon-model"
VERSION = 1


def _labels_out(classes):
    return None if classes is None else classes.tolist()


def model_to_dict(model) -> dict:
    head = {"format": FORMAT, "version": VERSION}
    if isinstance(model, KMeansModel):
        return {**head, "kind": "kmeans", "k": model.k, "seed": model.seed,
                "centroids": model.centroids.tolist(), "inertia": model.inertia, "n_iter": model.n_iter}
    if isinstance(model, FcmModel):
        return {**head, "kind": "fcm", "c": model.c, "m": model.m, "seed": model.seed,
                "centers": model.centers.tolist(), "objective": list(model.objective)}
    if isinstance(model, RandomForestModel):
        trees = [
            {f: getattr(t, f).tolist() for f in ("feature", "threshold", "left", "right", "value", "n_samples", "impurity")}
            for t in model.trees
        ]
        return {**head, "kind": "random_forest", "task": model.task, "n_trees": model.n_trees,
                "max_depth": model.max_depth, "seed": model.seed, "classes": _labels_out(model.classes),
                "n_features": model.n_features, "feature_names": list(model.feature_names), "trees": trees}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise ValueError("not a model file")
    if d.get("version") != VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    kind = d["kind"]
    if kind == "kmeans":
        return KMeansModel(np.asarray(d["centroids"], dtype=np.float64), d["k"], d["seed"], d["inertia"], d["n_iter"])
    if kind == "fcm":
        return FcmModel(np.asarray(d["centers"], dtype=np.float64), d["m"], d["c"], d["seed"], tuple(d["objective"]))
    if kind == "random_forest":
        dtypes = {"feature": np.int64, "left": np.int64, "right": np.int64, "n_samples": np.int64}
        trees = tuple(
            Tree(**{f: np.asarray(v, dtype=dtypes.get(f, np.float64)) for f, v in t.items()}) for t in d["trees"]
        )
        classes = None if d["classes"] is None else np.asarray(d["classes"])
        return RandomForestModel(trees, d["n_trees"], d["max_depth"], d["seed"], d["task"], classes,
                                 d["n_features"], tuple(d["feature_names"]))
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
