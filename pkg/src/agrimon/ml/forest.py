"""Random forest for classification and regression.

Trees use exact threshold search over sorted feature columns. The split
search runs in the active kernel backend. Per-tree random streams are
spawned from one seed, so parallel and serial training give identical
forests.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import EmptyData
from .dataset import Dataset

LEAF = -1


@dataclass(frozen=True)
class Tree:
    """Flat binary tree; ``value`` rows are class frequencies or the leaf mean."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    impurity: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != LEAF
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def equals(self, other: "Tree") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("feature", "threshold", "left", "right", "value", "n_samples", "impurity")
        )


@dataclass(frozen=True)
class RandomForestModel:
    trees: tuple
    n_trees: int
    max_depth: int
    seed: int
    task: str  # "classify" | "regress"
    classes: np.ndarray | None
    n_features: int
    feature_names: tuple = ()

    def equals(self, other: "RandomForestModel") -> bool:
        if self.task != other.task or len(self.trees) != len(other.trees):
            return False
        if self.task == "classify" and not np.array_equal(self.classes, other.classes):
            return False
        return all(a.equals(b) for a, b in zip(self.trees, other.trees))

    def feature_importances(self) -> np.ndarray:
        """Mean decrease in impurity, normalized per tree then averaged."""
        total = np.zeros(self.n_features)
        for t in self.trees:
            imp = np.zeros(self.n_features)
            for i in np.nonzero(t.feature != LEAF)[0]:
                l, r = t.left[i], t.right[i]
                dec = (
                    t.n_samples[i] * t.impurity[i]
                    - t.n_samples[l] * t.impurity[l]
                    - t.n_samples[r] * t.impurity[r]
                )
                imp[t.feature[i]] += max(dec, 0.0)
            if imp.sum() > 0:
                total += imp / imp.sum()
        return total / max(len(self.trees), 1)


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    return 1.0 - float((counts * counts).sum()) / float(n * n) if n else 0.0


class _TreeBuilder:
    def __init__(self, X, y, task, n_classes, max_depth, mtry, rng, backend):
        self.X, self.y, self.task = X, y, task
        self.n_classes, self.max_depth, self.mtry = n_classes, max_depth, mtry
        self.rng, self.k = rng, backend
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.n_samples, self.impurity = [], [], []

    def _node_stats(self, idx):
        yy = self.y[idx]
        if self.task == "classify":
            counts = np.bincount(yy, minlength=self.n_classes)
            return counts / counts.sum(), _gini(counts), counts.max() == yy.size
        mean = float(np.cumsum(yy)[-1] / yy.size)
        var = float(np.mean((yy - mean) ** 2))
        return np.array([mean]), var, bool((yy == yy[0]).all())

    def _new_node(self, idx):
        value, imp, pure = self._node_stats(idx)
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        self.n_samples.append(idx.size)
        self.impurity.append(imp)
        return len(self.feature) - 1, pure

    def _best_split(self, idx):
        """Scan features in random order until ``mtry`` usable ones were scored."""
        best = None
        used = 0
        for f in self.rng.permutation(self.X.shape[1]):
            col = self.X[idx, f]
            order = np.argsort(col, kind="stable")
            xs = np.ascontiguousarray(col[order])
            if xs[0] == xs[-1]:
                continue
            if self.task == "classify":
                score, pos = self.k.best_split_classify(xs, np.ascontiguousarray(self.y[idx][order]), self.n_classes)
            else:
                score, pos = self.k.best_split_regress(xs, np.ascontiguousarray(self.y[idx][order]))
            used += 1
            if pos >= 0 and (best is None or score > best[0]):
                thr = (xs[pos] + xs[pos + 1]) / 2.0
                if not xs[pos] <= thr < xs[pos + 1]:
                    thr = xs[pos]
                best = (score, int(f), float(thr))
            if used >= self.mtry:
                break
        return best

    def build(self, idx) -> Tree:
        root, pure = self._new_node(idx)
        stack = [(root, idx, 0, pure)]
        while stack:
            node, nidx, depth, pure = stack.pop()
            if pure or depth >= self.max_depth or nidx.size < 2:
                continue
            split = self._best_split(nidx)
            if split is None:
                continue
            _, f, thr = split
            mask = self.X[nidx, f] <= thr
            li, ri = nidx[mask], nidx[~mask]
            lnode, lpure = self._new_node(li)
            rnode, rpure = self._new_node(ri)
            self.feature[node], self.threshold[node] = f, thr
            self.left[node], self.right[node] = lnode, rnode
            # right first so the left subtree gets the lower node ids
            stack.append((rnode, ri, depth + 1, rpure))
            stack.append((lnode, li, depth + 1, lpure))
        return Tree(
            np.asarray(self.feature, dtype=np.int64),
            np.asarray(self.threshold, dtype=np.float64),
            np.asarray(self.left, dtype=np.int64),
            np.asarray(self.right, dtype=np.int64),
            np.vstack(self.value).astype(np.float64),
            np.asarray(self.n_samples, dtype=np.int64),
            np.asarray(self.impurity, dtype=np.float64),
        )


def _fit_tree(X, y, task, n_classes, max_depth, mtry, seed_seq, bootstrap, backend):
    rng = np.random.default_rng(seed_seq)
    n = X.shape[0]
    idx = rng.integers(0, n, n) if bootstrap else np.arange(n)
    return _TreeBuilder(X, y, task, n_classes, max_depth, mtry, rng, backend).build(np.sort(idx))


def rf_fit(
    ds: Dataset,
    n_trees: int = 50,
    max_depth: int = 12,
    seed: int = 0,
    task: str | None = None,
    max_features: int | None = None,
    bootstrap: bool = True,
    workers: int = 1,
    backend: str | None = None,
) -> RandomForestModel:
    """Train a random forest.

    ``task`` defaults to classification for integer, boolean or string
    targets and regression otherwise. ``max_features`` defaults to
    ``floor(sqrt(d))``. ``workers > 1`` trains trees on a thread pool; the
    result is identical to serial training.
    """
    if ds.y is None or ds.n == 0:
        raise EmptyData("random forest needs a non-empty labelled dataset")
    if task is None:
        task = "regress" if np.issubdtype(ds.y.dtype, np.floating) else "classify"
    if task not in ("classify", "regress"):
        raise ValueError(f"unknown task {task!r}")
    X = ds.X
    if task == "classify":
        classes, y = np.unique(ds.y, return_inverse=True)
        y = y.astype(np.int64)
        n_classes = classes.size
    else:
        classes, y, n_classes = None, ds.y.astype(np.float64), 1
    mtry = max_features or max(1, int(math.isqrt(ds.d)))
    k = kernels.get_backend(backend)
    seeds = np.random.SeedSequence(seed).spawn(n_trees)
    job = lambda s: _fit_tree(X, y, task, n_classes, max_depth, mtry, s, bootstrap, k)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(job, seeds))
    else:
        trees = [job(s) for s in seeds]
    return RandomForestModel(tuple(trees), n_trees, max_depth, seed, task, classes, ds.d, ds.feature_names)


def rf_predict_proba(model: RandomForestModel, X) -> np.ndarray:
    """Mean of per-tree leaf class frequencies."""
    if model.task != "classify":
        raise ValueError("probabilities exist only for classification forests")
    X = np.asarray(X, dtype=np.float64)
    acc = np.zeros((X.shape[0], model.classes.size))
    for t in model.trees:
        acc += t.predict_value(X)
    return acc / len(model.trees)


def rf_predict(model: RandomForestModel, X, return_proba: bool = False):
    """Majority vote (ties to the lowest class) or mean regression output."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if model.task == "regress":
        acc = np.zeros(X.shape[0])
        for t in model.trees:
            acc += t.predict_value(X)[:, 0]
        return acc / len(model.trees)
    votes = np.zeros((X.shape[0], model.classes.size), dtype=np.int64)
    rows = np.arange(X.shape[0])
    for t in model.trees:
        votes[rows, np.argmax(t.predict_value(X), axis=1)] += 1
    labels = model.classes[np.argmax(votes, axis=1)]
    if return_proba:
        return labels, rf_predict_proba(model, X)
    return labels
