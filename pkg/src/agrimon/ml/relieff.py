from __future__ import annotations

import numpy as np

from ..errors import EmptyData, KTooLarge
from .dataset import Dataset


def relieff(ds: Dataset, k_neighbors: int = 80, n_samples: int | None = None, seed: int = 0) -> np.ndarray:
    """Multi-class ReliefF feature weights.

    For each sampled instance, the ``k`` nearest hits lower a feature's weight
    by their normalized difference and the ``k`` nearest misses of every
    other class raise it, weighted by that class's prior relative to all
    classes except the instance's own. Differences are scaled by each
    feature's range; Manhattan distance selects neighbours, ties broken by
    row order. ``n_samples=None`` uses every row.
    """
    if ds.y is None or ds.n == 0:
        raise EmptyData("ReliefF needs a labelled dataset")
    X = ds.X
    classes, y = np.unique(ds.y, return_inverse=True)
    counts = np.bincount(y)
    if k_neighbors >= counts.min():
        raise KTooLarge(f"k={k_neighbors} must be smaller than the smallest class ({counts.min()})")
    rng_span = X.max(axis=0) - X.min(axis=0)
    scale = np.where(rng_span > 0, rng_span, 1.0)
    Xn = X / scale
    prior = counts / counts.sum()
    n = ds.n
    if n_samples is None or n_samples >= n:
        rows = np.arange(n)
    else:
        rows = np.sort(np.random.default_rng(seed).choice(n, n_samples, replace=False))
    m = rows.size
    w = np.zeros(ds.d)
    for i in rows:
        diff = np.abs(Xn - Xn[i])
        dist = diff.sum(axis=1)
        ci = y[i]
        for c in range(classes.size):
            cand = np.nonzero(y == c)[0]
            if c == ci:
                cand = cand[cand != i]
            near = cand[np.argsort(dist[cand], kind="stable")[:k_neighbors]]
            contrib = diff[near].sum(axis=0) / (m * k_neighbors)
            if c == ci:
                w -= contrib
            else:
                w += prior[c] / (1.0 - prior[ci]) * contrib
    return w
