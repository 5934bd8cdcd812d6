"""Pure numpy implementations of the hot loops.

Each function reproduces the floating-point operation order of its compiled
twin in ``_ckernels.pyx`` so both backends return bit-identical results.
"""
import numpy as np

MEAN, MIN, MAX, COUNT = 0, 1, 2, 3


def zonal_reduce(values, ids, n_ids, reducer):
    n_slices = values.shape[0]
    out = np.full((n_slices, n_ids), np.nan)
    for s in range(n_slices):
        row = values[s]
        ok = (ids >= 0) & ~np.isnan(row)
        z = ids[ok]
        v = row[ok]
        cnt = np.bincount(z, minlength=n_ids)
        has = cnt > 0
        if reducer == MEAN:
            # bincount accumulates sequentially in pixel order
            tot = np.bincount(z, weights=v, minlength=n_ids)
            out[s, has] = tot[has] / cnt[has].astype(np.float64)
        elif reducer == MIN:
            acc = np.full(n_ids, np.inf)
            np.minimum.at(acc, z, v)
            out[s, has] = acc[has]
        elif reducer == MAX:
            acc = np.full(n_ids, -np.inf)
            np.maximum.at(acc, z, v)
            out[s, has] = acc[has]
        elif reducer == COUNT:
            out[s, has] = cnt[has].astype(np.float64)
        else:
            raise ValueError(f"unknown reducer code {reducer}")
    return out


def best_split_classify(xs, ys, n_classes):
    n = xs.shape[0]
    if n < 2:
        return -1.0, -1
    onehot = np.zeros((n, n_classes), dtype=np.int64)
    onehot[np.arange(n), ys] = 1
    left = np.cumsum(onehot, axis=0)[:-1]
    right = left[-1] + onehot[-1] - left
    s_left = (left * left).sum(axis=1)
    s_right = (right * right).sum(axis=1)
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    score = s_left.astype(np.float64) / n_left + s_right.astype(np.float64) / n_right
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return -1.0, -1
    score = np.where(valid, score, -np.inf)
    pos = int(np.argmax(score))
    return float(score[pos]), pos


def best_split_regress(xs, ys):
    n = xs.shape[0]
    if n < 2:
        return -1.0, -1
    csum = np.cumsum(ys)
    total = csum[-1]
    s_left = csum[:-1]
    s_right = total - s_left
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    score = s_left * s_left / n_left + s_right * s_right / n_right
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return -1.0, -1
    score = np.where(valid, score, -np.inf)
    pos = int(np.argmax(score))
    return float(score[pos]), pos
