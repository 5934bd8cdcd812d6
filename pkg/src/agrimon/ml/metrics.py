"""Accuracy metrics, agreement statistics and significance tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyEval, UndefinedStatistic


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = truth and columns = prediction."""

    counts: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (c < 0).any():
            raise ValueError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", c)
        labels = tuple(self.labels) or tuple(range(c.shape[0]))
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_labels(cls, truth, pred, labels=None) -> "ConfusionMatrix":
        truth = np.asarray(truth)
        pred = np.asarray(pred)
        if truth.size == 0:
            raise EmptyEval("no predictions to evaluate")
        if labels is None:
            labels = np.unique(np.concatenate([truth, pred]))
        labels = list(labels)
        pos = {v: i for i, v in enumerate(labels)}
        cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
        np.add.at(cm, ([pos[v] for v in truth.tolist()], [pos[v] for v in pred.tolist()]), 1)
        return cls(cm, tuple(labels))

    @property
    def total(self):
        return self.counts.sum()


def _div(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(b > 0, a / np.where(b > 0, b, 1.0), np.nan)


def weighted_kappa(cm: ConfusionMatrix, weights: str = "none") -> float:
    """Cohen's kappa; ``weights`` is 'none', 'linear' or 'quadratic'."""
    O = cm.counts.astype(np.float64)
    n = O.sum()
    if n == 0:
        raise EmptyEval("empty confusion matrix")
    c = O.shape[0]
    i, j = np.indices((c, c))
    if weights == "none":
        W = (i != j).astype(np.float64)
    elif weights in ("linear", "quadratic"):
        W = np.abs(i - j) / max(c - 1, 1)
        if weights == "quadratic":
            W = W**2
    else:
        raise ValueError(f"unknown weighting {weights!r}")
    E = np.outer(O.sum(axis=1), O.sum(axis=0)) / n
    expected = (W * E).sum()
    if expected == 0:
        return 1.0 if (W * O).sum() == 0 else float("nan")
    return float(1.0 - (W * O).sum() / expected)


def classification_metrics(cm: ConfusionMatrix) -> dict:
    """Per-class producer's/user's accuracy and F1, overall accuracy and kappas.

    PA (recall) is the diagonal over the truth-row total, UA (precision) the
    diagonal over the predicted-column total. Undefined ratios are NaN.
    """
    O = cm.counts
    total = O.sum()
    if total == 0:
        raise EmptyEval("empty confusion matrix")
    diag = np.diag(O)
    pa = _div(diag, O.sum(axis=1))
    ua = _div(diag, O.sum(axis=0))
    f1 = _div(2 * pa * ua, pa + ua)
    per_class = {
        lab: {"PA": float(pa[k]), "UA": float(ua[k]), "F1": float(f1[k])} for k, lab in enumerate(cm.labels)
    }
    return {
        "per_class": per_class,
        "overall_accuracy": float(diag.sum() / total),
        "kappa": weighted_kappa(cm, "none"),
        "kappa_linear": weighted_kappa(cm, "linear"),
        "kappa_quadratic": weighted_kappa(cm, "quadratic"),
    }


def binary_scores(truth, pred) -> dict:
    """Precision, recall and F1 of boolean predictions against boolean truth."""
    truth = np.asarray(truth, dtype=bool)
    pred = np.asarray(pred, dtype=bool)
    tp = int((truth & pred).sum())
    fp = int((~truth & pred).sum())
    fn = int((truth & ~pred).sum())
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return {"precision": p, "recall": r, "f1": f, "tp": tp, "fp": fp, "fn": fn}


def mcnemar(n_ab: int, n_ba: int) -> float:
    """McNemar chi-square ``(n_ab - n_ba)^2 / (n_ab + n_ba)`` (no continuity correction)."""
    if n_ab < 0 or n_ba < 0:
        raise ValueError("counts must be non-negative")
    if n_ab + n_ba == 0:
        raise UndefinedStatistic("McNemar statistic undefined without discordant pairs")
    return (n_ab - n_ba) ** 2 / (n_ab + n_ba)


def coincidence_matrix(ratings) -> tuple[np.ndarray, np.ndarray]:
    """Krippendorff coincidence matrix over the sorted distinct values.

    ``ratings`` is raters x items with NaN for missing. Items with fewer
    than two ratings are not pairable and are ignored.
    """
    R = np.asarray(ratings, dtype=np.float64)
    if R.ndim != 2:
        raise ValueError("ratings must be raters x items")
    values = np.unique(R[~np.isnan(R)])
    pos = {v: i for i, v in enumerate(values.tolist())}
    o = np.zeros((values.size, values.size))
    for col in R.T:
        vals = col[~np.isnan(col)]
        mu = vals.size
        if mu < 2:
            continue
        cnt = np.zeros(values.size)
        for v in vals.tolist():
            cnt[pos[v]] += 1
        # ordered pairs of distinct raters within the item
        o += (np.outer(cnt, cnt) - np.diag(cnt)) / (mu - 1)
    return o, values


def krippendorff_alpha_ordinal(ratings) -> float:
    """Krippendorff's alpha with the ordinal distance metric.

    Raises UndefinedStatistic when no item is pairable or when all pairable
    values are identical (expected disagreement zero).
    """
    o, _ = coincidence_matrix(ratings)
    nc = o.sum(axis=1)
    n = nc.sum()
    if n < 2:
        raise UndefinedStatistic("no pairable ratings")
    cum = np.concatenate([[0.0], np.cumsum(nc)])
    k = nc.size
    delta2 = np.zeros((k, k))
    for a in range(k):
        for b in range(k):
            lo, hi = min(a, b), max(a, b)
            delta2[a, b] = (cum[hi + 1] - cum[lo] - (nc[a] + nc[b]) / 2.0) ** 2
    d_o = (o * delta2).sum()
    d_e = (np.outer(nc, nc) * delta2).sum()
    if d_e == 0:
        raise UndefinedStatistic("alpha undefined when all ratings share one value")
    return float(1.0 - (n - 1) * d_o / d_e)
