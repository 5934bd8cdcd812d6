"""Ranked-label metrics for metaclass predictions."""
from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

from ..errors import EmptyEval
from ..ml.metrics import ConfusionMatrix, weighted_kappa
from .stages import Metaclass


def displacement(pred: Metaclass, truth: Metaclass) -> int:
    """Distance between the two metaclasses in the 16-element ordering."""
    return abs(pred.index - truth.index)


def _ranking(p) -> tuple:
    if hasattr(p, "ranking"):
        return tuple(p.ranking)
    m = _meta(p)
    return (m.primary,) if m.secondary is None else (m.primary, m.secondary)


def _meta(p) -> Metaclass:
    return p.metaclass if hasattr(p, "metaclass") else p


def ndcg_at_2(ranking, truth: Metaclass) -> float:
    """NDCG over the top two ranked stages, relevance 2 for the true primary and 1 for the true secondary."""
    rel = {truth.primary: 2.0}
    if truth.secondary is not None:
        rel[truth.secondary] = 1.0
    top = list(ranking)[:2]
    dcg = sum(rel.get(s, 0.0) / math.log2(i + 2) for i, s in enumerate(top))
    ideal = sorted(rel.values(), reverse=True)[:2]
    idcg = sum(r / math.log2(i + 2) for i, r in enumerate(ideal))
    return dcg / idcg


def eval_phenology(preds, truths, max_offset: int = 3) -> dict:
    """Agreement of predicted with observed metaclasses.

    ``preds`` holds Metaclass objects or predictions carrying ``metaclass``
    and ``ranking``. Returns maxdiff-0..3 (share of displacements within o),
    Cohen's kappa with linear and quadratic variants over the 16 ordered
    metaclasses, mean NDCG@2 and the mean displacement per true metaclass.
    """
    preds = list(preds)
    truths = list(truths)
    if not preds or len(preds) != len(truths):
        raise EmptyEval("need equally many, and at least one, predictions and truths")
    metas = [_meta(p) for p in preds]
    disp = np.array([displacement(p, t) for p, t in zip(metas, truths)])
    out = {f"maxdiff-{o}": float((disp <= o).mean()) for o in range(max_offset + 1)}
    cm = ConfusionMatrix.from_labels([t.index for t in truths], [m.index for m in metas], labels=range(1, 17))
    out["kappa"] = weighted_kappa(cm, "none")
    out["kappa_linear"] = weighted_kappa(cm, "linear")
    out["kappa_quadratic"] = weighted_kappa(cm, "quadratic")
    out["ndcg@2"] = float(np.mean([ndcg_at_2(_ranking(p), t) for p, t in zip(preds, truths)]))
    per = defaultdict(list)
    for d, t in zip(disp, truths):
        per[t.index].append(d)
    out["mean_displacement"] = {k: float(np.mean(v)) for k, v in sorted(per.items())}
    out["n"] = len(preds)
    return out
