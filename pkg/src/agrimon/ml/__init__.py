"""Clustering, random forests, ReliefF and evaluation metrics."""
from .cluster import FcmModel, KMeansModel, fcm_fit, fcm_membership, kmeans_fit
from .dataset import Dataset
from .forest import RandomForestModel, rf_fit, rf_predict, rf_predict_proba
from .metrics import (
    ConfusionMatrix,
    binary_scores,
    classification_metrics,
    krippendorff_alpha_ordinal,
    mcnemar,
    weighted_kappa,
)
from .persist import load_model, save_model
from .relieff import relieff

__all__ = [
    "ConfusionMatrix",
    "Dataset",
    "FcmModel",
    "KMeansModel",
    "RandomForestModel",
    "binary_scores",
    "classification_metrics",
    "fcm_fit",
    "fcm_membership",
    "kmeans_fit",
    "krippendorff_alpha_ordinal",
    "load_model",
    "mcnemar",
    "relieff",
    "rf_fit",
    "rf_predict",
    "rf_predict_proba",
    "save_model",
    "weighted_kappa",
]
