"""Cotton phenology: fuzzy metaclass model, ranked-label metrics and continuous-scale estimation."""
from .continuous import (
    ContinuousPrediction,
    DateRegressor,
    ReferenceParcel,
    SkippedDate,
    StageRegressors,
    predict_continuous,
    slope_profile,
    train_stage_regressors,
    truncated_features,
)
from .evaluation import displacement, eval_phenology, ndcg_at_2
from .fcm_model import (
    DOY_FEATURES,
    ElementSpace,
    FcmPhenoModel,
    Prediction,
    baseline_doy,
    build_element_space,
    ensemble_vote,
    fit_ensemble,
    fit_phenology,
    metaclass_from_weights,
    modal_stage_order,
    predict_metaclass,
    truth_metaclass,
)
from .stages import (
    METACLASSES,
    STAGE_DOY_RANGES,
    STAGES,
    ContinuousStage,
    GroundObservation,
    Metaclass,
    Stage,
    admissible_stages,
)
