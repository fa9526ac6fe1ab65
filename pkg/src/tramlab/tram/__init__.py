"""TRAM models, baselines, training loops, predictors and probes."""

from .evaluate import (
    DISTILL_NO_PI,
    DISTILLED_TRAM,
    HET_TRAM,
    MEAN_IMPUTE,
    NO_PI,
    ORACLE_TEACHER,
    TRAM,
    ZERO_IMPUTE,
    PredictorKind,
    RunResult,
    evaluate,
    predict_kind,
)
from .model import CLASSIFICATION, REGRESSION, TramModel, TramWidths, build_graph, build_no_pi, build_tram, features
from .predict import (
    Prediction,
    predict_conditional,
    predict_full_marg,
    predict_impute,
    predict_marginal,
)
from .probe import LinearProbe, fit_logistic, fit_ridge, linear_probe
from .train import (
    TrainConfig,
    TrainResult,
    fit_marginal_head,
    train,
    train_conditional,
    train_distilled,
    train_no_pi,
    train_one_step,
    train_two_step,
)

__all__ = [
    "CLASSIFICATION", "DISTILLED_TRAM", "DISTILL_NO_PI", "HET_TRAM", "LinearProbe", "MEAN_IMPUTE",
    "NO_PI", "ORACLE_TEACHER", "PredictorKind", "Prediction", "REGRESSION", "RunResult", "TRAM",
    "TrainConfig", "TrainResult", "TramModel", "TramWidths", "ZERO_IMPUTE", "build_graph",
    "build_no_pi", "build_tram", "evaluate", "features", "fit_logistic", "fit_marginal_head",
    "fit_ridge", "linear_probe", "predict_conditional", "predict_full_marg", "predict_impute",
    "predict_kind", "predict_marginal", "train", "train_conditional", "train_distilled",
    "train_no_pi", "train_one_step", "train_two_step",
]
