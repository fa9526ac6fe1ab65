"""Predictor kinds, metrics and the evaluation entry point."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .model import CLASSIFICATION, TramModel
from .predict import (
    Prediction,
    predict_conditional,
    predict_full_marg,
    predict_impute,
    predict_marginal,
)

PROB_FLOOR = 1e-12

_KINDS = (
    "NoPI", "ZeroImpute", "MeanImpute", "FullMarg", "TRAM", "HetTRAM",
    "DistillNoPI", "DistilledTRAM", "OracleTeacher",
)


@dataclass(frozen=True)
class PredictorKind:
    """A baseline or TRAM variant; ``S`` is the sample count of ``FullMarg``."""

    name: str
    S: int | None = None

    def __post_init__(self) -> None:
        if self.name not in _KINDS:
            raise ValueError(f"unknown predictor kind {self.name!r}")
        if (self.name == "FullMarg") != (self.S is not None):
            raise ValueError("S is required for FullMarg and only for FullMarg")
        if self.S is not None and self.S < 1:
            raise ValueError("S must be positive")

    @classmethod
    def full_marg(cls, S: int) -> PredictorKind:
        return cls("FullMarg", S)

    @classmethod
    def parse(cls, text: str) -> PredictorKind:
        text = text.strip()
        if text.startswith("FullMarg"):
            inner = text[len("FullMarg") :].strip("()").replace("S=", "")
            return cls("FullMarg", int(inner))
        return cls(text)

    def __str__(self) -> str:
        return f"FullMarg(S={self.S})" if self.S is not None else self.name

    @property
    def needs_pi_model(self) -> bool:
        return self.name not in ("NoPI", "DistillNoPI")


NO_PI = PredictorKind("NoPI")
ZERO_IMPUTE = PredictorKind("ZeroImpute")
MEAN_IMPUTE = PredictorKind("MeanImpute")
TRAM = PredictorKind("TRAM")
HET_TRAM = PredictorKind("HetTRAM")
DISTILL_NO_PI = PredictorKind("DistillNoPI")
DISTILLED_TRAM = PredictorKind("DistilledTRAM")
ORACLE_TEACHER = PredictorKind("OracleTeacher")


@dataclass
class RunResult:
    predictor: PredictorKind
    seed: int
    metrics: dict[str, float] = field(default_factory=dict)


def nll(pred: Prediction, y: np.ndarray) -> float:
    """Mean negative log-likelihood; class probabilities are clamped at 1e-12."""
    if pred.probs is not None:
        p = pred.probs[np.arange(len(y)), np.asarray(y).astype(int)]
        return float(-np.mean(np.log(np.maximum(p, PROB_FLOOR))))
    r = np.asarray(y, dtype=float) - pred.mean
    return float(np.mean(0.5 * np.log(2 * math.pi * pred.var) + 0.5 * r * r / pred.var))


def accuracy(pred: Prediction, y: np.ndarray) -> float:
    return float(np.mean(pred.probs.argmax(axis=1) == np.asarray(y).astype(int)))


def rmse(values: np.ndarray, reference: np.ndarray) -> float:
    d = np.asarray(values, dtype=float) - np.asarray(reference, dtype=float)
    return float(np.sqrt(np.mean(d * d)))


def predict_kind(
    kind: PredictorKind,
    model: TramModel,
    x: np.ndarray,
    a: np.ndarray | None = None,
    pi_pool: np.ndarray | None = None,
    seed: int = 0,
) -> Prediction:
    """Dispatch a predictor kind to the matching prediction routine."""
    if kind.needs_pi_model and not model.has_pi:
        raise ValueError(f"{kind} needs a model with a PI path")
    if kind.name in ("NoPI", "DistillNoPI") and model.has_pi:
        raise ValueError(f"{kind} expects a model trained without PI")
    if kind.name == "HetTRAM" and not model.is_het:
        raise ValueError("HetTRAM needs a heteroscedastic marginal head")
    if kind.name in ("NoPI", "DistillNoPI", "TRAM", "HetTRAM", "DistilledTRAM"):
        return predict_marginal(model, x, seed)
    if kind.name == "ZeroImpute":
        return predict_impute(model, x, "zero")
    if kind.name == "MeanImpute":
        return predict_impute(model, x, "mean", pi_pool)
    if kind.name == "FullMarg":
        if pi_pool is None:
            raise ValueError("FullMarg needs the training PI pool")
        return predict_full_marg(model, x, pi_pool, kind.S, seed)
    if a is None:
        raise ValueError("OracleTeacher needs the evaluation PI")
    return predict_conditional(model, x, a)


def evaluate(
    kind: PredictorKind,
    model: TramModel,
    data,
    reference_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    pi_pool: np.ndarray | None = None,
    seed: int = 0,
) -> RunResult:
    """NLL, accuracy (classification) and RMSE of the predictive mean to ``reference_fn``.

    For classification with a reference, ``reference_match`` is the rate at
    which the argmax agrees with the reference labels.
    """
    pred = predict_kind(kind, model, data.x, data.a_encoded, pi_pool, seed)
    metrics = {"nll": nll(pred, data.y)}
    if model.task == CLASSIFICATION:
        metrics["accuracy"] = accuracy(pred, data.y)
        if reference_fn is not None:
            ref = np.asarray(reference_fn(data.x[:, 0])).astype(int)
            metrics["reference_match"] = float(np.mean(pred.probs.argmax(axis=1) == ref))
    elif reference_fn is not None:
        metrics["rmse_to_reference"] = rmse(pred.mean, reference_fn(data.x[:, 0]))
    return RunResult(kind, seed, metrics)
