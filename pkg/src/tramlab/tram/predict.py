"""Test-time predictors: marginal head, conditional head, imputation, full marginalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn.losses import softmax, variance_from_raw
from ..rng import make_rng
from .model import CLASSIFICATION, TramModel, build_graph
from .train import HET_SAMPLES

MAX_BATCH_ROWS = 200_000


@dataclass
class Prediction:
    """Class probabilities, or Gaussian mean and variance per row."""

    probs: np.ndarray | None = None
    mean: np.ndarray | None = None
    var: np.ndarray | None = None

    @property
    def is_classification(self) -> bool:
        return self.probs is not None


def _from_outputs(model: TramModel, out: np.ndarray, het: bool, seed: int) -> Prediction:
    k = model.out_dim
    if model.task == CLASSIFICATION:
        if not het:
            return Prediction(probs=softmax(out))
        mu, scale = out[:, :k], np.logaddexp(0.0, out[:, k:])
        noise = make_rng(seed, "het-predict").standard_normal((HET_SAMPLES, *mu.shape))
        return Prediction(probs=softmax(mu[None] + scale[None] * noise).mean(axis=0))
    mean = out[:, 0]
    var = variance_from_raw(out[:, 1]) if het else np.ones_like(mean)
    return Prediction(mean=mean, var=var)


def predict_marginal(model: TramModel, x: np.ndarray, seed: int = 0) -> Prediction:
    """q(y | x; w). ``seed`` only affects the MC logit noise of a heteroscedastic classifier."""
    g = build_graph(model, x, marginal=True, conditional=False)
    return _from_outputs(model, g.marginal.data, model.is_het, seed)


def conditional_logits(model: TramModel, x: np.ndarray, a: np.ndarray) -> np.ndarray:
    return build_graph(model, x, a, marginal=False, conditional=True).conditional.data


def predict_conditional(model: TramModel, x: np.ndarray, a: np.ndarray) -> Prediction:
    """q(y | x, a; u) through the psi path (homoscedastic for regression)."""
    x = np.asarray(x, dtype=float).reshape(-1, model.input_dim)
    a = np.broadcast_to(np.asarray(a, dtype=float).reshape(-1, model.pi_dim), (x.shape[0], model.pi_dim))
    return _from_outputs(model, conditional_logits(model, x, a), False, 0)


def predict_impute(model: TramModel, x: np.ndarray, mode: str, pi_pool: np.ndarray | None = None) -> Prediction:
    """Conditional prediction with a = 0 or a = mean of the encoded training PI."""
    if mode == "zero":
        a = np.zeros(model.pi_dim)
    elif mode == "mean":
        if pi_pool is None or len(pi_pool) == 0:
            raise ValueError("mean imputation needs a non-empty PI pool")
        a = np.asarray(pi_pool, dtype=float).reshape(len(pi_pool), -1).mean(axis=0)
    else:
        raise ValueError(f"unknown imputation mode {mode!r}")
    return predict_conditional(model, x, a)


def predict_full_marg(model: TramModel, x: np.ndarray, pi_pool: np.ndarray, S: int, seed: int = 0) -> Prediction:
    """Average conditional predictions over S PI vectors from the training pool.

    S equal to the pool size uses every vector once (an exact pool average);
    otherwise indices are drawn with replacement. Classification averages
    probabilities; regression returns the mean and variance of the mixture.
    """
    pool = np.asarray(pi_pool, dtype=float)
    if pool.size == 0:
        raise ValueError("empty PI pool")
    pool = pool.reshape(len(pool), -1)
    if S < 1:
        raise ValueError("S must be at least 1")
    if S > len(pool):
        raise ValueError(f"S={S} exceeds the pool size {len(pool)}")
    if S == len(pool):
        idx = np.arange(S)
    else:
        idx = make_rng(seed, "full-marg").integers(0, len(pool), size=S)
    x = np.asarray(x, dtype=float).reshape(-1, model.input_dim)
    n = x.shape[0]
    chunk = max(1, MAX_BATCH_ROWS // max(n, 1))
    first = second = None
    for start in range(0, S, chunk):
        sel = pool[idx[start : start + chunk]]
        k = len(sel)
        pred = predict_conditional(model, np.tile(x, (k, 1)), np.repeat(sel, n, axis=0))
        if pred.probs is not None:
            part = pred.probs.reshape(k, n, -1).sum(axis=0)
            first = part if first is None else first + part
            continue
        means = pred.mean.reshape(k, n)
        m1, m2 = means.sum(axis=0), (pred.var.reshape(k, n) + means**2).sum(axis=0)
        first = m1 if first is None else first + m1
        second = m2 if second is None else second + m2
    if second is None:
        return Prediction(probs=first / S)
    mean = first / S
    return Prediction(mean=mean, var=np.maximum(second / S - mean**2, 0.0))
