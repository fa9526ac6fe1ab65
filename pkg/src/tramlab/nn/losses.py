"""Batch-mean losses with their gradients w.r.t. the predictions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

VARIANCE_FLOOR = 1e-6
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LossKind:
    """``MSE``, ``SoftmaxCE``, ``GaussianNLL``, ``Distill`` or ``HetSoftmaxCE``.

    ``temperature`` and ``lam`` are only read by ``Distill``.
    """

    name: str
    temperature: float = 1.0
    lam: float = 0.5

    def __post_init__(self) -> None:
        if self.name not in ("MSE", "SoftmaxCE", "GaussianNLL", "Distill", "HetSoftmaxCE"):
            raise ValueError(f"unknown loss {self.name!r}")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")

    @classmethod
    def distill(cls, temperature: float = 3.0, lam: float = 0.5) -> LossKind:
        return cls("Distill", temperature, lam)


MSE = LossKind("MSE")
SOFTMAX_CE = LossKind("SoftmaxCE")
GAUSSIAN_NLL = LossKind("GaussianNLL")
HET_SOFTMAX_CE = LossKind("HetSoftmaxCE")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


def variance_from_raw(s: np.ndarray) -> np.ndarray:
    return np.maximum(softplus(s), VARIANCE_FLOOR)


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        return labels.astype(float)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels.astype(int)] = 1.0
    return out


def _mse(pred, y):
    y = np.asarray(y, dtype=float).reshape(pred.shape)
    diff = pred - y
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def _softmax_ce(logits, y):
    B, C = logits.shape
    target = one_hot(y, C)
    loss = -float(np.sum(target * log_softmax(logits))) / B
    return loss, (softmax(logits) - target) / B


def _gaussian_nll(pred, y):
    """``pred`` is (B, 1) means with unit variance or (B, 2) columns (mean, raw s)."""
    B = pred.shape[0]
    y = np.asarray(y, dtype=float).reshape(B)
    mu = pred[:, 0]
    grad = np.zeros_like(pred)
    if pred.shape[1] == 1:
        r = y - mu
        loss = HALF_LOG_2PI + 0.5 * float(np.mean(r * r))
        grad[:, 0] = -r / B
        return loss, grad
    s = pred[:, 1]
    sp = softplus(s)
    var = np.maximum(sp, VARIANCE_FLOOR)
    r = y - mu
    loss = HALF_LOG_2PI + float(np.mean(0.5 * np.log(var) + 0.5 * r * r / var))
    dvar = 0.5 / var - 0.5 * r * r / (var * var)
    grad[:, 0] = -r / var / B
    grad[:, 1] = np.where(sp > VARIANCE_FLOOR, dvar * sigmoid(s), 0.0) / B
    return loss, grad


def _distill(logits, y, teacher, T, lam):
    B, C = logits.shape
    hard_loss, hard_grad = _softmax_ce(logits, y)
    p_t = softmax(np.asarray(teacher, dtype=float) / T)
    soft_loss = -float(np.sum(p_t * log_softmax(logits / T))) / B * T * T
    soft_grad = (softmax(logits / T) - p_t) * T / B
    return lam * soft_loss + (1.0 - lam) * hard_loss, (1.0 - lam) * hard_grad + lam * soft_grad


def _het_softmax_ce(pred, y, noise):
    """Diagonal Gaussian logit noise: p = mean_k softmax(mu + softplus(s) * xi_k).

    ``pred`` is (B, 2C) with columns [mu, s]; ``noise`` is (K, B, C).
    """
    B = pred.shape[0]
    C = pred.shape[1] // 2
    mu, s = pred[:, :C], pred[:, C:]
    scale = softplus(s)
    logits = mu[None] + scale[None] * noise
    probs = softmax(logits)
    target = one_hot(y, C)
    p_y = np.einsum("kbc,bc->kb", probs, target)
    P = p_y.mean(axis=0)
    loss = -float(np.mean(np.log(np.maximum(P, 1e-300))))
    K = noise.shape[0]
    # d(-log P)/d logits_k = -(1 / (K P)) p_y,k (e_y - p_k)
    dlogits = -(p_y / (K * P[None]))[..., None] * (target[None] - probs) / B
    grad = np.empty_like(pred)
    grad[:, :C] = dlogits.sum(axis=0)
    grad[:, C:] = (dlogits * noise).sum(axis=0) * sigmoid(s)
    return loss, grad


def loss_and_grad(
    kind: LossKind, predictions: np.ndarray, targets: np.ndarray, aux: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """Mean-over-batch loss and its gradient w.r.t. ``predictions``.

    ``aux`` holds teacher logits for ``Distill`` and the (K, B, C) standard
    normal draws for ``HetSoftmaxCE``.
    """
    pred = np.asarray(predictions, dtype=float)
    if pred.ndim != 2:
        raise ValueError(f"predictions must be (batch, width), got {pred.shape}")
    if kind.name == "MSE":
        return _mse(pred, targets)
    if kind.name == "SoftmaxCE":
        return _softmax_ce(pred, targets)
    if kind.name == "GaussianNLL":
        return _gaussian_nll(pred, targets)
    if kind.name == "Distill":
        if aux is None:
            raise ValueError("Distill needs teacher logits")
        return _distill(pred, targets, aux, kind.temperature, kind.lam)
    if aux is None:
        raise ValueError("HetSoftmaxCE needs noise draws")
    return _het_softmax_ce(pred, targets, aux)
