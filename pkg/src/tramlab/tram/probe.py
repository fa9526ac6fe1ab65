"""Linear probes on frozen features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from ..nn.losses import log_softmax, one_hot, softmax

PROBE_L2 = 1e-3


@dataclass
class LinearProbe:
    """``features @ weights + bias``: a regression value or class logits."""

    task: str
    weights: np.ndarray
    bias: np.ndarray
    n_iter: int = 0
    grad_norm: float = 0.0

    def decision(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights + self.bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        out = self.decision(features)
        if self.task == "regression":
            return out[:, 0]
        return out.argmax(axis=1)

    def proba(self, features: np.ndarray) -> np.ndarray:
        return softmax(self.decision(features))


def fit_ridge(features: np.ndarray, y: np.ndarray, l2_penalty: float = PROBE_L2) -> LinearProbe:
    """Exact minimizer of sum((y - F w - b)^2) + l2_penalty * |w|^2 (bias unpenalized)."""
    F = np.asarray(features, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, k = F.shape
    f_mean, y_mean = F.mean(axis=0), y.mean()
    Fc = F - f_mean
    gram = Fc.T @ Fc + l2_penalty * np.eye(k)
    rhs = Fc.T @ (y - y_mean)
    if l2_penalty == 0 and np.linalg.matrix_rank(Fc) < k:
        raise np.linalg.LinAlgError("ridge system is singular: collinear features with zero penalty")
    w = np.linalg.solve(gram, rhs)
    return LinearProbe("regression", w[:, None], np.array([y_mean - f_mean @ w]))


def fit_logistic(
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int | None = None,
    l2_penalty: float = PROBE_L2,
    tol: float = 1e-6,
    max_iter: int = 10_000,
) -> LinearProbe:
    """Multinomial logistic regression, last class as the zero reference.

    Minimizes sum of cross-entropies + l2_penalty * |W|^2 (biases unpenalized)
    with full-batch trust-region Newton steps, stopping once the gradient
    norm of the mean objective falls below ``tol`` or after ``max_iter`` steps.
    """
    F = np.asarray(features, dtype=float)
    labels = np.asarray(labels).astype(int)
    n, k = F.shape
    C = n_classes or int(labels.max()) + 1
    T = one_hot(labels, C)[:, : C - 1]
    Fb = np.hstack([F, np.ones((n, 1))])
    pen = np.ones(k + 1)
    pen[k] = 0.0
    pen = 2.0 * l2_penalty / n * np.repeat(pen, C - 1)

    def probs(theta):
        Z = np.hstack([Fb @ theta.reshape(k + 1, C - 1), np.zeros((n, 1))])
        return Z, softmax(Z)[:, : C - 1]

    def fun(theta):
        Z, _ = probs(theta)
        ce = -np.sum(one_hot(labels, C) * log_softmax(Z)) / n
        return ce + 0.5 * np.sum(pen * theta * theta)

    def jac(theta):
        _, P = probs(theta)
        return (Fb.T @ (P - T) / n).ravel() + pen * theta

    def hess(theta):
        _, P = probs(theta)
        # d2/dW_ac dW_bd = mean_i f_ia f_ib (p_ic [c = d] - p_ic p_id)
        cov = np.einsum("ic,cd->icd", P, np.eye(C - 1)) - np.einsum("ic,id->icd", P, P)
        H = np.einsum("ia,ib,icd->acbd", Fb, Fb, cov, optimize=True) / n
        return H.reshape((k + 1) * (C - 1), -1) + np.diag(pen)

    res = minimize(
        fun, np.zeros((k + 1) * (C - 1)), jac=jac, hess=hess, method="trust-exact",
        options={"gtol": tol, "maxiter": max_iter},
    )
    Wb = np.hstack([res.x.reshape(k + 1, C - 1), np.zeros((k + 1, 1))])
    return LinearProbe("classification", Wb[:k], Wb[k], int(res.nit), float(np.linalg.norm(jac(res.x))))


def linear_probe(features: np.ndarray, y: np.ndarray, task: str, l2_penalty: float = PROBE_L2, **kw) -> LinearProbe:
    if task == "regression":
        return fit_ridge(features, y, l2_penalty)
    if task == "classification":
        return fit_logistic(features, y, l2_penalty=l2_penalty, **kw)
    raise ValueError(f"unknown task {task!r}")
