"""Synthetic noisy-annotator tasks, PI encoders and a binned CMI estimator.

Regression task: with a ~ Bernoulli(p_noise) flagging the noisy annotator,

    y = (1 - a) sin(2 pi x) + a v + eps,   v ~ U(-1, 1),  eps ~ N(0, eps_std^2).

The classification task thresholds sigmoid of the same score at 0.5.
"""

from __future__ import annotations

import csv
import math
import warnings
from collections.abc import Iterator
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .rng import make_rng


@dataclass(frozen=True)
class RegressionTaskSpec:
    n: int = 2500
    p_noise: float = 0.3
    eps_std: float = 0.1
    x_domain: tuple[float, float] = (0.0, 1.0)
    v_range: tuple[float, float] = (-1.0, 1.0)
    # extra PI column "hint" = a * v + N(0, hint_std^2), quantile-encoded; off by default
    with_hint: bool = False
    hint_std: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_noise <= 1.0:
            raise ValueError("p_noise must lie in [0, 1]")
        if not self.eps_std > 0:
            raise ValueError("eps_std must be positive")


@dataclass(frozen=True)
class ClassificationTaskSpec:
    n: int = 20000
    p_noise: float = 0.3
    eps_std: float = 0.4
    x_domain: tuple[float, float] = (-2.0, 2.0)
    v_range: tuple[float, float] = (-1.0, 1.0)
    threshold: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if not 0.0 <= self.p_noise <= 1.0:
            raise ValueError("p_noise must lie in [0, 1]")
        if not self.eps_std >= 0:
            raise ValueError("eps_std must be non-negative")


@dataclass
class PITriplet:
    x: np.ndarray
    a_raw: dict[str, float]
    a_encoded: np.ndarray
    y: float | int
    is_noisy: bool
    v: float


@dataclass
class PIDataset:
    """Column-stored (x, a, y) triplets; iterating yields :class:`PITriplet`.

    ``is_noisy`` and ``v`` are generator bookkeeping and are never model inputs.
    """

    x: np.ndarray
    a_raw: dict[str, np.ndarray]
    a_encoded: np.ndarray
    y: np.ndarray
    is_noisy: np.ndarray
    v: np.ndarray
    task: str = "regression"
    pi_columns: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, i: int) -> PITriplet:
        return PITriplet(
            x=self.x[i],
            a_raw={k: float(v[i]) for k, v in self.a_raw.items()},
            a_encoded=self.a_encoded[i],
            y=self.y[i].item(),
            is_noisy=bool(self.is_noisy[i]),
            v=float(self.v[i]),
        )

    def __iter__(self) -> Iterator[PITriplet]:
        return (self[i] for i in range(len(self)))

    @property
    def n_classes(self) -> int:
        return int(self.y.max()) + 1 if self.task == "classification" else 0

    def subset(self, idx: np.ndarray) -> PIDataset:
        return replace(
            self,
            x=self.x[idx],
            a_raw={k: v[idx] for k, v in self.a_raw.items()},
            a_encoded=self.a_encoded[idx],
            y=self.y[idx],
            is_noisy=self.is_noisy[idx],
            v=self.v[idx],
        )

    def drop_pi(self, prefixes: list[str]) -> PIDataset:
        """Remove encoded PI columns whose names start with any of ``prefixes``."""
        keep = [i for i, c in enumerate(self.pi_columns) if not any(c.startswith(p) for p in prefixes)]
        return replace(
            self,
            a_encoded=self.a_encoded[:, keep],
            pi_columns=[self.pi_columns[i] for i in keep],
        )

    def to_csv(self, path: str | Path) -> None:
        """Write one row per triplet; floats use 17 significant digits."""
        raw_keys = list(self.a_raw)
        header = ["x", *(f"a_raw.{k}" for k in raw_keys)]
        header += [f"a_enc_{j}" for j in range(self.a_encoded.shape[1])]
        header += ["y", "latent.is_noisy", "latent.v"]
        fmt = "{:.17g}".format
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(len(self)):
                row = [fmt(float(self.x[i, 0]))]
                row += [fmt(float(self.a_raw[k][i])) for k in raw_keys]
                row += [fmt(float(e)) for e in self.a_encoded[i]]
                row += [str(int(self.y[i])) if self.task == "classification" else fmt(float(self.y[i]))]
                row += [str(int(self.is_noisy[i])), fmt(float(self.v[i]))]
                writer.writerow(row)


def _draw_noise_sources(spec, seed: int, stream: str, split: str):
    rng = make_rng(seed, stream, split)
    n = spec.n
    x = rng.uniform(*spec.x_domain, size=n)
    a = (rng.uniform(size=n) < spec.p_noise).astype(int)
    v = rng.uniform(*spec.v_range, size=n)
    eps = spec.eps_std * rng.standard_normal(n)
    return rng, x, a, v, eps


def gen_regression(spec: RegressionTaskSpec, seed: int, split: str = "train") -> PIDataset:
    """``split`` names an independent stream, so held-out sets never overlap training draws."""
    rng, x, a, v, eps = _draw_noise_sources(spec, seed, "regression", split)
    y = (1 - a) * np.sin(2 * np.pi * x) + a * v + eps
    a_raw = {"a": a.astype(float)}
    encoded = [a[:, None].astype(float)]
    columns = ["a"]
    if spec.with_hint:
        hint = a * v + spec.hint_std * rng.standard_normal(spec.n)
        a_raw["hint"] = hint
        enc = encode_quantile(hint, 10)
        encoded.append(enc.matrix)
        columns += [f"hint.q{j}" for j in range(enc.matrix.shape[1])]
    return PIDataset(
        x=x[:, None],
        a_raw=a_raw,
        a_encoded=np.hstack(encoded),
        y=y,
        is_noisy=a.astype(bool),
        v=v,
        task="regression",
        pi_columns=columns,
    )


def true_marginal_regression(x: np.ndarray | float, p_noise: float = 0.3) -> np.ndarray | float:
    """E[y | x] under the regression task (v has mean zero)."""
    return (1.0 - p_noise) * np.sin(2 * np.pi * np.asarray(x, dtype=float))


def gen_classification(spec: ClassificationTaskSpec, seed: int, split: str = "train") -> PIDataset:
    _, x, a, v, eps = _draw_noise_sources(spec, seed, "classification", split)
    score = 1.0 / (1.0 + np.exp(-((1 - a) * np.sin(2 * np.pi * x) + a * v + eps)))
    label = (score > spec.threshold).astype(int)
    return PIDataset(
        x=x[:, None],
        a_raw={"a": a.astype(float)},
        a_encoded=a[:, None].astype(float),
        y=label,
        is_noisy=a.astype(bool),
        v=v,
        task="classification",
        pi_columns=["a"],
    )


@dataclass(frozen=True)
class HetRegressionTaskSpec:
    """Annotator mixture with x-dependent disagreement.

    Annotator ``m`` (uniform over ``M``) reports y ~ N(mu_m(x), noise_std^2) with
    mu_m(x) = sin(2 pi x) + spread * x * c_m and offsets c_m evenly spaced in
    [-1, 1]. The annotator ID is the PI, one-hot encoded.
    """

    n: int = 2500
    M: int = 2
    spread: float = 2.0
    noise_std: float = 1.0
    x_domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self) -> None:
        if self.M < 1:
            raise ValueError("need at least one annotator")
        if not self.noise_std > 0:
            raise ValueError("noise_std must be positive")

    def offsets(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.M) if self.M > 1 else np.zeros(1)

    def component_means(self, x: np.ndarray) -> np.ndarray:
        """(len(x), M) matrix of annotator means."""
        x = np.asarray(x, dtype=float).reshape(-1, 1)
        return np.sin(2 * np.pi * x) + self.spread * x * self.offsets()[None, :]


def gen_het_regression(spec: HetRegressionTaskSpec, seed: int, split: str = "train") -> PIDataset:
    rng = make_rng(seed, "het-regression", split)
    x = rng.uniform(*spec.x_domain, size=spec.n)
    ann = rng.integers(0, spec.M, size=spec.n)
    mu = spec.component_means(x)[np.arange(spec.n), ann]
    y = mu + spec.noise_std * rng.standard_normal(spec.n)
    return PIDataset(
        x=x[:, None],
        a_raw={"annotator": ann.astype(float)},
        a_encoded=encode_one_hot(ann, list(range(spec.M))),
        y=y,
        is_noisy=np.zeros(spec.n, dtype=bool),
        v=np.zeros(spec.n),
        task="regression",
        pi_columns=[f"annotator.{m}" for m in range(spec.M)],
    )


def oracle_probability(
    x: np.ndarray | float, spec: ClassificationTaskSpec = ClassificationTaskSpec(), n_quad: int = 64
) -> np.ndarray:
    """P(label = 1 | x) with a, v and eps integrated out.

    The eps integral is the normal CDF; v uses Gauss-Legendre nodes on its range.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    cut = math.log(spec.threshold / (1.0 - spec.threshold))  # sigmoid(z) > t  <=>  z > cut

    def p_above(z_mean: np.ndarray) -> np.ndarray:
        if spec.eps_std == 0:
            return (z_mean > cut).astype(float)
        return ndtr((z_mean - cut) / spec.eps_std)

    clean = p_above(np.sin(2 * np.pi * x))
    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    lo, hi = spec.v_range
    v_nodes = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    noisy = float(np.sum(0.5 * weights * p_above(v_nodes)))
    return (1.0 - spec.p_noise) * clean + spec.p_noise * noisy


def oracle_classifier(
    x: np.ndarray | float, spec: ClassificationTaskSpec = ClassificationTaskSpec()
) -> np.ndarray:
    """Bayes label after marginalizing every noise source (ties go to class 0)."""
    return (oracle_probability(x, spec) > 0.5).astype(int)


# ---------------------------------------------------------------------------
# PI encoders
# ---------------------------------------------------------------------------


@dataclass
class OneHotEncoder:
    categories: list = field(default_factory=list)

    def fit(self, values) -> OneHotEncoder:
        seen: dict = {}
        for v in values:
            seen.setdefault(v, len(seen))
        self.categories = list(seen)
        return self

    def transform(self, values) -> np.ndarray:
        index = {c: i for i, c in enumerate(self.categories)}
        values = list(values)
        out = np.zeros((len(values), len(self.categories)))
        for row, v in enumerate(values):
            j = index.get(v)
            if j is not None:
                out[row, j] = 1.0
        return out


def encode_one_hot(values, categories: list | None = None) -> np.ndarray:
    """One-hot columns in first-appearance order; unseen categories encode as zeros."""
    enc = OneHotEncoder(list(categories)) if categories is not None else OneHotEncoder().fit(values)
    return enc.transform(values)


@dataclass
class QuantileEncoding:
    matrix: np.ndarray
    edges: np.ndarray
    degenerate: bool = False


def quantile_edges(values: np.ndarray, q: int = 10) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if q < 2:
        raise ValueError("q must be at least 2")
    if values.size < q:
        raise ValueError(f"need at least {q} values, got {values.size}")
    return np.quantile(values, np.arange(1, q) / q)


def encode_quantile(values, q: int = 10, edges: np.ndarray | None = None) -> QuantileEncoding:
    """One-hot bin index over ``q`` empirical-quantile bins.

    Values equal to an edge go to the lower bin. With ``edges`` from a training
    column, out-of-range values clamp to the first or last bin. A constant
    training column falls back to a single bin and sets ``degenerate``.
    """
    values = np.asarray(values, dtype=float)
    if edges is None:
        if np.ptp(values) == 0 and values.size >= q:
            warnings.warn("constant column: quantile encoding collapses to one bin", stacklevel=2)
            return QuantileEncoding(np.ones((values.size, 1)), np.zeros(0), degenerate=True)
        edges = quantile_edges(values, q)
    if edges.size == 0:
        return QuantileEncoding(np.ones((values.size, 1)), edges, degenerate=True)
    bins = np.searchsorted(edges, values, side="left")
    out = np.zeros((values.size, edges.size + 1))
    out[np.arange(values.size), bins] = 1.0
    return QuantileEncoding(out, edges)


# ---------------------------------------------------------------------------
# conditional mutual information
# ---------------------------------------------------------------------------


@dataclass
class CMIEstimate:
    value: float
    sparse_bins: bool
    bins_x: int
    bins_y: int


def _equal_width_bins(values: np.ndarray, bins: int) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros(values.size, dtype=int)
    idx = np.floor((values - lo) / (hi - lo) * bins).astype(int)
    return np.clip(idx, 0, bins - 1)


def estimate_cmi(data: PIDataset, bins_x: int = 20, bins_y: int = 20) -> CMIEstimate:
    """Plug-in estimate of I(y; a | x) in nats from a histogram over (x, a, y).

    x and continuous y use equal-width bins over their observed ranges; a
    label y with at most ``bins_y`` distinct values is used as is.
    """
    x = np.asarray(data.x, dtype=float).reshape(len(data), -1)[:, 0]
    _, a_idx = np.unique(data.a_encoded, axis=0, return_inverse=True)
    a_idx = a_idx.ravel()
    y = np.asarray(data.y)
    y_vals = np.unique(y)
    if y_vals.size <= bins_y and (data.task == "classification" or y_vals.size <= 2):
        y_idx = np.searchsorted(y_vals, y)
        n_y = y_vals.size
    else:
        y_idx = _equal_width_bins(y.astype(float), bins_y)
        n_y = bins_y
    x_idx = _equal_width_bins(x, bins_x)
    n_a = int(a_idx.max()) + 1
    counts = np.zeros((bins_x, n_a, n_y))
    np.add.at(counts, (x_idx, a_idx, y_idx), 1.0)
    p = counts / counts.sum()
    p_x = p.sum(axis=(1, 2), keepdims=True)
    p_xa = p.sum(axis=2, keepdims=True)
    p_xy = p.sum(axis=1, keepdims=True)
    nz = p > 0
    num = (p * np.broadcast_to(p_x, p.shape))[nz]
    den = (np.broadcast_to(p_xa, p.shape) * np.broadcast_to(p_xy, p.shape))[nz]
    value = float(np.sum(p[nz] * np.log(num / den)))
    return CMIEstimate(value, len(data) / bins_x < 10, bins_x, n_y)
