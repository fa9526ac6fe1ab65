"""Exact checks of the information-theoretic and variational claims behind TRAM.

* conditioning on informative PI lowers the label entropy,
* the marginal p(y|x) minimizes the expected KL to p(y|x, a) over all q(y|x),
* the expected-KL-optimal Gaussian for a mixture of unit-variance annotator
  models is moment matched, so its variance varies with x.

Entropies are in nats.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .rng import make_rng

NORMALIZATION_TOL = 1e-12
IDENTITY_TOL = 1e-10
SIGMA2_BRACKET = (1e-4, 1e6)
GOLDEN_TOL = 1e-10


@dataclass
class DiscreteJoint:
    """Joint probability table p[x, a, y]."""

    p: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 3:
            raise ValueError(f"joint must be indexed (x, a, y), got shape {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("joint has negative or non-finite entries")
        if abs(p.sum() - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"joint sums to {p.sum()!r}, not 1")
        self.p = p

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.p.shape

    @classmethod
    def random(cls, shape: tuple[int, int, int], seed: int, concentration: float = 1.0) -> DiscreteJoint:
        rng = make_rng(seed, "joint")
        p = rng.dirichlet(np.full(int(np.prod(shape)), concentration)).reshape(shape)
        return cls(p / p.sum())

    def conditional_y_given_xa(self) -> np.ndarray:
        p_xa = self.p.sum(axis=2, keepdims=True)
        return np.divide(self.p, p_xa, out=np.zeros_like(self.p), where=p_xa > 0)

    def marginal_y_given_x(self) -> np.ndarray:
        p_xy = self.p.sum(axis=1)
        p_x = p_xy.sum(axis=1, keepdims=True)
        return np.divide(p_xy, p_x, out=np.zeros_like(p_xy), where=p_x > 0)


def _xlogy_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """num * log(num / den) with 0 log 0 = 0."""
    out = np.zeros_like(num)
    mask = num > 0
    out[mask] = num[mask] * np.log(num[mask] / den[mask])
    return out


def conditional_entropy_y_given_x(joint: DiscreteJoint) -> float:
    p_xy = joint.p.sum(axis=1)
    p_x = p_xy.sum(axis=1, keepdims=True)
    return float(-np.sum(_xlogy_ratio(p_xy, np.broadcast_to(p_x, p_xy.shape))))


def conditional_entropy_y_given_xa(joint: DiscreteJoint) -> float:
    p_xa = joint.p.sum(axis=2, keepdims=True)
    return float(-np.sum(_xlogy_ratio(joint.p, np.broadcast_to(p_xa, joint.p.shape))))


def conditional_mutual_information(joint: DiscreteJoint) -> float:
    """I(y; a | x) summed directly from its definition."""
    p = joint.p
    p_x = p.sum(axis=(1, 2), keepdims=True)
    p_xa = p.sum(axis=2, keepdims=True)
    p_xy = p.sum(axis=1, keepdims=True)
    den = np.broadcast_to(p_xa * p_xy, p.shape)
    num = p * np.broadcast_to(p_x, p.shape)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(num[mask] / den[mask])))


@dataclass
class Lemma1Result:
    I: float
    H_y_given_x: float
    H_y_given_xa: float
    identity_error: float
    holds: bool


def lemma1_check(joint: DiscreteJoint) -> Lemma1Result:
    """Positive I(y; a | x) must come with H(y | x, a) < H(y | x).

    ``holds`` also requires I = H(y|x) - H(y|x,a) to 1e-10.
    """
    I = conditional_mutual_information(joint)
    hx = conditional_entropy_y_given_x(joint)
    hxa = conditional_entropy_y_given_xa(joint)
    err = abs(I - (hx - hxa))
    implication = I <= 1e-10 or hxa < hx - 1e-12
    return Lemma1Result(I, hx, hxa, err, bool(implication and err <= IDENTITY_TOL))


def expected_kl(joint: DiscreteJoint, q_y_given_x: np.ndarray) -> float:
    """E_{(x,a)}[KL(p(y | x, a) || q(y | x))]; empty (x, a) cells carry weight 0."""
    cond = joint.conditional_y_given_xa()
    p_xa = joint.p.sum(axis=2)
    q = np.broadcast_to(np.asarray(q_y_given_x, dtype=float)[:, None, :], cond.shape)
    support = cond > 0
    if np.any(support & (q <= 0)):
        return float("inf")
    kl = _xlogy_ratio(cond, np.where(support, q, 1.0)).sum(axis=2)
    return float(np.sum(p_xa * kl))


@dataclass
class MarginalOptimalityResult:
    kl_marginal: float
    min_challenger_kl: float
    n_challengers: int
    holds: bool


def challengers(marginal: np.ndarray, n: int, seed: int, concentration: float = 50.0) -> np.ndarray:
    """Random q(y|x): the first half perturb the marginal, the rest are uniform Dirichlet draws."""
    rng = make_rng(seed, "challengers")
    n_x, n_y = marginal.shape
    out = np.empty((n, n_x, n_y))
    n_local = n // 2
    for k in range(n):
        if k < n_local:
            alpha = concentration * marginal + 1e-3
        else:
            alpha = np.ones_like(marginal)
        out[k] = np.stack([rng.dirichlet(row) for row in alpha])
    return out


def marginal_optimality_check(joint: DiscreteJoint, n_challengers: int = 100, seed: int = 0) -> MarginalOptimalityResult:
    marg = joint.marginal_y_given_x()
    base = expected_kl(joint, marg)
    best = min(expected_kl(joint, q) for q in challengers(marg, n_challengers, seed))
    return MarginalOptimalityResult(base, best, n_challengers, bool(base <= best + 1e-12))


# ---------------------------------------------------------------------------
# heteroscedastic motivation
# ---------------------------------------------------------------------------


@dataclass
class GaussianMixtureSpec:
    """M annotators, annotator m labels y ~ N(means[m](x), 1); a is uniform over annotators."""

    means: Sequence[Callable[[float], float]]

    def __post_init__(self) -> None:
        if len(self.means) < 1:
            raise ValueError("need at least one annotator component")

    @property
    def M(self) -> int:
        return len(self.means)

    def component_means(self, x: float) -> np.ndarray:
        mu = np.array([float(f(x)) for f in self.means])
        if not np.all(np.isfinite(mu)):
            raise ValueError(f"non-finite component mean at x={x}")
        return mu


@dataclass
class HetMomentResult:
    mu_star: float
    sigma2_star: float  # moment-matching value
    numeric_mu: float
    numeric_sigma2: float


def _expected_gaussian_kl(mu_m: np.ndarray, mu: float, s2: float) -> float:
    """mean_m KL(N(mu_m, 1) || N(mu, s2))."""
    return float(np.mean(0.5 * (np.log(s2) + (1.0 + (mu_m - mu) ** 2) / s2 - 1.0)))


def golden_sigma2(mu_m: np.ndarray, mu: float) -> float:
    """Minimize the expected KL over s2 by golden-section search inside the fixed bracket."""
    lo, hi = SIGMA2_BRACKET
    grid = np.geomspace(lo, hi, 201)
    vals = [_expected_gaussian_kl(mu_m, mu, s) for s in grid]
    i = int(np.clip(np.argmin(vals), 1, len(grid) - 2))
    res = minimize_scalar(
        lambda s: _expected_gaussian_kl(mu_m, mu, s),
        bracket=(grid[i - 1], grid[i], grid[i + 1]),
        method="golden",
        tol=GOLDEN_TOL,
    )
    return float(res.x)


def het_moment_match(spec: GaussianMixtureSpec, x: float) -> HetMomentResult:
    mu_m = spec.component_means(x)
    mu_star = float(mu_m.mean())
    moment = float(1.0 + np.mean(mu_m**2) - mu_star**2)
    return HetMomentResult(mu_star, moment, mu_star, golden_sigma2(mu_m, mu_star))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass
class CheckLine:
    name: str
    passed: bool
    values: dict[str, float] = field(default_factory=dict)

    def text(self) -> str:
        vals = " ".join(f"{k}={v:.10g}" for k, v in self.values.items())
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} {vals}".rstrip()


@dataclass
class TheoryReport:
    lines: list[CheckLine] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(line.passed for line in self.lines)

    @property
    def failures(self) -> list[CheckLine]:
        return [line for line in self.lines if not line.passed]

    def to_text(self) -> str:
        return "\n".join(line.text() for line in self.lines) + "\n"


def random_mixture(seed: int, max_m: int = 5) -> GaussianMixtureSpec:
    """Annotator means a_m + b_m sin(c_m x) with random coefficients."""
    rng = make_rng(seed, "mixture")
    M = int(rng.integers(1, max_m + 1))
    coef = rng.normal(size=(M, 3)) * np.array([1.0, 2.0, 3.0])
    return GaussianMixtureSpec([lambda x, c=c: c[0] + c[1] * np.sin(c[2] * x) for c in coef])


def run_theory_suite(
    seed: int = 0,
    n_lemma: int = 100,
    n_joints: int = 50,
    n_challengers: int = 100,
    n_mixtures: int = 50,
    het_tol: float = 1e-5,
) -> TheoryReport:
    """All three checks on seeded random instances; one report line per instance."""
    report = TheoryReport()
    for k in range(n_lemma):
        rng = make_rng(seed, "lemma1-shape", k)
        shape = tuple(int(v) for v in rng.integers(2, 6, size=3))
        joint = DiscreteJoint.random(shape, seed * 100_003 + k)
        r = lemma1_check(joint)
        report.lines.append(
            CheckLine(f"lemma1[{k}]", r.holds, {"I": r.I, "H_y_x": r.H_y_given_x, "H_y_xa": r.H_y_given_xa})
        )
    for k in range(n_joints):
        rng = make_rng(seed, "optimality-shape", k)
        shape = tuple(int(v) for v in rng.integers(2, 6, size=3))
        joint = DiscreteJoint.random(shape, seed * 100_003 + 50_000 + k)
        r = marginal_optimality_check(joint, n_challengers, seed * 100_003 + k)
        report.lines.append(
            CheckLine(
                f"marginal_optimality[{k}]",
                r.holds,
                {"kl_marginal": r.kl_marginal, "min_challenger_kl": r.min_challenger_kl},
            )
        )
    for k in range(n_mixtures):
        spec = random_mixture(seed * 100_003 + k)
        x = float(make_rng(seed, "het-x", k).uniform(-2.0, 2.0))
        r = het_moment_match(spec, x)
        err = abs(r.numeric_sigma2 - r.sigma2_star)
        report.lines.append(
            CheckLine(
                f"het_moment_match[{k}]",
                err <= het_tol,
                {"M": spec.M, "mu_star": r.mu_star, "sigma2_moment": r.sigma2_star, "sigma2_numeric": r.numeric_sigma2},
            )
        )
    return report
