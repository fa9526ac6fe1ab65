"""Fixed-design least-squares risk analysis with privileged information.

Generative model (rows of X are fixed):

    a | x ~ N(mu(x), Sigma(x)),    y = x'w* + a'v* + eps,    eps ~ N(0, sigma^2)

Four predictors that only see X at prediction time are compared:

* ``NoPI``          least squares on X alone,
* ``PIMeanImpute``  joint least squares on [X, A], predicting with mu(X) for A,
* ``MargNoPI``      ``NoPI`` averaged over the training PI draws,
* ``MargPI``        joint fit averaged over the training PI draws.

Risks omit the additive term (1/n) tr(sigma^2 I + Lambda) shared by every
predictor, so closed-form and Monte-Carlo values are directly comparable.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.linalg import solve_triangular

from .rng import make_rng

RANK_RTOL = 1e-10
PSD_TOL = 1e-10


class RankDeficientError(np.linalg.LinAlgError):
    """A Gram matrix that the estimator needs to invert is (numerically) singular."""


class EstimatorKind(str, enum.Enum):
    NO_PI = "NoPI"
    PI_MEAN_IMPUTE = "PIMeanImpute"
    MARG_NO_PI = "MargNoPI"
    MARG_PI = "MargPI"


# ---------------------------------------------------------------------------
# generator and design
# ---------------------------------------------------------------------------


def _parse_vector(text: str) -> np.ndarray:
    return np.array([float(t) for t in text.split(",") if t.strip()], dtype=float)


def _parse_matrix(text: str) -> np.ndarray:
    return np.array([_parse_vector(row) for row in text.split(";")], dtype=float)


def _fmt_vector(vec: np.ndarray) -> str:
    return ",".join(repr(float(v)) for v in np.ravel(vec))


@dataclass
class LinearGenerator:
    """Parameters of the generative model.

    ``mu_fn`` maps an ``(n, d)`` design to the ``(n, m)`` matrix of PI means and
    ``cov_fn`` maps it to an ``(n, m, m)`` stack of covariances.
    """

    w_star: np.ndarray
    v_star: np.ndarray
    sigma: float
    mu_fn: Callable[[np.ndarray], np.ndarray]
    cov_fn: Callable[[np.ndarray], np.ndarray]
    mu_kind: str = "custom"
    cov_kind: str = "custom"

    def __post_init__(self) -> None:
        self.w_star = np.asarray(self.w_star, dtype=float).ravel()
        self.v_star = np.asarray(self.v_star, dtype=float).ravel()
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        self.sigma = float(self.sigma)

    @property
    def d(self) -> int:
        return self.w_star.size

    @property
    def m(self) -> int:
        return self.v_star.size

    def mean(self, X: np.ndarray) -> np.ndarray:
        mu = np.asarray(self.mu_fn(X), dtype=float)
        if mu.shape != (X.shape[0], self.m):
            raise ValueError(f"mu_fn returned shape {mu.shape}, expected {(X.shape[0], self.m)}")
        return mu

    def cov(self, X: np.ndarray) -> np.ndarray:
        cov = np.asarray(self.cov_fn(X), dtype=float)
        if cov.shape != (X.shape[0], self.m, self.m):
            raise ValueError(
                f"cov_fn returned shape {cov.shape}, expected {(X.shape[0], self.m, self.m)}"
            )
        return cov

    def pi_variance(self, X: np.ndarray) -> np.ndarray:
        """Diagonal of Lambda: v*' Sigma(x_i) v* for every row."""
        return np.einsum("j,ijk,k->i", self.v_star, self.cov(X), self.v_star)

    # -- structured config ---------------------------------------------------

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> LinearGenerator:
        """Build from string-valued keys ``d, m, sigma, w_star, v_star, mu_kind, cov_kind``."""
        d, m = int(cfg["d"]), int(cfg["m"])
        w_star = _parse_vector(str(cfg["w_star"]))
        v_star = _parse_vector(str(cfg["v_star"]))
        if w_star.size != d or v_star.size != m:
            raise ValueError("w_star/v_star lengths do not match d/m")
        mu_kind = str(cfg.get("mu_kind", "zero")).strip()
        cov_kind = str(cfg.get("cov_kind", "zero")).strip()
        return cls(
            w_star=w_star,
            v_star=v_star,
            sigma=float(cfg["sigma"]),
            mu_fn=_mu_family(mu_kind, d, m),
            cov_fn=_cov_family(cov_kind, m),
            mu_kind=mu_kind,
            cov_kind=cov_kind,
        )

    def to_config(self) -> dict[str, str]:
        if "custom" in (self.mu_kind, self.cov_kind):
            raise ValueError("custom mean/covariance functions cannot be serialized")
        return {
            "d": str(self.d),
            "m": str(self.m),
            "sigma": repr(self.sigma),
            "w_star": _fmt_vector(self.w_star),
            "v_star": _fmt_vector(self.v_star),
            "mu_kind": self.mu_kind,
            "cov_kind": self.cov_kind,
        }


def _mu_family(kind: str, d: int, m: int) -> Callable[[np.ndarray], np.ndarray]:
    name, _, arg = kind.partition(":")
    if name == "zero":
        return lambda X: np.zeros((X.shape[0], m))
    if name == "constant":
        c = _parse_vector(arg)
        if c.size == 1:
            c = np.full(m, c[0])
        if c.size != m:
            raise ValueError(f"constant mean needs {m} values")
        return lambda X: np.tile(c, (X.shape[0], 1))
    if name == "linear":
        B = _parse_matrix(arg)
        if B.shape != (m, d):
            raise ValueError(f"linear mean needs an {m}x{d} matrix, got {B.shape}")
        return lambda X: X @ B.T
    raise ValueError(f"unknown mu_kind {kind!r}")


def _cov_family(kind: str, m: int) -> Callable[[np.ndarray], np.ndarray]:
    name, _, arg = kind.partition(":")
    if name == "zero":
        return lambda X: np.zeros((X.shape[0], m, m))
    if name == "isotropic":
        s = float(arg)
        return lambda X: np.broadcast_to(s * np.eye(m), (X.shape[0], m, m)).copy()
    if name == "diagonal":
        diag = _parse_vector(arg)
        if diag.size != m:
            raise ValueError(f"diagonal covariance needs {m} values")
        return lambda X: np.broadcast_to(np.diag(diag), (X.shape[0], m, m)).copy()
    raise ValueError(f"unknown cov_kind {kind!r}")


@dataclass
class FixedDesign:
    X: np.ndarray
    m: int

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("X must be a matrix")
        n, d = self.X.shape
        if n <= d + self.m:
            raise ValueError(f"need n > d + m, got n={n}, d={d}, m={self.m}")
        _check_rank(self.X, "X")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @classmethod
    def gaussian(cls, n: int, d: int, m: int, seed: int) -> FixedDesign:
        """Design with i.i.d. standard normal entries."""
        return cls(make_rng(seed, "design").standard_normal((n, d)), m)


@dataclass
class RiskEstimate:
    kind: EstimatorKind
    closed_form: float
    mc_mean: float
    mc_stderr: float
    n_reps: int
    seed: int = 0

    CSV_HEADER = ("kind", "closed_form", "mc_mean", "mc_stderr", "n_reps", "seed")

    @property
    def z_score(self) -> float:
        if self.mc_stderr == 0.0:
            return 0.0 if self.closed_form == self.mc_mean else math.inf
        return (self.closed_form - self.mc_mean) / self.mc_stderr

    def csv_row(self) -> list[str]:
        return [
            self.kind.value,
            repr(self.closed_form),
            repr(self.mc_mean),
            repr(self.mc_stderr),
            str(self.n_reps),
            str(self.seed),
        ]


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _pi_factor(X: np.ndarray, gen: LinearGenerator) -> np.ndarray:
    """Per-row square roots F_i with F_i F_i' = Sigma(x_i)."""
    cov = gen.cov(X)
    if not np.allclose(cov, np.swapaxes(cov, 1, 2), atol=1e-12):
        bad = int(np.argmax(np.abs(cov - np.swapaxes(cov, 1, 2)).reshape(len(cov), -1).max(1)))
        raise ValueError(f"Sigma(x) is not symmetric at row {bad}")
    evals, evecs = np.linalg.eigh(cov)
    scale = np.maximum(1.0, np.abs(evals).max(axis=1))
    bad_rows = np.nonzero(evals.min(axis=1) < -PSD_TOL * scale)[0]
    if bad_rows.size:
        i = int(bad_rows[0])
        raise ValueError(f"Sigma(x) is not PSD at row {i} (min eigenvalue {evals[i].min():.3e})")
    return evecs * np.sqrt(np.clip(evals, 0.0, None))[:, None, :]


def _draw_pi(mu: np.ndarray, factor: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(mu.shape)
    return mu + np.einsum("ijk,ik->ij", factor, z)


def sample_pi(design: FixedDesign, gen: LinearGenerator, seed: int) -> np.ndarray:
    """Draw the ``(n, m)`` PI matrix, row i from N(mu(x_i), Sigma(x_i))."""
    mu = gen.mean(design.X)
    return _draw_pi(mu, _pi_factor(design.X, gen), make_rng(seed, "pi"))


def sample_targets(X: np.ndarray, A: np.ndarray, gen: LinearGenerator, seed: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    A = np.asarray(A, dtype=float)
    if X.ndim != 2 or A.ndim != 2 or X.shape[0] != A.shape[0]:
        raise ValueError(f"shape mismatch: X {X.shape}, A {A.shape}")
    if X.shape[1] != gen.d or A.shape[1] != gen.m:
        raise ValueError(f"X/A widths {X.shape[1]}/{A.shape[1]} do not match d={gen.d}, m={gen.m}")
    eps = gen.sigma * make_rng(seed, "eps").standard_normal(X.shape[0])
    return X @ gen.w_star + A @ gen.v_star + eps


# ---------------------------------------------------------------------------
# least squares and projectors
# ---------------------------------------------------------------------------


def _check_rank(M: np.ndarray, name: str) -> None:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[-1] <= RANK_RTOL * s[0]:
        raise RankDeficientError(f"{name} is rank deficient (singular values {s.min():.3e} / {s.max():.3e})")


def _orthonormal_basis(M: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    _check_rank(M, name)
    return np.linalg.qr(M)


def _qr_lstsq(M: np.ndarray, y: np.ndarray, name: str) -> np.ndarray:
    q, r = _orthonormal_basis(M, name)
    return solve_triangular(r, q.T @ y)


def projector(M: np.ndarray) -> np.ndarray:
    """Orthogonal projector M (M'M)^-1 M' onto the column span of ``M``."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    q, _ = _orthonormal_basis(M, "M")
    return q @ q.T


def fit_no_pi(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return _qr_lstsq(np.asarray(X, dtype=float), np.asarray(y, dtype=float), "X")


def fit_joint(X: np.ndarray, A: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    A = np.asarray(A, dtype=float)
    coef = _qr_lstsq(np.hstack([X, A]), np.asarray(y, dtype=float), "[X, A]")
    return coef[: X.shape[1]], coef[X.shape[1] :]


@dataclass
class BlockOperators:
    """Projections and partial inverses of the stacked design [X, A]."""

    Pi_x: np.ndarray
    Pi_a: np.ndarray
    X_a_perp: np.ndarray
    A_x_perp: np.ndarray
    H: np.ndarray
    G: np.ndarray
    H_a_perp: np.ndarray
    G_x_perp: np.ndarray


def _gram_inverse_times(M: np.ndarray, rhs: np.ndarray, name: str) -> np.ndarray:
    gram = M.T @ M
    _check_rank(gram, f"{name}'{name}")
    return np.linalg.solve(gram, rhs)


def block_operators(X: np.ndarray, A: np.ndarray) -> BlockOperators:
    X = np.asarray(X, dtype=float)
    A = np.asarray(A, dtype=float)
    n = X.shape[0]
    H = _gram_inverse_times(X, X.T, "X")
    G = _gram_inverse_times(A, A.T, "A")
    Pi_x = X @ H
    Pi_a = A @ G
    eye = np.eye(n)
    X_a_perp = (eye - Pi_a) @ X
    A_x_perp = (eye - Pi_x) @ A
    H_a_perp = _gram_inverse_times(X_a_perp, X_a_perp.T, "X_a_perp")
    G_x_perp = _gram_inverse_times(A_x_perp, A_x_perp.T, "A_x_perp")
    return BlockOperators(Pi_x, Pi_a, X_a_perp, A_x_perp, H, G, H_a_perp, G_x_perp)


def fit_joint_blockwise(
    X: np.ndarray, A: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Joint least squares through the two Schur complements of [X, A]'[X, A]."""
    ops = block_operators(X, A)
    y = np.asarray(y, dtype=float)
    return ops.H_a_perp @ y, ops.G_x_perp @ y


def fit_no_pi_marginal(X: np.ndarray, gen: LinearGenerator, eps: np.ndarray) -> np.ndarray:
    """E_a[w_hat0]: the NO-PI fit with the training PI replaced by its mean."""
    y_bar = X @ gen.w_star + gen.mean(X) @ gen.v_star + np.asarray(eps, dtype=float)
    return fit_no_pi(X, y_bar)


def predict(
    kind: EstimatorKind | str,
    fitted: np.ndarray | tuple[np.ndarray, np.ndarray],
    X: np.ndarray,
    mu: np.ndarray | None = None,
) -> np.ndarray:
    """Predictions from X only.

    ``fitted`` is ``w_hat0`` for the NO-PI kinds (for ``MargNoPI`` pass the
    marginalized fit from :func:`fit_no_pi_marginal`) and ``(w_hat1, v_hat1)``
    for the PI kinds, which need ``mu`` = mu(X) in place of the PI.
    """
    kind = EstimatorKind(kind)
    X = np.asarray(X, dtype=float)
    if kind in (EstimatorKind.NO_PI, EstimatorKind.MARG_NO_PI):
        return X @ np.asarray(fitted, dtype=float)
    if mu is None:
        raise ValueError(f"{kind.value} predictions need mu(X) in place of the PI")
    w, v = fitted
    return X @ w + np.asarray(mu, dtype=float) @ v


# ---------------------------------------------------------------------------
# risks
# ---------------------------------------------------------------------------


def _residual_term(design: FixedDesign, gen: LinearGenerator) -> float:
    """(1/n) ||(I - Pi_x) mu(X) v*||^2."""
    X = design.X
    mv = gen.mean(X) @ gen.v_star
    q, _ = _orthonormal_basis(X, "X")
    resid = mv - q @ (q.T @ mv)
    return float(resid @ resid) / design.n


def _trace_pi_lambda(design: FixedDesign, gen: LinearGenerator) -> float:
    """(1/n) tr(Pi_x Lambda)."""
    q, _ = _orthonormal_basis(design.X, "X")
    leverage = np.einsum("ij,ij->i", q, q)
    return float(leverage @ gen.pi_variance(design.X)) / design.n


def _pi_draws(design: FixedDesign, gen: LinearGenerator, rng: np.random.Generator, count: int):
    mu = gen.mean(design.X)
    factor = _pi_factor(design.X, gen)
    for _ in range(count):
        yield _draw_pi(mu, factor, rng)


def _k_norm_sq(M: np.ndarray, X: np.ndarray, A: np.ndarray) -> float:
    """||M Q^+||_F^2 for Q = [X, A]; with M = [X, mu(X)] this is ||K||^2."""
    q, r = _orthonormal_basis(np.hstack([X, A]), "[X, A]")
    coeffs = solve_triangular(r, M.T, trans="T")  # (R^-T M')' = M R^-1
    return float(np.sum(coeffs * coeffs))


def expected_k_norm_sq(
    design: FixedDesign, gen: LinearGenerator, seed: int, n_inner: int = 2000
) -> float:
    """Monte-Carlo E_A[||X H_a_perp + mu(X) G_x_perp||_F^2]."""
    X = design.X
    M = np.hstack([X, gen.mean(X)])
    rng = make_rng(seed, "closed-form", "K")
    total = math.fsum(_k_norm_sq(M, X, A) for A in _pi_draws(design, gen, rng, n_inner))
    return total / n_inner


def mean_joint_projector(
    design: FixedDesign, gen: LinearGenerator, seed: int, n_inner: int = 2000
) -> np.ndarray:
    """Monte-Carlo E_A[L] with L = X H_a_perp + A G_x_perp, the projector onto [X, A]."""
    X = design.X
    rng = make_rng(seed, "closed-form", "L")
    acc = np.zeros((design.n, design.n))
    for A in _pi_draws(design, gen, rng, n_inner):
        q, _ = _orthonormal_basis(np.hstack([X, A]), "[X, A]")
        acc += q @ q.T
    return acc / n_inner


def risk_closed_form(
    kind: EstimatorKind | str,
    design: FixedDesign,
    gen: LinearGenerator,
    seed: int = 0,
    n_inner: int = 2000,
) -> float:
    """Expected excess risk of ``kind``.

    The NO-PI kinds are exact. The PI kinds need E||K||^2 or ||E L||^2 over
    training PI draws, estimated from ``n_inner`` draws seeded by ``seed``.
    """
    kind = EstimatorKind(kind)
    n, d = design.n, design.d
    noise = gen.sigma**2 * d / n
    if kind is EstimatorKind.NO_PI:
        return _residual_term(design, gen) + noise + _trace_pi_lambda(design, gen)
    if kind is EstimatorKind.MARG_NO_PI:
        return _residual_term(design, gen) + noise
    if gen.sigma == 0.0:
        return 0.0
    if kind is EstimatorKind.PI_MEAN_IMPUTE:
        return gen.sigma**2 / n * expected_k_norm_sq(design, gen, seed, n_inner)
    L_bar = mean_joint_projector(design, gen, seed, n_inner)
    return gen.sigma**2 / n * float(np.sum(L_bar * L_bar))


def _antithetic_pool(design: FixedDesign, gen: LinearGenerator, seed: int, size: int):
    """PI draws in pairs (A, 2 mu - A), so the pool mean is exactly mu(X)."""
    mu = gen.mean(design.X)
    factor = _pi_factor(design.X, gen)
    rng = make_rng(seed, "mc-pool")
    for _ in range(max(1, size // 2)):
        A = _draw_pi(mu, factor, rng)
        yield A
        yield 2.0 * mu - A


@dataclass
class _MarginalOperators:
    """Pool-averaged marginal predictors, tau(eps) = offset + op @ eps."""

    no_pi_offset: np.ndarray
    no_pi_op: np.ndarray
    pi_offset: np.ndarray
    pi_op: np.ndarray


def _marginal_operators(
    design: FixedDesign, gen: LinearGenerator, seed: int, pool_size: int
) -> _MarginalOperators:
    X = design.X
    n = design.n
    signal = X @ gen.w_star
    q_x, _ = _orthonormal_basis(X, "X")
    no_pi_offset = np.zeros(n)
    pi_offset = np.zeros(n)
    pi_op = np.zeros((n, n))
    count = 0
    for A in _antithetic_pool(design, gen, seed, pool_size):
        y_clean = signal + A @ gen.v_star
        no_pi_offset += predict(EstimatorKind.NO_PI, fit_no_pi(X, y_clean), X)
        w1, v1 = fit_joint(X, A, y_clean)
        pi_offset += X @ w1 + A @ v1
        q, _ = _orthonormal_basis(np.hstack([X, A]), "[X, A]")
        pi_op += q @ q.T
        count += 1
    return _MarginalOperators(
        no_pi_offset / count, q_x @ q_x.T, pi_offset / count, pi_op / count
    )


def replicate_risks(
    kinds: list[EstimatorKind | str],
    design: FixedDesign,
    gen: LinearGenerator,
    n_reps: int,
    seed: int,
    n_inner: int = 2000,
) -> dict[EstimatorKind, np.ndarray]:
    """Per-replicate realized risks, paired across kinds (shared A, eps draws).

    Replicate ``r`` draws training (A, eps) from its own derived stream, fits,
    and evaluates (1/n)||X w* - tau(X) + mu(X) v*||^2. The marginalized kinds
    average their fitted predictions over an antithetic PI pool of size
    ``n_inner`` for the replicate's eps.
    """
    kinds = [EstimatorKind(k) for k in kinds]
    if n_reps < 1:
        raise ValueError("n_reps must be positive")
    X = design.X
    n = design.n
    mu = gen.mean(X)
    factor = _pi_factor(X, gen)
    target = X @ gen.w_star + mu @ gen.v_star
    marg = None
    if any(k in (EstimatorKind.MARG_NO_PI, EstimatorKind.MARG_PI) for k in kinds):
        marg = _marginal_operators(design, gen, seed, n_inner)
    out = {k: np.empty(n_reps) for k in kinds}
    for r in range(n_reps):
        rng = make_rng(seed, "replicate", r)
        A = _draw_pi(mu, factor, rng)
        eps = gen.sigma * rng.standard_normal(n)
        y = X @ gen.w_star + A @ gen.v_star + eps
        try:
            for k in kinds:
                if k is EstimatorKind.NO_PI:
                    tau = predict(k, fit_no_pi(X, y), X)
                elif k is EstimatorKind.PI_MEAN_IMPUTE:
                    tau = predict(k, fit_joint(X, A, y), X, mu)
                elif k is EstimatorKind.MARG_NO_PI:
                    tau = marg.no_pi_offset + marg.no_pi_op @ eps
                else:
                    tau = marg.pi_offset + marg.pi_op @ eps
                resid = target - tau
                out[k][r] = float(resid @ resid) / n
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"replicate {r} failed to fit: {exc}") from exc
    return out


def _summarize(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    if values.size < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.size))


def risk_mc(
    kind: EstimatorKind | str,
    design: FixedDesign,
    gen: LinearGenerator,
    n_reps: int,
    seed: int,
    n_inner: int = 2000,
) -> RiskEstimate:
    """Monte-Carlo risk of ``kind`` paired with its closed-form value."""
    if n_reps < 100:
        raise ValueError(f"n_reps must be at least 100, got {n_reps}")
    kind = EstimatorKind(kind)
    values = replicate_risks([kind], design, gen, n_reps, seed, n_inner)[kind]
    mean, se = _summarize(values)
    closed = risk_closed_form(kind, design, gen, seed, n_inner)
    return RiskEstimate(kind, closed, mean, se, n_reps, seed)


def risk_table(
    design: FixedDesign,
    gen: LinearGenerator,
    n_reps: int,
    seed: int,
    n_inner: int = 2000,
) -> list[RiskEstimate]:
    """All four kinds from one shared set of replicates."""
    kinds = list(EstimatorKind)
    per_rep = replicate_risks(kinds, design, gen, n_reps, seed, n_inner)
    rows = []
    for k in kinds:
        mean, se = _summarize(per_rep[k])
        rows.append(RiskEstimate(k, risk_closed_form(k, design, gen, seed, n_inner), mean, se, n_reps, seed))
    return rows


# ---------------------------------------------------------------------------
# propositions and bounds
# ---------------------------------------------------------------------------


@dataclass
class PropositionCheck:
    which: int
    lhs: float
    rhs: float
    pi_wins: bool
    residual_term: float
    noise_term: float
    pi_variance_term: float
    mc_no_pi: float
    mc_pi: float
    mc_diff: float
    mc_diff_stderr: float
    consistent: bool
    extras: dict[str, float] = field(default_factory=dict)


def check_proposition(
    which: int,
    design: FixedDesign,
    gen: LinearGenerator,
    n_reps: int,
    seed: int,
    n_inner: int = 2000,
) -> PropositionCheck:
    """Evaluate both sides of the PI-vs-NO-PI risk comparison.

    ``which=1`` compares NoPI against mean-imputed PI, ``which=2`` the
    marginalized pair. ``pi_wins`` is lhs > rhs; ``consistent`` records that
    the paired Monte-Carlo risk difference agrees in sign or lies within three
    standard errors of zero.
    """
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    residual = _residual_term(design, gen)
    noise = gen.sigma**2 * design.d / design.n
    if which == 1:
        pi_var = _trace_pi_lambda(design, gen)
        lhs = residual + noise + pi_var
        rhs = risk_closed_form(EstimatorKind.PI_MEAN_IMPUTE, design, gen, seed, n_inner)
        pair = (EstimatorKind.NO_PI, EstimatorKind.PI_MEAN_IMPUTE)
    else:
        pi_var = 0.0
        lhs = residual + noise
        rhs = risk_closed_form(EstimatorKind.MARG_PI, design, gen, seed, n_inner)
        pair = (EstimatorKind.MARG_NO_PI, EstimatorKind.MARG_PI)
    per_rep = replicate_risks(list(pair), design, gen, n_reps, seed, n_inner)
    no_pi, pi = per_rep[pair[0]], per_rep[pair[1]]
    diff_mean, diff_se = _summarize(no_pi - pi)
    pi_wins = lhs > rhs
    consistent = (pi_wins == (diff_mean > 0)) or abs(diff_mean) <= 3 * diff_se
    return PropositionCheck(
        which=which,
        lhs=lhs,
        rhs=rhs,
        pi_wins=pi_wins,
        residual_term=residual,
        noise_term=noise,
        pi_variance_term=pi_var,
        mc_no_pi=float(no_pi.mean()),
        mc_pi=float(pi.mean()),
        mc_diff=diff_mean,
        mc_diff_stderr=diff_se,
        consistent=bool(consistent),
    )


@dataclass
class BoundCheck:
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


def sherman_morrison_bound(
    X: np.ndarray,
    A: np.ndarray,
    mu: np.ndarray | None = None,
    variant: str = "K",
) -> BoundCheck:
    """Realized ||K||^2 (or ||L||^2) against its single-column upper bound.

    For ``variant="K"`` the operator is X H_a_perp + mu G_x_perp and the bound
    uses ||mu||^2; for ``variant="L"`` it is X H_a_perp + A G_x_perp and the
    bound uses ||A||^2.
    """
    X = np.asarray(X, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, 1)
    if variant not in ("K", "L"):
        raise ValueError("variant must be 'K' or 'L'")
    if variant == "K":
        mu_col = np.zeros_like(A) if mu is None else np.asarray(mu, dtype=float).reshape(-1, 1)
    else:
        mu_col = A
    q, _ = _orthonormal_basis(X, "X")
    proj_a = q @ (q.T @ A)
    perp_sq = float(np.sum((A - proj_a) ** 2))
    if perp_sq <= RANK_RTOL**2 * float(np.sum(A * A)):
        raise ZeroDivisionError("A lies in the column span of X")
    d = X.shape[1]
    rhs = 2 * d + 2 * (float(np.sum(proj_a**2)) + float(np.sum(mu_col**2))) / perp_sq
    ops = block_operators(X, A)
    op = X @ ops.H_a_perp + mu_col @ ops.G_x_perp
    return BoundCheck(lhs=float(np.sum(op * op)), rhs=rhs)
