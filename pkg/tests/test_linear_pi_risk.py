import numpy as np
import pytest

from tramlab import linear_pi_risk as lpr
from tramlab.linear_pi_risk import EstimatorKind, FixedDesign, LinearGenerator
from tramlab.rng import make_rng


def make_gen(d=3, m=2, sigma=0.5, mu_kind="zero", cov_kind="isotropic:1.0"):
    rng = make_rng(11, "coef")
    return LinearGenerator.from_config(
        {
            "d": d,
            "m": m,
            "sigma": sigma,
            "w_star": ",".join(str(v) for v in rng.normal(size=d)),
            "v_star": ",".join(str(v) for v in rng.normal(size=m)),
            "mu_kind": mu_kind,
            "cov_kind": cov_kind,
        }
    )


@pytest.fixture
def design():
    return FixedDesign.gaussian(40, 3, 2, seed=1)


class TestGenerator:
    def test_config_roundtrip(self):
        gen = make_gen(mu_kind="constant:0.5", cov_kind="diagonal:1.0,2.0")
        again = LinearGenerator.from_config(gen.to_config())
        np.testing.assert_array_equal(again.w_star, gen.w_star)
        assert again.mu_kind == gen.mu_kind and again.cov_kind == gen.cov_kind

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            LinearGenerator.from_config({"d": 3, "m": 1, "sigma": 1, "w_star": "1,2", "v_star": "1"})

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            LinearGenerator(np.ones(2), np.ones(1), -1.0, lambda X: 0, lambda X: 0)

    def test_sample_pi_deterministic(self, design):
        gen = make_gen()
        np.testing.assert_array_equal(lpr.sample_pi(design, gen, 4), lpr.sample_pi(design, gen, 4))

    def test_sample_pi_moments(self):
        design = FixedDesign.gaussian(20000, 2, 2, seed=0)
        gen = make_gen(d=2, mu_kind="constant:1.5", cov_kind="diagonal:0.5,2.0")
        A = lpr.sample_pi(design, gen, 0)
        np.testing.assert_allclose(A.mean(axis=0), [1.5, 1.5], atol=0.05)
        np.testing.assert_allclose(A.var(axis=0), [0.5, 2.0], rtol=0.05)

    def test_non_psd_covariance_rejected(self, design):
        gen = LinearGenerator(
            np.ones(3), np.ones(2), 0.1, lambda X: np.zeros((len(X), 2)),
            lambda X: np.broadcast_to(np.diag([1.0, -1.0]), (len(X), 2, 2)).copy(),
        )
        with pytest.raises(ValueError, match="PSD"):
            lpr.sample_pi(design, gen, 0)

    def test_zero_sigma_targets_noise_free(self, design):
        gen = make_gen(sigma=0.0)
        A = lpr.sample_pi(design, gen, 0)
        y = lpr.sample_targets(design.X, A, gen, 0)
        np.testing.assert_allclose(y, design.X @ gen.w_star + A @ gen.v_star)

    def test_design_needs_enough_rows(self):
        with pytest.raises(ValueError):
            FixedDesign(np.ones((4, 3)), m=2)


class TestLeastSquares:
    def test_projector_idempotent_symmetric(self, design):
        P = lpr.projector(design.X)
        np.testing.assert_allclose(P @ P, P, atol=1e-10)
        np.testing.assert_allclose(P, P.T, atol=1e-12)
        assert np.trace(P) == pytest.approx(design.d, abs=1e-8)

    def test_blockwise_equals_joint(self, design):
        gen = make_gen()
        A = lpr.sample_pi(design, gen, 2)
        y = lpr.sample_targets(design.X, A, gen, 2)
        w1, v1 = lpr.fit_joint(design.X, A, y)
        w2, v2 = lpr.fit_joint_blockwise(design.X, A, y)
        np.testing.assert_allclose(w1, w2, atol=1e-8)
        np.testing.assert_allclose(v1, v2, atol=1e-8)

    def test_block_operators_project_onto_joint_span(self, design):
        A = lpr.sample_pi(design, make_gen(), 3)
        ops = lpr.block_operators(design.X, A)
        L = design.X @ ops.H_a_perp + A @ ops.G_x_perp
        np.testing.assert_allclose(L, lpr.projector(np.hstack([design.X, A])), atol=1e-8)

    def test_rank_deficient_design(self):
        X = np.ones((10, 2))
        with pytest.raises(lpr.RankDeficientError):
            lpr.fit_no_pi(X, np.zeros(10))

    def test_collinear_constant_pi_rejected(self, design):
        gen = make_gen(sigma=0.0, cov_kind="zero", mu_kind="constant:0.7")
        A = lpr.sample_pi(design, gen, 0)
        y = lpr.sample_targets(design.X, A, gen, 0)
        with pytest.raises(lpr.RankDeficientError):
            # constant PI columns are collinear with each other
            lpr.fit_joint(design.X, A, y)

    def test_mean_impute_zero_residual_linear_mean(self, design):
        B = "0.3,0,1;0,-1,0.5"
        gen = make_gen(sigma=0.0, cov_kind="zero", mu_kind=f"linear:{B}")
        A = gen.mean(design.X) + 0.0
        A += make_rng(0).normal(size=A.shape) * 1e-3  # keep [X, A] full rank
        y = lpr.sample_targets(design.X, A, gen, 0)
        pred = lpr.predict(EstimatorKind.PI_MEAN_IMPUTE, lpr.fit_joint(design.X, A, y), design.X, gen.mean(design.X))
        truth = design.X @ gen.w_star + gen.mean(design.X) @ gen.v_star
        np.testing.assert_allclose(pred, truth, atol=1e-8)


class TestRisk:
    def test_no_pi_kinds_deterministic(self, design):
        gen = make_gen()
        for kind in (EstimatorKind.NO_PI, EstimatorKind.MARG_NO_PI):
            a = lpr.risk_closed_form(kind, design, gen, seed=0)
            b = lpr.risk_closed_form(kind, design, gen, seed=99)
            assert a == b

    def test_marg_no_pi_is_noise_when_mean_zero(self, design):
        gen = make_gen(mu_kind="zero")
        val = lpr.risk_closed_form(EstimatorKind.MARG_NO_PI, design, gen)
        assert val == pytest.approx(gen.sigma**2 * design.d / design.n, rel=1e-12)

    def test_pi_kinds_zero_when_sigma_zero(self, design):
        gen = make_gen(sigma=0.0)
        assert lpr.risk_closed_form(EstimatorKind.MARG_PI, design, gen) == 0.0
        assert lpr.risk_closed_form(EstimatorKind.PI_MEAN_IMPUTE, design, gen) == 0.0

    def test_closed_form_matches_mc(self, design):
        gen = make_gen(mu_kind="constant:0.5")
        for est in lpr.risk_table(design, gen, n_reps=1500, seed=3, n_inner=300):
            assert abs(est.z_score) <= 3.5, est

    def test_risk_mc_minimum_reps(self, design):
        with pytest.raises(ValueError):
            lpr.risk_mc(EstimatorKind.NO_PI, design, make_gen(), n_reps=10, seed=0)

    def test_risk_table_reproducible(self, design):
        gen = make_gen()
        a = lpr.risk_table(design, gen, 200, 5, 100)
        b = lpr.risk_table(design, gen, 200, 5, 100)
        assert [e.csv_row() for e in a] == [e.csv_row() for e in b]

    def test_z_score_zero_stderr(self):
        est = lpr.RiskEstimate(EstimatorKind.NO_PI, 1.0, 1.0, 0.0, 100)
        assert est.z_score == 0.0


class TestPropositions:
    def test_invalid_which(self, design):
        with pytest.raises(ValueError):
            lpr.check_proposition(3, design, make_gen(), 100, 0, 50)

    def test_prop2_has_no_pi_variance_term(self, design):
        chk = lpr.check_proposition(2, design, make_gen(), 200, 0, 100)
        assert chk.pi_variance_term == 0.0
        assert chk.lhs == pytest.approx(chk.residual_term + chk.noise_term)


class TestShermanMorrison:
    def test_random_instances(self):
        for k in range(30):
            rng = make_rng(k, "sm")
            X = rng.normal(size=(25, 3))
            A = rng.normal(size=25)
            assert lpr.sherman_morrison_bound(X, A, rng.normal(size=25)).holds
            assert lpr.sherman_morrison_bound(X, A, variant="L").holds

    def test_a_in_span_raises(self):
        X = make_rng(0).normal(size=(10, 2))
        with pytest.raises(ZeroDivisionError):
            lpr.sherman_morrison_bound(X, X[:, 0])

    def test_bad_variant(self):
        with pytest.raises(ValueError):
            lpr.sherman_morrison_bound(np.eye(3)[:, :1], np.ones(3), variant="Q")
