import numpy as np
import pytest

from conftest import numeric_grad, rel_err
from tramlab.nn import autodiff as ad
from tramlab.nn import serialize
from tramlab.nn.losses import MSE, loss_and_grad
from tramlab.synth import HetRegressionTaskSpec, gen_het_regression, true_marginal_regression
from tramlab.tram import (
    DISTILL_NO_PI,
    HET_TRAM,
    MEAN_IMPUTE,
    NO_PI,
    ORACLE_TEACHER,
    TRAM,
    ZERO_IMPUTE,
    PredictorKind,
    TrainConfig,
    TramWidths,
    build_graph,
    build_no_pi,
    build_tram,
    evaluate,
    features,
    fit_logistic,
    fit_ridge,
    linear_probe,
    predict_conditional,
    predict_full_marg,
    predict_impute,
    predict_kind,
    predict_marginal,
    train,
    train_conditional,
    train_distilled,
    train_no_pi,
    train_one_step,
    train_two_step,
)
from tramlab.tram.train import batches

SHARED = ("phi", "psi", "head_u")


def cfg(**kw):
    base = dict(epochs=2, batch_size=32, lr=1e-2, seed=1)
    base.update(kw)
    return TrainConfig(**base)


def flat(model, names):
    return {n: model.blocks()[n].flat().copy() for n in names}


class TestModel:
    def test_partition_disjoint(self, small_widths):
        model = build_tram(1, 2, widths=small_widths, het=True)
        names = [k for block in model.blocks().values() for k in block]
        assert len(names) == len(set(names))
        assert set(model.blocks()) == {"phi", "head_w", "psi", "head_u", "het_w"}

    def test_no_pi_shares_phi_init(self, small_widths):
        a = build_tram(1, 1, widths=small_widths, seed=4)
        b = build_no_pi(1, widths=small_widths, seed=4)
        np.testing.assert_array_equal(a.phi.flat(), b.phi.flat())
        np.testing.assert_array_equal(a.head_w.flat(), b.head_w.flat())

    def test_psi_a_branch(self):
        model = build_tram(1, 3, widths=TramWidths((4,), (5,), (6,)))
        g = build_graph(model, np.zeros((2, 1)), np.zeros((2, 3)))
        assert g.conditional.shape == (2, 1)
        assert "psi.a.layer0.W" in model.psi.arrays

    def test_output_shapes(self, small_widths):
        model = build_tram(1, 1, "classification", small_widths, n_classes=3, het=True)
        g = build_graph(model, np.zeros((5, 1)), np.zeros((5, 1)))
        assert g.marginal.shape == (5, 6) and g.conditional.shape == (5, 3)

    def test_input_validation(self, small_widths):
        model = build_tram(1, 2, widths=small_widths)
        with pytest.raises(ValueError):
            build_graph(model, np.zeros((2, 1)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            build_graph(model, np.zeros((2, 1)))
        with pytest.raises(ValueError):
            build_tram(1, 0)
        with pytest.raises(ValueError):
            build_tram(1, 1, "ranking")
        with pytest.raises(ValueError):
            build_graph(build_no_pi(1, widths=small_widths), np.zeros((1, 1)), np.zeros((1, 1)))

    def test_scaled_widths(self):
        w = TramWidths((64, 64), (), (64,)).scaled(0.125)
        assert w.phi == (8, 8) and w.psi_joint == (8,)
        assert TramWidths((2,)).scaled(0.01).phi == (1,)

    def test_checkpoint_roundtrip(self, small_widths):
        model = build_tram(1, 2, widths=small_widths, seed=3)
        other = build_tram(1, 2, widths=small_widths, seed=9)
        other.load_blocks(serialize.loads(serialize.dumps(model.blocks())))
        for name in model.blocks():
            np.testing.assert_array_equal(other.blocks()[name].flat(), model.blocks()[name].flat())

    def test_conditional_gradient(self, small_widths):
        model = build_tram(1, 2, widths=small_widths, seed=2)
        rng = np.random.default_rng(0)
        x, a, y = rng.normal(size=(6, 1)), rng.normal(size=(6, 2)), rng.normal(size=6)
        g = build_graph(model, x, a, marginal=False)
        _, d = loss_and_grad(MSE, g.conditional.data, y)
        ad.backward([(g.conditional, d)])
        W = model.phi["phi.layer0.W"]

        def f():
            return loss_and_grad(MSE, build_graph(model, x, a, marginal=False).conditional.data, y)[0]

        assert rel_err(g.nodes["phi"]["phi.layer0.W"].grad, numeric_grad(f, W)) < 1e-4


class TestStopGradientPartition:
    def test_marginal_loss_never_reaches_shared(self, small_widths):
        model = build_tram(1, 1, widths=small_widths, het=True)
        g = build_graph(model, np.ones((4, 1)), np.ones((4, 1)), conditional=False)
        ad.backward([(g.marginal, np.ones(g.marginal.shape))])
        for name in ("phi",):
            assert all(t.grad is None for t in g.nodes[name].values())
        assert all(t.grad is not None for t in g.nodes["head_w"].values())

    def test_training_log_records_zero_leak(self, reg_data, small_widths):
        model = build_tram(1, 1, widths=small_widths)
        log = train_one_step(model, reg_data, cfg()).log
        assert log.l2_shared_grad_norm and all(v == 0.0 for v in log.l2_shared_grad_norm)
        assert all(v == 0.0 for v in log.l1_head_w_grad_norm)


class TestTraining:
    def test_one_step_matches_conditional_only(self, reg_data, small_widths):
        a = build_tram(1, 1, widths=small_widths, seed=5)
        b = a.copy()
        train_one_step(a, reg_data, cfg())
        train_conditional(b, reg_data, cfg())
        for name in SHARED:
            np.testing.assert_array_equal(a.blocks()[name].flat(), b.blocks()[name].flat())

    def test_two_step_phi_frozen_in_second_stage(self, reg_data, small_widths):
        a = build_tram(1, 1, widths=small_widths, seed=5)
        b = a.copy()
        train_two_step(a, reg_data, cfg(mode="two_step"))
        train_conditional(b, reg_data, cfg())
        np.testing.assert_array_equal(a.phi.flat(), b.phi.flat())
        assert not np.array_equal(a.head_w.flat(), b.head_w.flat())

    def test_conditional_only_leaves_head_w(self, reg_data, small_widths):
        model = build_tram(1, 1, widths=small_widths)
        before = model.head_w.flat().copy()
        train_conditional(model, reg_data, cfg())
        np.testing.assert_array_equal(model.head_w.flat(), before)

    def test_deterministic(self, reg_data, small_widths):
        runs = []
        for _ in range(2):
            model = build_tram(1, 1, widths=small_widths, seed=2)
            train_one_step(model, reg_data, cfg())
            runs.append(serialize.dumps(model.blocks()))
        assert runs[0] == runs[1]

    def test_loss_decreases(self, reg_data, small_widths):
        model = build_tram(1, 1, widths=small_widths)
        log = train_one_step(model, reg_data, cfg(epochs=5)).log
        assert log.l1[-1] < log.l1[0] and log.l2[-1] < log.l2[0]

    def test_batches_cover_every_row(self):
        idx = np.concatenate(batches(103, cfg(batch_size=10), 0))
        np.testing.assert_array_equal(np.sort(idx), np.arange(103))
        assert not np.array_equal(idx, np.concatenate(batches(103, cfg(batch_size=10), 1)))

    def test_dispatch(self, reg_data, small_widths):
        no_pi = build_no_pi(1, widths=small_widths)
        assert train(no_pi, reg_data, cfg()).log.l2
        tram = build_tram(1, 1, widths=small_widths)
        assert train(tram, reg_data, cfg(mode="two_step")).log.l2
        with pytest.raises(ValueError):
            train_no_pi(tram, reg_data, cfg())
        with pytest.raises(ValueError):
            train_one_step(no_pi, reg_data, cfg())

    def test_nonfinite_loss_aborts(self, reg_data, small_widths):
        bad = reg_data.subset(np.arange(64))
        bad.y[5] = np.nan
        with pytest.raises(FloatingPointError, match="epoch 0"):
            train_one_step(build_tram(1, 1, widths=small_widths), bad, cfg())

    @pytest.mark.parametrize("kw", [{"mode": "three_step"}, {"beta": 0.0}, {"lr": -1.0}, {"epochs": 0}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)

    def test_het_regression_training(self, small_widths):
        data = gen_het_regression(HetRegressionTaskSpec(n=300), 0)
        model = build_tram(1, 2, widths=small_widths, het=True)
        log = train_one_step(model, data, cfg()).log
        assert np.all(np.isfinite(log.l2))
        pred = predict_marginal(model, data.x)
        assert np.all(pred.var > 0)

    def test_het_classification_training(self, cls_data, small_widths):
        model = build_tram(1, 1, "classification", small_widths, het=True)
        train_one_step(model, cls_data, cfg(epochs=1))
        probs = predict_marginal(model, cls_data.x[:20]).probs
        np.testing.assert_allclose(probs.sum(axis=1), 1.0)


class TestDistillation:
    def test_pi_and_no_pi_students(self, cls_data, small_widths):
        teacher = build_tram(1, 1, "classification", small_widths)
        train_one_step(teacher, cls_data, cfg(epochs=1))
        student = build_tram(1, 1, "classification", small_widths, seed=7)
        assert train_distilled(teacher, student, cls_data, cfg(epochs=1)).log.l1
        t0 = build_no_pi(1, "classification", small_widths)
        train_no_pi(t0, cls_data, cfg(epochs=1))
        s0 = build_no_pi(1, "classification", small_widths, seed=7)
        assert train_distilled(t0, s0, cls_data, cfg(epochs=1)).log.l2

    def test_mismatched_pairs(self, cls_data, reg_data, small_widths):
        teacher = build_tram(1, 1, "classification", small_widths)
        with pytest.raises(ValueError):
            train_distilled(teacher, build_no_pi(1, "classification", small_widths), cls_data, cfg())
        with pytest.raises(ValueError):
            train_distilled(build_tram(1, 1, widths=small_widths), build_tram(1, 1, widths=small_widths), reg_data, cfg())


class TestPredictors:
    @pytest.fixture
    def trained(self, reg_data, small_widths):
        model = build_tram(1, 1, widths=small_widths)
        train_one_step(model, reg_data, cfg())
        return model

    def test_impute_modes(self, trained, reg_data):
        zero = predict_impute(trained, reg_data.x, "zero").mean
        np.testing.assert_array_equal(zero, predict_conditional(trained, reg_data.x, np.zeros(1)).mean)
        mean = predict_impute(trained, reg_data.x, "mean", reg_data.a_encoded).mean
        a_bar = reg_data.a_encoded.mean(axis=0)
        np.testing.assert_array_equal(mean, predict_conditional(trained, reg_data.x, a_bar).mean)
        with pytest.raises(ValueError):
            predict_impute(trained, reg_data.x, "median")
        with pytest.raises(ValueError):
            predict_impute(trained, reg_data.x, "mean", np.zeros((0, 1)))

    def test_full_marg_pool_average(self, trained, reg_data):
        pool = reg_data.a_encoded[:50]
        x = reg_data.x[:7]
        pred = predict_full_marg(trained, x, pool, S=len(pool))
        each = np.stack([predict_conditional(trained, x, a).mean for a in pool])
        np.testing.assert_allclose(pred.mean, each.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(pred.var, 1.0 + each.var(axis=0), atol=1e-12)
        again = predict_full_marg(trained, x, pool, S=len(pool))
        np.testing.assert_array_equal(pred.mean, again.mean)

    def test_full_marg_errors(self, trained, reg_data):
        with pytest.raises(ValueError):
            predict_full_marg(trained, reg_data.x, reg_data.a_encoded[:5], S=6)
        with pytest.raises(ValueError):
            predict_full_marg(trained, reg_data.x, np.zeros((0, 1)), S=1)
        with pytest.raises(ValueError):
            predict_full_marg(trained, reg_data.x, reg_data.a_encoded, S=0)

    def test_full_marg_classification_normalized(self, cls_data, small_widths):
        model = build_tram(1, 1, "classification", small_widths)
        probs = predict_full_marg(model, cls_data.x[:10], cls_data.a_encoded, S=20).probs
        np.testing.assert_allclose(probs.sum(axis=1), 1.0)

    def test_predictor_kind_parse(self):
        assert PredictorKind.parse("FullMarg(S=25)") == PredictorKind.full_marg(25)
        assert str(PredictorKind.full_marg(25)) == "FullMarg(S=25)"
        assert PredictorKind.parse("TRAM") == TRAM
        with pytest.raises(ValueError):
            PredictorKind("Ensemble")
        with pytest.raises(ValueError):
            PredictorKind("TRAM", S=3)

    def test_kind_model_mismatch(self, trained, reg_data, small_widths):
        with pytest.raises(ValueError):
            predict_kind(NO_PI, trained, reg_data.x)
        with pytest.raises(ValueError):
            predict_kind(TRAM, build_no_pi(1, widths=small_widths), reg_data.x)
        with pytest.raises(ValueError):
            predict_kind(HET_TRAM, trained, reg_data.x)
        with pytest.raises(ValueError):
            predict_kind(ORACLE_TEACHER, trained, reg_data.x)
        with pytest.raises(ValueError):
            predict_kind(DISTILL_NO_PI, trained, reg_data.x)

    def test_evaluate_regression(self, trained, reg_data):
        res = evaluate(MEAN_IMPUTE, trained, reg_data, true_marginal_regression, reg_data.a_encoded)
        assert set(res.metrics) == {"nll", "rmse_to_reference"}
        assert np.isfinite(res.metrics["nll"])
        assert evaluate(ZERO_IMPUTE, trained, reg_data).metrics["nll"] > 0

    def test_evaluate_classification(self, cls_data, small_widths):
        model = build_tram(1, 1, "classification", small_widths)
        res = evaluate(TRAM, model, cls_data, lambda x: (x > 0).astype(int))
        assert 0 <= res.metrics["accuracy"] <= 1
        assert 0 <= res.metrics["reference_match"] <= 1


class TestProbes:
    def test_ridge_matches_normal_equations(self):
        rng = np.random.default_rng(0)
        F, y = rng.normal(size=(50, 4)), rng.normal(size=50)
        probe = fit_ridge(F, y, 0.5)
        Fc, yc = F - F.mean(0), y - y.mean()
        w = np.linalg.solve(Fc.T @ Fc + 0.5 * np.eye(4), Fc.T @ yc)
        np.testing.assert_allclose(probe.weights[:, 0], w, atol=1e-12)
        assert probe.predict(F).mean() == pytest.approx(y.mean())

    def test_ridge_singular_without_penalty(self):
        F = np.ones((10, 2))
        with pytest.raises(np.linalg.LinAlgError):
            fit_ridge(F, np.arange(10.0), 0.0)

    def test_logistic_converges(self):
        rng = np.random.default_rng(1)
        F = rng.normal(size=(400, 3))
        labels = (F @ np.array([1.0, -2.0, 0.5]) + 0.3 * rng.normal(size=400) > 0).astype(int)
        probe = fit_logistic(F, labels)
        assert probe.grad_norm < 1e-6
        assert np.mean(probe.predict(F) == labels) > 0.9
        np.testing.assert_allclose(probe.proba(F).sum(axis=1), 1.0)

    def test_logistic_multiclass(self):
        rng = np.random.default_rng(2)
        F = rng.normal(size=(300, 2))
        labels = np.argmax(F @ np.array([[1.0, 0.0, -1.0], [0.0, 1.0, -1.0]]), axis=1)
        probe = fit_logistic(F, labels, 3)
        assert probe.weights.shape == (2, 3)
        np.testing.assert_array_equal(probe.weights[:, 2], 0.0)
        assert np.mean(probe.predict(F) == labels) > 0.9

    def test_dispatch(self):
        with pytest.raises(ValueError):
            linear_probe(np.zeros((3, 1)), np.zeros(3), "ranking")

    def test_probe_on_features(self, reg_data, small_widths):
        model = build_tram(1, 1, widths=small_widths)
        F = features(model, reg_data.x)
        assert F.shape == (len(reg_data), small_widths.phi[-1])
        assert linear_probe(F, reg_data.y, "regression").predict(F).shape == (len(reg_data),)
