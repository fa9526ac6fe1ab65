import numpy as np
import pytest

from conftest import numeric_grad, rel_err
from tramlab.nn import autodiff as ad
from tramlab.nn import serialize
from tramlab.nn.losses import (
    GAUSSIAN_NLL,
    HET_SOFTMAX_CE,
    MSE,
    SOFTMAX_CE,
    LossKind,
    loss_and_grad,
    softmax,
)
from tramlab.nn.mlp import MLPSpec, ParamBlock, backward, forward, mlp_init
from tramlab.nn.optim import AdamState, adam_step
from tramlab.rng import make_rng


@pytest.fixture
def spec():
    return MLPSpec(3, (5, 4, 2), ("tanh", "relu", "identity"), init_seed=7)


class TestInit:
    def test_glorot_bounds_and_zero_bias(self, spec):
        params = mlp_init(spec)
        fan_in = spec.input_dim
        for i, fan_out in enumerate(spec.layer_dims):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            assert np.all(np.abs(params[f"layer{i}.W"]) <= limit)
            assert np.all(params[f"layer{i}.b"] == 0)
            fan_in = fan_out

    def test_same_seed_same_params(self, spec):
        np.testing.assert_array_equal(mlp_init(spec).flat(), mlp_init(spec).flat())

    def test_different_seed_differs(self, spec):
        other = MLPSpec(3, (5, 4, 2), ("tanh", "relu", "identity"), init_seed=8)
        assert not np.array_equal(mlp_init(spec).flat(), mlp_init(other).flat())

    def test_rejects_bad_spec(self):
        with pytest.raises(ValueError):
            MLPSpec(3, (), ())
        with pytest.raises(ValueError):
            MLPSpec(3, (4,), ("tanh", "tanh"))
        with pytest.raises(ValueError):
            MLPSpec(3, (0,), ("tanh",))
        with pytest.raises(ValueError):
            MLPSpec(3, (4,), ("gelu",))


class TestGradients:
    @pytest.mark.parametrize("act", ["tanh", "sigmoid", "softplus", "identity"])
    def test_mlp_param_and_input_grads(self, act):
        spec = MLPSpec(3, (6, 2), (act, "identity"), init_seed=1)
        params = mlp_init(spec)
        x = make_rng(0, "x").normal(size=(5, 3))
        up = make_rng(0, "up").normal(size=(5, 2))
        _, cache = forward(spec, params, x)
        grads, gin = backward(cache, up)

        def f():
            return float(np.sum(forward(spec, params, x)[0] * up))

        for name, arr in params.items():
            assert rel_err(grads[name], numeric_grad(f, arr)) < 1e-4
        assert rel_err(gin, numeric_grad(f, x)) < 1e-4

    def test_relu_grad_away_from_kinks(self):
        spec = MLPSpec(2, (4, 1), ("relu", "identity"), init_seed=2)
        params = mlp_init(spec)
        params["layer0.b"][:] = 0.3
        x = np.abs(make_rng(1).normal(size=(6, 2))) + 0.5
        _, cache = forward(spec, params, x)
        grads, _ = backward(cache, np.ones((6, 1)))

        def f():
            return float(forward(spec, params, x)[0].sum())

        assert rel_err(grads["layer0.W"], numeric_grad(f, params["layer0.W"])) < 1e-4

    def test_linear_net_matches_hand_formula(self):
        spec = MLPSpec(4, (1,), ("identity",), init_seed=3)
        params = mlp_init(spec)
        rng = make_rng(2)
        X, y = rng.normal(size=(10, 4)), rng.normal(size=10)
        pred, cache = forward(spec, params, X)
        _, d = loss_and_grad(MSE, pred, y)
        grads, _ = backward(cache, d)
        w = params["layer0.W"][:, 0]
        expected = 2 * X.T @ (X @ w - y) / len(y)
        np.testing.assert_allclose(grads["layer0.W"][:, 0], expected, rtol=1e-8, atol=1e-12)

    def test_stale_cache_rejected(self, spec):
        params = mlp_init(spec)
        _, cache = forward(spec, params, np.zeros((2, 3)))
        params.set_flat(params.flat())
        with pytest.raises(RuntimeError):
            backward(cache, np.ones((2, 2)))


class TestStopGradient:
    def test_exact_zero_upstream(self):
        W = ad.leaf(make_rng(0).normal(size=(3, 3)), "W")
        x = ad.constant(make_rng(1).normal(size=(4, 3)))
        h = ad.tanh(ad.matmul(x, W))
        out = ad.matmul(ad.stop_gradient(h), ad.leaf(np.ones((3, 1)), "V"))
        ad.backward([(out, np.ones((4, 1)))])
        assert W.grad is None

    def test_value_passthrough(self):
        t = ad.leaf(np.arange(6.0).reshape(2, 3))
        np.testing.assert_array_equal(ad.stop_gradient(t).data, t.data)

    def test_other_branch_still_receives_gradient(self):
        W = ad.leaf(np.eye(2), "W")
        x = ad.constant(np.ones((1, 2)))
        h = ad.matmul(x, W)
        out = ad.add(h, ad.stop_gradient(h))
        ad.backward([(out, np.ones((1, 2)))])
        np.testing.assert_array_equal(W.grad, np.ones((2, 2)))


class TestAdam:
    def test_first_step_is_minus_lr_sign(self):
        params = ParamBlock({"w": np.array([0.0])})
        state = AdamState.for_params(params, lr=0.1)
        adam_step(state, params, {"w": np.array([1.0])})
        np.testing.assert_allclose(params["w"], [-0.1], rtol=1e-6)

    def test_elementwise_and_deterministic(self):
        def run():
            params = ParamBlock({"w": np.array([1.0, -2.0, 3.0])})
            state = AdamState.for_params(params, lr=0.05)
            for _ in range(20):
                adam_step(state, params, {"w": 2 * params["w"]})
            return params["w"].copy()

        a, b = run(), run()
        np.testing.assert_array_equal(a, b)
        assert np.all(np.abs(a) < np.array([1.0, 2.0, 3.0]))

    def test_nonfinite_gradient_raises(self):
        params = ParamBlock({"w": np.zeros(2)})
        with pytest.raises(FloatingPointError):
            adam_step(AdamState.for_params(params), params, {"w": np.array([np.nan, 0.0])})

    def test_minimizes_quadratic(self):
        params = ParamBlock({"w": np.array([5.0, -4.0])})
        state = AdamState.for_params(params, lr=0.1)
        for _ in range(500):
            adam_step(state, params, {"w": 2 * (params["w"] - 1.0)})
        np.testing.assert_allclose(params["w"], [1.0, 1.0], atol=1e-2)


class TestLosses:
    @pytest.mark.parametrize(
        "kind,width",
        [(MSE, 1), (SOFTMAX_CE, 3), (GAUSSIAN_NLL, 1), (GAUSSIAN_NLL, 2), (LossKind.distill(2.0, 0.3), 3)],
    )
    def test_gradient_matches_finite_difference(self, kind, width):
        rng = make_rng(5, kind.name, width)
        pred = rng.normal(size=(6, width))
        y = rng.integers(0, width, size=6) if kind.name in ("SoftmaxCE", "Distill") else rng.normal(size=6)
        aux = rng.normal(size=(6, width)) if kind.name == "Distill" else None
        _, g = loss_and_grad(kind, pred, y, aux)
        assert rel_err(g, numeric_grad(lambda: loss_and_grad(kind, pred, y, aux)[0], pred)) < 1e-4

    def test_het_softmax_gradient(self):
        rng = make_rng(6)
        pred = rng.normal(size=(4, 6))
        y = rng.integers(0, 3, size=4)
        noise = rng.standard_normal((50, 4, 3))
        _, g = loss_and_grad(HET_SOFTMAX_CE, pred, y, noise)
        num = numeric_grad(lambda: loss_and_grad(HET_SOFTMAX_CE, pred, y, noise)[0], pred)
        assert rel_err(g, num) < 1e-4

    def test_gaussian_nll_zero_residual(self):
        loss, _ = loss_and_grad(GAUSSIAN_NLL, np.zeros((3, 1)), np.zeros(3))
        assert loss == pytest.approx(0.5 * np.log(2 * np.pi), abs=1e-7)

    def test_softmax_normalized(self):
        p = softmax(make_rng(0).normal(size=(10, 5)) * 50)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(p >= 0)

    def test_distill_with_lambda_zero_is_ce(self):
        rng = make_rng(1)
        logits, y = rng.normal(size=(5, 3)), rng.integers(0, 3, size=5)
        a = loss_and_grad(LossKind.distill(3.0, 0.0), logits, y, rng.normal(size=(5, 3)))
        b = loss_and_grad(SOFTMAX_CE, logits, y)
        assert a[0] == pytest.approx(b[0])
        np.testing.assert_allclose(a[1], b[1])

    def test_missing_aux_raises(self):
        with pytest.raises(ValueError):
            loss_and_grad(LossKind.distill(), np.zeros((2, 2)), np.zeros(2))
        with pytest.raises(ValueError):
            loss_and_grad(HET_SOFTMAX_CE, np.zeros((2, 4)), np.zeros(2))

    def test_invalid_loss_kind(self):
        with pytest.raises(ValueError):
            LossKind("Hinge")
        with pytest.raises(ValueError):
            LossKind.distill(temperature=0.0)


class TestSerialization:
    def test_roundtrip_bit_exact(self, spec):
        blocks = {"phi": mlp_init(spec, "phi."), "head": mlp_init(MLPSpec(2, (1,), ("identity",)), "h.")}
        restored = serialize.loads(serialize.dumps(blocks))
        for name, block in blocks.items():
            for k, arr in block.items():
                np.testing.assert_array_equal(restored[name][k], arr)

    def test_file_roundtrip(self, spec, tmp_path):
        blocks = {"phi": mlp_init(spec)}
        serialize.save(tmp_path / "ck.bin", blocks)
        assert serialize.dumps(serialize.load(tmp_path / "ck.bin")) == serialize.dumps(blocks)

    def test_corrupt_input_rejected(self, spec):
        data = serialize.dumps({"phi": mlp_init(spec)})
        with pytest.raises(ValueError):
            serialize.loads(b"junk" + data)
        with pytest.raises(ValueError):
            serialize.loads(data[:-8])
        with pytest.raises(ValueError):
            serialize.loads(data + b"\x00")
