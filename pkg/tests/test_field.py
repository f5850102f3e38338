import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import adam_ref, central_difference, mlp_forward_ref
from simplexenc.encoding import EncoderConfig, HashEncoder
from simplexenc.field import (MLP, AdamState, MlpConfig, TrainConfig, TrainingError, adam_step,
                              loss_and_grads, mse_loss, predict, train_field)


def small_mlp(seed=0, dtype=np.float64, **kw):
    c = MlpConfig(**{"input_width": 5, "hidden_width": 7, "hidden_layers": 2, "output_width": 3, **kw})
    return MLP.create(c, seed=seed, dtype=dtype)


class TestMlp:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            MlpConfig(0)
        with pytest.raises(ValueError):
            MlpConfig(4, hidden_layers=0)
        assert MlpConfig(4, 8, 2, 3).widths == [4, 8, 8, 3]

    def test_zero_params(self, rng):
        m = MLP.zeros(MlpConfig(4, 8, 2, 3))
        assert not m.forward(rng.random((6, 4))).any()

    def test_identity_single_layer(self, rng):
        m = MLP(MlpConfig(4, 4, 1, 4), [np.eye(4), np.eye(4)], [np.zeros(4), np.zeros(4)])
        x = rng.random((5, 4))
        np.testing.assert_allclose(m.forward(x), x)

    def test_matches_loop_oracle(self, rng):
        m = small_mlp(seed=2, dtype=np.float32)
        x = rng.normal(size=(9, 5)).astype(np.float32)
        np.testing.assert_allclose(m.forward(x), mlp_forward_ref(m.weights, m.biases, x), rtol=1e-5, atol=1e-6)

    def test_shape_errors(self, rng):
        m = small_mlp()
        with pytest.raises(ValueError):
            m.forward(rng.random((3, 4)))
        with pytest.raises(RuntimeError):
            small_mlp().backward(np.zeros((3, 3)))
        m.forward(rng.random((3, 5)))
        with pytest.raises(ValueError):
            m.backward(np.zeros((2, 3)))

    def test_zero_upstream(self, rng):
        m = small_mlp()
        m.forward(rng.random((4, 5)))
        grads, dx = m.backward(np.zeros((4, 3)))
        assert all(not g.any() for g in grads) and not dx.any()

    def test_output_layer_weight_grad(self, rng):
        # the output layer is affine, so its weight gradient is hidden^T @ upstream
        m = small_mlp(seed=1)
        x = rng.random((6, 5))
        m.forward(x)
        up = rng.normal(size=(6, 3))
        grads, _ = m.backward(up)
        hidden = x
        for w, b in zip(m.weights[:-1], m.biases[:-1]):
            hidden = np.maximum(hidden @ w + b, 0.0)
        np.testing.assert_allclose(grads[-2], hidden.T @ up, rtol=1e-12)
        np.testing.assert_allclose(grads[-1], up.sum(axis=0), rtol=1e-12)

    def test_finite_differences(self, rng):
        m = small_mlp(seed=4)
        x = rng.normal(size=(8, 5))
        up = rng.normal(size=(8, 3))

        def objective():
            return float(np.sum(m.forward(x) * up))

        objective()
        grads, dx = m.backward(up)
        params = m.params
        worst = 0.0
        for _ in range(10):
            k = rng.integers(len(params))
            idx = tuple(rng.integers(s) for s in params[k].shape)
            fd = central_difference(objective, params[k], idx, 1e-3)
            a = grads[k][idx]
            worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-12))
        assert worst < 1e-3
        fd_x = central_difference(objective, x, (2, 1), 1e-3)
        assert fd_x == pytest.approx(dx[2, 1], rel=1e-3)

    def test_parameter_count_default(self):
        # 32 inputs (L=16, F=2), 2x64 hidden, RGB out
        assert MLP.create(MlpConfig(32)).parameter_count == 32 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3


class TestAdam:
    def test_zero_gradient(self):
        p = [np.array([1.0, -2.0])]
        s = AdamState.like(p)
        adam_step(s, p, [np.zeros(2)], lr=0.1)
        np.testing.assert_array_equal(p[0], [1.0, -2.0])
        assert s.step == 1

    def test_first_step(self):
        g = np.array([0.5, -3.0, 1e-3])
        p = [np.zeros(3)]
        adam_step(AdamState.like(p), p, [g], lr=0.01, eps=1e-15)
        np.testing.assert_allclose(p[0], -0.01 * g / (np.abs(g) + 1e-15), rtol=1e-12)

    def test_constant_gradient_limit(self):
        p = [np.zeros(2)]
        s = AdamState.like(p)
        prev = p[0].copy()
        for _ in range(2000):
            prev = p[0].copy()
            adam_step(s, p, [np.array([2.0, -0.1])], lr=1e-3)
        np.testing.assert_allclose(p[0] - prev, [-1e-3, 1e-3], rtol=1e-6)

    @given(st.integers(1, 30), st.integers(0, 2**31))
    def test_matches_reference(self, steps, seed):
        r = np.random.default_rng(seed)
        p = [r.normal(size=6)]
        ref = p[0].copy()
        m = np.zeros(6)
        v = np.zeros(6)
        s = AdamState.like(p)
        for t in range(1, steps + 1):
            g = r.normal(size=6)
            adam_step(s, p, [g], lr=1e-2, beta1=0.9, beta2=0.99, eps=1e-8)
            ref, m, v = adam_ref(ref, g, m, v, t, 1e-2, 0.9, 0.99, 1e-8)
        np.testing.assert_allclose(p[0], ref, rtol=1e-12, atol=1e-14)

    def test_non_finite_gradient(self):
        p = [np.zeros(2)]
        with pytest.raises(TrainingError):
            adam_step(AdamState.like(p), p, [np.array([np.nan, 0.0])], lr=0.1)


def constant_sampler(value):
    def sample(rng, batch):
        return rng.random((batch, 2)), np.full((batch, 1), value)
    return sample


class TestTraining:
    def setup_method(self):
        self.enc_cfg = EncoderConfig(n=2, levels=4, table_size=2**10, features=2, base_resolution=4)

    def fresh(self, backend="simplex"):
        c = EncoderConfig(**{**self.enc_cfg.__dict__, "backend": backend})
        return HashEncoder.create(c, seed=0), MLP.create(MlpConfig(c.output_width, 16, 2, 1), seed=1)

    def test_mse_loss(self):
        loss, g = mse_loss(np.array([[1.0, 2.0]]), np.array([[0.0, 0.0]]))
        assert loss == 2.5
        np.testing.assert_allclose(g, [[1.0, 2.0]])

    def test_constant_field_converges(self):
        e, m = self.fresh()
        cfg = TrainConfig(steps=200, batch=256, log_every=50, lr_mlp=1e-2)
        res = train_field(e, m, constant_sampler(0.7), cfg)
        assert res.curve[-1][0] == 200
        assert res.curve[-1][1] < 1e-6

    def test_zero_steps_unchanged(self):
        e, m = self.fresh()
        t0 = e.tables.copy()
        w0 = [w.copy() for w in m.params]
        res = train_field(e, m, constant_sampler(0.3), TrainConfig(steps=0))
        np.testing.assert_array_equal(e.tables, t0)
        assert all(np.array_equal(a, b) for a, b in zip(w0, m.params))
        assert res.curve == [] and res.state.step == 0

    def test_bit_identical_runs(self):
        def run():
            e, m = self.fresh()
            def sampler(rng, batch):
                x = rng.random((batch, 2))
                return x, np.sin(6 * x[:, :1]) * x[:, 1:]
            return train_field(e, m, sampler, TrainConfig(steps=40, batch=128, log_every=5)).curve
        assert run() == run()

    def test_divergence_raises(self):
        e, m = self.fresh()
        def bad(rng, batch):
            return rng.random((batch, 2)), np.full((batch, 1), np.inf)
        with pytest.raises(TrainingError):
            train_field(e, m, bad, TrainConfig(steps=3, batch=8))

    def test_width_mismatch(self):
        e, _ = self.fresh()
        with pytest.raises(ValueError):
            train_field(e, MLP.create(MlpConfig(3, 4, 1, 1)), constant_sampler(0.0), TrainConfig(steps=1))

    def test_head_code_is_backend_agnostic(self):
        # same features in, same MLP gradients out, whichever backend made them
        rng = np.random.default_rng(0)
        feats = rng.normal(size=(6, 8))
        grads = []
        for backend in ("simplex", "grid"):
            _, m = self.fresh(backend)
            m.forward(feats)
            grads.append(m.backward(np.ones((6, 1)))[0])
        assert all(np.array_equal(a, b) for a, b in zip(*grads))

    def test_aux_inputs_concatenate(self):
        e, _ = self.fresh()
        m = MLP.create(MlpConfig(e.output_width + 2, 8, 1, 1))
        x = np.random.default_rng(0).random((4, 2))
        assert predict(e, m, x, aux=np.ones((4, 2))).shape == (4, 1)

    def test_full_pipeline_gradient(self):
        c = EncoderConfig(n=2, levels=2, table_size=64, features=2, base_resolution=4)
        e = HashEncoder.create(c, seed=0, dtype=np.float64)
        e.tables = np.random.default_rng(1).normal(size=e.tables.shape)
        m = MLP.create(MlpConfig(4, 16, 2, 2), seed=2, dtype=np.float64)
        rng = np.random.default_rng(3)
        x = rng.random((64, 2))
        y = rng.random((64, 2))
        _, tg, mg = loss_and_grads(e, m, x, y)

        def objective():
            return mse_loss(predict(e, m, x), y)[0]

        idx = tuple(np.argwhere(tg != 0)[5])
        fd = central_difference(objective, e.tables, idx, 1e-3)
        assert fd == pytest.approx(tg[idx], rel=1e-3)
        fd = central_difference(objective, m.weights[1], (3, 4), 1e-3)
        assert fd == pytest.approx(mg[2][3, 4], rel=1e-3, abs=1e-12)
