import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import smoother_step_ref
from simplexenc.lattice import unskew
from simplexenc.noise import perlin_value, simplex_noise_value, smoother_step, vertex_gradients


class TestSmootherStep:
    def test_endpoints_and_mid(self):
        assert smoother_step(0.0) == 0.0
        assert smoother_step(1.0) == 1.0
        assert smoother_step(0.5) == 0.5

    @pytest.mark.parametrize("t", [0.0, 1.0])
    def test_flat_ends(self, t):
        h = 1e-5
        lo, hi = max(0.0, t - h), min(1.0, t + h)
        slope = (smoother_step(hi) - smoother_step(lo)) / (hi - lo)
        assert abs(slope) < 1e-9

    @given(st.floats(0.0, 1.0))
    def test_matches_polynomial(self, t):
        assert smoother_step(t) == pytest.approx(smoother_step_ref(t), abs=1e-14)

    @pytest.mark.parametrize("t", [-0.01, 1.01, float("nan")])
    def test_out_of_range(self, t):
        with pytest.raises(ValueError):
            smoother_step(t)


class TestGradients:
    def test_unit_length_and_deterministic(self, rng):
        v = rng.integers(-100, 100, size=(500, 4))
        g = vertex_gradients(v, 7)
        np.testing.assert_allclose(np.linalg.norm(g, axis=1), 1.0, atol=1e-12)
        np.testing.assert_array_equal(g, vertex_gradients(v, 7))
        assert not np.array_equal(g, vertex_gradients(v, 8))

    def test_order_independent(self):
        v = np.array([[1, 2], [3, 4], [5, 6]])
        np.testing.assert_array_equal(vertex_gradients(v, 0)[::-1], vertex_gradients(v[::-1], 0))


@pytest.mark.parametrize("fn", [perlin_value, simplex_noise_value])
class TestNoiseCommon:
    @given(st.integers(1, 4).flatmap(lambda n: st.lists(st.integers(-50, 50), min_size=n, max_size=n)))
    def test_zero_at_lattice_points(self, fn, ints):
        p = np.array(ints, float)
        if fn is simplex_noise_value:
            p = unskew(p)
        assert fn(p, seed=3) == pytest.approx(0.0, abs=1e-12)

    def test_deterministic_and_seeded(self, fn, rng):
        x = rng.random((100, 3)) * 10
        np.testing.assert_array_equal(fn(x, 5), fn(x, 5))
        assert not np.array_equal(fn(x, 5), fn(x, 6))
        assert fn(x[3], 5) == fn(x, 5)[3]

    def test_rejects_non_finite(self, fn):
        with pytest.raises(ValueError):
            fn([np.inf, 0.0])


def test_perlin_one_dimensional_hand_example():
    def grads(verts):
        return np.where(verts == 0, 1.0, -1.0).astype(float)
    w = smoother_step(0.5)
    want = (1 - w) * 0.5 * 1.0 + w * (-0.5) * (-1.0)
    assert want == 0.5
    assert perlin_value([0.5], gradients=grads) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("n", [2, 3])
def test_simplex_noise_bounded_and_symmetric(n):
    x = np.random.default_rng(n).random((10**6, n)) * 64
    v = simplex_noise_value(x, seed=1)
    peak = np.abs(v).max()
    assert peak <= math.sqrt(n)
    assert abs(v.mean()) <= 0.02 * peak
    assert abs(v.max() + v.min()) <= 0.02 * 2 * peak


def test_perlin_bounded(rng):
    x = rng.random((10**5, 3)) * 20
    assert np.abs(perlin_value(x, seed=2)).max() <= math.sqrt(3)
