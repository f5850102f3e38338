import math

import numpy as np
import pytest

from simplexenc.encoding import EncoderConfig
from simplexenc.field import TrainConfig
from simplexenc.tasks import (PSNR_CAP, ImageDataset, NoiseFieldSpec, bundled_image_path, counter_rng,
                              fit_field, fit_image, image_psnr, load_image, psnr, save_image)


class TestPsnr:
    def test_values(self):
        assert psnr(0.0) == PSNR_CAP
        assert psnr(1e-3) == pytest.approx(30.0)
        assert psnr(1e-20) == PSNR_CAP

    @pytest.mark.parametrize("bad", [-1e-3, float("nan")])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            psnr(bad)


class TestImageDataset:
    def test_bundled_image(self):
        img = load_image(bundled_image_path())
        assert img.shape == (512, 512, 3)
        assert 0.0 <= img.min() and img.max() <= 1.0

    def test_pixel_centers(self):
        d = ImageDataset(np.zeros((2, 4, 3)))
        xy = d.all_coords()
        assert xy.shape == (8, 2)
        np.testing.assert_allclose(xy[0], [0.125, 0.25])
        np.testing.assert_allclose(xy[-1], [0.875, 0.75])

    def test_sample_matches_pixels(self):
        px = np.random.default_rng(0).random((5, 7, 3))
        d = ImageDataset(px)
        x, y = d.sample(counter_rng(1), 64)
        cols = np.floor(x[:, 0] * 7).astype(int)
        rows = np.floor(x[:, 1] * 5).astype(int)
        np.testing.assert_array_equal(y, px[rows, cols])

    @pytest.mark.parametrize("bad", [np.zeros((4, 4)), np.full((2, 2, 3), 1.5), np.zeros((0, 3, 3))])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            ImageDataset(bad)

    def test_png_round_trip(self, tmp_path):
        px = np.random.default_rng(0).integers(0, 256, size=(6, 5, 3)) / 255.0
        save_image(tmp_path / "a.png", px)
        np.testing.assert_allclose(load_image(tmp_path / "a.png"), px, atol=1e-12)

    def test_self_psnr_capped(self):
        px = np.random.default_rng(0).random((8, 8, 3))
        assert psnr(float(np.mean((px - px) ** 2))) == PSNR_CAP


SMALL = EncoderConfig(n=2, levels=4, table_size=2**12, features=2, base_resolution=4, growth=1.5)


class TestFitImage:
    def test_constant_gray(self):
        d = ImageDataset(np.full((64, 64, 3), 0.5))
        fit = fit_image(d, SMALL, TrainConfig(steps=500, batch=1024, lr_mlp=1e-2, log_every=100),
                        hidden_width=16)
        assert fit.psnr > 50.0
        assert fit.reconstruct(d).shape == (64, 64, 3)

    def test_zero_steps_reproducible(self):
        d = ImageDataset(np.random.default_rng(0).random((16, 16, 3)))
        a = fit_image(d, SMALL, TrainConfig(steps=0), hidden_width=8)
        b = fit_image(d, SMALL, TrainConfig(steps=0), hidden_width=8)
        assert math.isfinite(a.psnr) and a.psnr == b.psnr
        assert len(a.curve) == 1 and a.curve[0][0] == 0 and a.curve[0][2] == a.psnr
        assert image_psnr(a.encoder, a.mlp, d) == a.psnr

    def test_rejects_wrong_dimension(self):
        d = ImageDataset(np.zeros((4, 4, 3)))
        with pytest.raises(ValueError):
            fit_image(d, EncoderConfig(n=3), TrainConfig(steps=1))

    def test_loss_falls_on_natural_image(self):
        # trailing-window mean loss at step 2000 below the step-0 loss
        img = load_image(bundled_image_path())[::4, ::4]
        d = ImageDataset(img)
        c = EncoderConfig(n=2, levels=8, table_size=2**14, features=2, base_resolution=8,
                          growth=1.5, level_scale="equal-memory")
        fit = fit_image(d, c, TrainConfig(steps=2000, batch=1024, log_every=100), eval_every=1000)
        losses = [l for s, l, _ in fit.curve if s > 0]
        first_psnr = fit.curve[0][2]
        step0_mse = 10 ** (-first_psnr / 10)
        assert np.mean(losses[-2:]) < step0_mse
        assert fit.psnr > first_psnr + 5


class TestNoiseField:
    def test_spec_validation(self):
        for kw in (dict(n=0), dict(n=9), dict(n=2, kind="worley"), dict(n=2, octaves=2),
                   dict(n=2, frequency=0.0)):
            with pytest.raises(ValueError):
                NoiseFieldSpec(**kw)

    def test_deterministic(self):
        x = np.random.default_rng(0).random((50, 3))
        s = NoiseFieldSpec(3, seed=4)
        np.testing.assert_array_equal(s(x), NoiseFieldSpec(3, seed=4)(x))

    def test_zero_field(self):
        fit = fit_field(NoiseFieldSpec(2, kind="zero"), SMALL,
                        TrainConfig(steps=300, batch=512, lr_mlp=1e-2), hidden_width=16,
                        train_samples=4096, holdout_samples=1024)
        assert fit.mse < 1e-8

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            fit_field(NoiseFieldSpec(3), SMALL, TrainConfig(steps=1))

    @pytest.mark.parametrize("kind", ["perlin", "simplex"])
    def test_backends_agree(self, kind):
        spec = NoiseFieldSpec(2, seed=1, kind=kind)
        res = {}
        for backend in ("simplex", "grid"):
            c = EncoderConfig(n=2, levels=8, table_size=2**14, features=2, base_resolution=4,
                              growth=1.5, backend=backend, level_scale="equal-memory")
            fit = fit_field(spec, c, TrainConfig(steps=1000, batch=2048), hidden_width=32)
            assert fit.mse < 0.1 * fit.variance
            res[backend] = fit.mse
        ratio = res["simplex"] / res["grid"]
        assert 0.5 <= ratio <= 2.0
