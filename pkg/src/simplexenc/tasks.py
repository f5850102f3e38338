"""Experiment drivers: 2D image fitting and n-dimensional noise regression."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

from .encoding import EncoderConfig, HashEncoder
from .field import MLP, MlpConfig, TrainConfig, predict, train_field
from .noise import NOISE_KINDS

PSNR_CAP = 99.0
BUNDLED_IMAGE = "astronaut.png"


def counter_rng(seed: int) -> np.random.Generator:
    """Splittable counter-based generator (Philox) used for dataset sampling."""
    return np.random.Generator(np.random.Philox(seed))


def psnr(mse: float) -> float:
    """PSNR in dB for signals in [0, 1]; zero error maps to ``PSNR_CAP``."""
    if mse < 0.0 or math.isnan(mse):
        raise ValueError(f"invalid mean squared error {mse}")
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def bundled_image_path() -> Path:
    return Path(str(resources.files("simplexenc") / "data" / BUNDLED_IMAGE))


def load_image(path) -> np.ndarray:
    """8-bit image as float64 RGB in [0, 1], shape (H, W, 3). No gamma handling."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def save_image(path, pixels: np.ndarray) -> None:
    data = np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)


@dataclass
class ImageDataset:
    pixels: np.ndarray  # (H, W, 3)

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"expected an (H, W, 3) image, got shape {p.shape}")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        self.pixels = p

    @classmethod
    def from_file(cls, path) -> "ImageDataset":
        return cls(load_image(path))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def coords(self, flat_index: np.ndarray) -> np.ndarray:
        row, col = np.divmod(flat_index, self.width)
        return np.stack([(col + 0.5) / self.width, (row + 0.5) / self.height], axis=1)

    def all_coords(self) -> np.ndarray:
        return self.coords(np.arange(self.height * self.width))

    def sample(self, rng: np.random.Generator, batch: int):
        idx = rng.integers(0, self.height * self.width, size=batch)
        return self.coords(idx), self.pixels.reshape(-1, 3)[idx]


def predict_batched(encoder, mlp, x, chunk=1 << 16) -> np.ndarray:
    return np.concatenate([predict(encoder, mlp, x[i:i + chunk]).astype(np.float64)
                           for i in range(0, len(x), chunk)])


@dataclass
class ImageFit:
    encoder: HashEncoder
    mlp: MLP
    psnr: float
    # (step, batch loss, full-image PSNR); step 0 is the untrained model
    curve: list[tuple[int, float, float]] = field(default_factory=list)

    def reconstruct(self, dataset: ImageDataset) -> np.ndarray:
        pred = predict_batched(self.encoder, self.mlp, dataset.all_coords())
        return pred.reshape(dataset.height, dataset.width, 3)


def image_psnr(encoder, mlp, dataset: ImageDataset) -> float:
    pred = predict_batched(encoder, mlp, dataset.all_coords())
    return psnr(float(np.mean(np.square(pred - dataset.pixels.reshape(-1, 3)))))


def fit_image(dataset: ImageDataset, encoder_config: EncoderConfig, train_config: TrainConfig,
              hidden_width: int = 64, hidden_layers: int = 2, eval_every: int | None = None,
              threads: int = 1) -> ImageFit:
    """Fit an RGB image; PSNR is measured on every pixel of the image."""
    if encoder_config.n != 2:
        raise ValueError("image fitting needs a 2D encoder")
    encoder = HashEncoder.create(encoder_config, seed=train_config.seed, threads=threads)
    mlp = MLP.create(MlpConfig(encoder_config.output_width, hidden_width, hidden_layers, 3),
                     seed=train_config.seed + 1)
    eval_every = eval_every or max(1, train_config.steps // 10)
    curve = [(0, float("nan"), image_psnr(encoder, mlp, dataset))]

    def on_step(step, loss):
        if step % eval_every == 0 or step == train_config.steps:
            curve.append((step, loss, image_psnr(encoder, mlp, dataset)))

    train_field(encoder, mlp, dataset.sample, train_config, callback=on_step)
    return ImageFit(encoder, mlp, curve[-1][2], curve)


FIELD_KINDS = ("perlin", "simplex", "zero")


@dataclass(frozen=True)
class NoiseFieldSpec:
    """Target ``f(x) = noise(frequency * x)`` on the unit cube."""

    n: int
    seed: int = 0
    kind: str = "perlin"
    frequency: float = 4.0
    octaves: int = 1

    def __post_init__(self):
        if not 1 <= self.n <= 8:
            raise ValueError(f"dimension must be in [1, 8], got {self.n}")
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"noise kind must be one of {FIELD_KINDS}, got {self.kind!r}")
        if self.octaves != 1:
            raise ValueError("only single-octave fields are supported")
        if not self.frequency > 0.0:
            raise ValueError("frequency must be positive")

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.kind == "zero":
            return np.zeros(len(x))
        return NOISE_KINDS[self.kind](x * self.frequency, self.seed)


@dataclass
class FieldFit:
    encoder: HashEncoder
    mlp: MLP
    mse: float
    variance: float
    curve: list[tuple[int, float]] = field(default_factory=list)


def fit_field(spec: NoiseFieldSpec, encoder_config: EncoderConfig, train_config: TrainConfig,
              train_samples: int = 1 << 16, holdout_samples: int = 1 << 14,
              hidden_width: int = 64, hidden_layers: int = 2, threads: int = 1) -> FieldFit:
    """Regress a noise field from a fixed pool of random samples.

    Reports MSE on a disjoint held-out sample set drawn from the same
    distribution.
    """
    if encoder_config.n != spec.n:
        raise ValueError(f"encoder dimension {encoder_config.n} does not match field dimension {spec.n}")
    rng = counter_rng(train_config.seed)
    x_train = rng.random((train_samples, spec.n))
    x_test = rng.random((holdout_samples, spec.n))
    y_train = spec(x_train)[:, None]
    y_test = spec(x_test)[:, None]

    encoder = HashEncoder.create(encoder_config, seed=train_config.seed, threads=threads)
    mlp = MLP.create(MlpConfig(encoder_config.output_width, hidden_width, hidden_layers, 1),
                     seed=train_config.seed + 1)

    def sampler(gen, batch):
        idx = gen.integers(0, train_samples, size=batch)
        return x_train[idx], y_train[idx]

    result = train_field(encoder, mlp, sampler, train_config)
    pred = predict_batched(encoder, mlp, x_test)
    mse = float(np.mean(np.square(pred - y_test)))
    return FieldFit(encoder, mlp, mse, float(np.var(y_test)), result.curve)
