"""Tiny fully connected head, Adam, and the joint encoder + MLP training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .encoding import HashEncoder

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Raised when a loss or gradient stops being finite."""


@dataclass(frozen=True)
class MlpConfig:
    input_width: int
    hidden_width: int = 64
    hidden_layers: int = 2
    output_width: int = 3

    def __post_init__(self):
        for name in ("input_width", "hidden_width", "hidden_layers", "output_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def widths(self) -> list[int]:
        return [self.input_width] + [self.hidden_width] * self.hidden_layers + [self.output_width]


class MLP:
    """Affine + ReLU stack with an identity output layer.

    Weights are stored ``(fan_in, fan_out)`` so a batch multiplies on the left.
    """

    def __init__(self, config: MlpConfig, weights: list[np.ndarray], biases: list[np.ndarray]):
        widths = config.widths
        if len(weights) != len(widths) - 1 or len(biases) != len(weights):
            raise ValueError("layer count does not match config")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (widths[i], widths[i + 1]) or b.shape != (widths[i + 1],):
                raise ValueError(f"layer {i} has shapes {w.shape}, {b.shape}")
        self.config = config
        self.weights = weights
        self.biases = biases
        self._cache: list[np.ndarray] | None = None

    @classmethod
    def create(cls, config: MlpConfig, seed: int = 0, dtype=np.float32) -> "MLP":
        rng = np.random.default_rng(seed)
        widths = config.widths
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            # He-uniform for the ReLU layers
            limit = math.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
            biases.append(np.zeros(fan_out, dtype=dtype))
        return cls(config, weights, biases)

    @classmethod
    def zeros(cls, config: MlpConfig, dtype=np.float32) -> "MLP":
        widths = config.widths
        return cls(config,
                   [np.zeros((a, b), dtype) for a, b in zip(widths[:-1], widths[1:])],
                   [np.zeros(b, dtype) for b in widths[1:]])

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, features) -> np.ndarray:
        h = np.asarray(features)
        if h.ndim != 2 or h.shape[1] != self.config.input_width:
            raise ValueError(f"expected input of shape (batch, {self.config.input_width}), got {h.shape}")
        h = h.astype(self.weights[0].dtype, copy=False)
        cache = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0)
            cache.append(h)
        self._cache = cache
        return h

    __call__ = forward

    def backward(self, upstream) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients for ``params`` (same order) and for the input batch."""
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        cache = self._cache
        g = np.asarray(upstream, dtype=cache[-1].dtype)
        if g.shape != cache[-1].shape:
            raise ValueError(f"upstream has shape {g.shape}, expected {cache[-1].shape}")
        grads: list[np.ndarray] = []
        for i in range(len(self.weights) - 1, -1, -1):
            if i < len(self.weights) - 1:
                g = g * (cache[i + 1] > 0)
            grads.append(g.sum(axis=0))
            grads.append(cache[i].T @ g)
            g = g @ self.weights[i].T
        grads.reverse()
        return grads, g


@dataclass
class AdamState:
    step: int
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(state: AdamState, params, grads, lr, beta1=0.9, beta2=0.99, eps=1e-15) -> AdamState:
    """Bias-corrected Adam update applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state disagree in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        _kernels.adam_update(p.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                             m.reshape(-1), v.reshape(-1), lr, beta1, beta2, eps, c1, c2)
    return state


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 1000
    batch: int = 2**14
    lr_tables: float = 1e-2
    lr_mlp: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-15
    log_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if self.log_every < 1:
            raise ValueError(f"log_every must be >= 1, got {self.log_every}")


@dataclass
class TrainState:
    tables: AdamState
    mlp: AdamState
    lr_tables: float
    lr_mlp: float

    @property
    def step(self) -> int:
        return self.mlp.step


@dataclass
class TrainResult:
    state: TrainState
    curve: list[tuple[int, float]] = field(default_factory=list)


Sampler = Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]]


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    diff = pred.astype(np.float64) - target
    return float(np.mean(np.square(diff))), 2.0 * diff / diff.size


def predict(encoder: HashEncoder, mlp: MLP, x, aux=None) -> np.ndarray:
    feats = encoder.encode(x)
    if aux is not None:
        feats = np.concatenate([feats, np.asarray(aux, dtype=feats.dtype)], axis=1)
    return mlp.forward(feats)


def loss_and_grads(encoder: HashEncoder, mlp: MLP, x, y):
    """One forward/backward pass; returns loss, table grads and MLP grads."""
    pred = predict(encoder, mlp, x)
    loss, dpred = mse_loss(pred, y)
    if not math.isfinite(loss):
        raise TrainingError(f"loss became non-finite ({loss})")
    mlp_grads, dfeat = mlp.backward(dpred)
    enc = encoder.backward(x, dfeat[:, :encoder.output_width])
    return loss, enc.grads, mlp_grads


def train_field(encoder: HashEncoder, mlp: MLP, sampler: Sampler, config: TrainConfig,
                state: TrainState | None = None,
                callback: Callable[[int, float], None] | None = None) -> TrainResult:
    """Fit encoder tables and MLP jointly with MSE loss.

    ``sampler(rng, batch)`` returns inputs in the unit cube and targets. The
    loss curve records ``(step, loss)`` every ``log_every`` steps and at the
    last step.
    """
    if mlp.config.input_width < encoder.output_width:
        raise ValueError(f"MLP input width {mlp.config.input_width} is smaller than the "
                         f"encoding width {encoder.output_width}")
    if state is None:
        state = TrainState(AdamState.like([encoder.tables]), AdamState.like(mlp.params),
                           config.lr_tables, config.lr_mlp)
    rng = np.random.Generator(np.random.Philox(config.seed))
    result = TrainResult(state)
    for step in range(1, config.steps + 1):
        x, y = sampler(rng, config.batch)
        loss, table_grad, mlp_grads = loss_and_grads(encoder, mlp, x, y)
        adam_step(state.tables, [encoder.tables], [table_grad], state.lr_tables,
                  config.beta1, config.beta2, config.eps)
        adam_step(state.mlp, mlp.params, mlp_grads, state.lr_mlp,
                  config.beta1, config.beta2, config.eps)
        if step % config.log_every == 0 or step == config.steps:
            result.curve.append((step, loss))
            log.debug("step %d loss %.6g", step, loss)
        if callback is not None:
            callback(step, loss)
    return result
