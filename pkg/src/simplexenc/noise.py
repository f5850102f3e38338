"""Seeded gradient noise used as regression targets.

Gradients come from a counter-based generator: each integer vertex and
seed are mixed with splitmix64, so any vertex's gradient can be computed
independently of evaluation order.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .lattice import skew, unskew

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

GradientFn = Callable[[np.ndarray], np.ndarray]


def smoother_step(t):
    """Quintic fade ``6t^5 - 15t^4 + 10t^3`` on ``[0, 1]``."""
    a = np.asarray(t, dtype=np.float64)
    if np.any(a < 0.0) or np.any(a > 1.0) or np.any(np.isnan(a)):
        raise ValueError("smoother_step is defined on [0, 1]")
    out = a * a * a * (a * (a * 6.0 - 15.0) + 10.0)
    return float(out) if out.ndim == 0 else out


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _uniform(key: np.ndarray, counter: int) -> np.ndarray:
    bits = _mix(key + np.uint64(counter + 1) * _GOLDEN)
    # 53 high bits -> (0, 1], never zero so the log below is finite
    return ((bits >> np.uint64(11)).astype(np.float64) + 1.0) / 2.0**53


def vertex_gradients(vertices, seed: int) -> np.ndarray:
    """Unit-length pseudo-random gradients for integer vertices of shape (m, n)."""
    v = np.atleast_2d(np.asarray(vertices, dtype=np.int64))
    m, n = v.shape
    with np.errstate(over="ignore"):
        key = np.full(m, np.uint64(seed & 0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
        key = _mix(key)
        for i in range(n):
            key = _mix(key ^ (v[:, i].astype(np.uint64) + np.uint64(i + 1) * _GOLDEN))
        g = np.empty((m, n))
        for j in range(n):
            u1 = _uniform(key, 2 * j)
            u2 = _uniform(key, 2 * j + 1)
            g[:, j] = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    return g / np.where(norm > 0.0, norm, 1.0)


def _gradient_fn(seed: int, gradients: GradientFn | None) -> GradientFn:
    if gradients is not None:
        return gradients
    return lambda verts: vertex_gradients(verts, seed)


def _as_batch(x) -> tuple[np.ndarray, bool]:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        raise ValueError("noise input needs at least one coordinate")
    single = a.ndim == 1
    a = np.atleast_2d(a)
    if not np.all(np.isfinite(a)):
        raise ValueError("noise input must be finite")
    return a, single


def perlin_value(x, seed: int = 0, gradients: GradientFn | None = None):
    """Classic gradient noise over the integer grid, blended with smoother-step.

    ``x`` is one point or a batch of shape (B, n).
    """
    pts, single = _as_batch(x)
    grad = _gradient_fn(seed, gradients)
    b, n = pts.shape
    base = np.floor(pts)
    frac = pts - base
    fade = smoother_step(frac)
    total = np.zeros(b)
    for corner in range(2**n):
        bits = np.array([(corner >> i) & 1 for i in range(n)], dtype=np.float64)
        vert = base + bits
        dots = np.einsum("bi,bi->b", grad(vert.astype(np.int64)), pts - vert)
        w = np.prod(np.where(bits == 1.0, fade, 1.0 - fade), axis=1)
        total += w * dots
    return float(total[0]) if single else total


def simplex_noise_value(x, seed: int = 0, gradients: GradientFn | None = None):
    """Gradient noise over the skewed simplex lattice.

    Each of the ``n+1`` containing vertices contributes its gradient dotted
    with the Cartesian displacement, weighted by smoother-step-warped
    barycentric weights renormalized to sum to one.
    """
    pts, single = _as_batch(x)
    grad = _gradient_fn(seed, gradients)
    b, n = pts.shape
    xs = skew(pts)
    base = np.floor(xs)
    frac = xs - base
    perm = np.argsort(-frac, axis=1, kind="stable")
    s = np.take_along_axis(frac, perm, axis=1)
    w = np.empty((b, n + 1))
    w[:, 0] = 1.0 - s[:, 0]
    w[:, 1:n] = s[:, :-1] - s[:, 1:]
    w[:, n] = s[:, -1]
    w = smoother_step(np.clip(w, 0.0, 1.0))
    w /= w.sum(axis=1, keepdims=True)
    steps = np.zeros((b, n + 1, n))
    rows = np.arange(b)
    for k in range(n):
        steps[:, k + 1] = steps[:, k]
        steps[rows, k + 1, perm[:, k]] += 1.0
    total = np.zeros(b)
    for k in range(n + 1):
        vert = base + steps[:, k]
        disp = pts - unskew(vert)
        total += w[:, k] * np.einsum("bi,bi->b", grad(vert.astype(np.int64)), disp)
    return float(total[0]) if single else total


NOISE_KINDS = {"perlin": perlin_value, "simplex": simplex_noise_value}
