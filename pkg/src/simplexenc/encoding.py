"""Multiresolution hash encoding over simplex or grid lattices."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .lattice import MAX_DIMENSION

BACKENDS = ("simplex", "grid")
LEVEL_SCALES = ("raw", "equal-memory")
INIT_RANGE = 1e-4


def _is_pow2(v: int) -> bool:
    return v >= 1 and (v & (v - 1)) == 0


@dataclass(frozen=True)
class EncoderConfig:
    n: int = 2
    levels: int = 16
    table_size: int = 2**19
    features: int = 2
    base_resolution: int = 16
    growth: float = 1.5
    backend: str = "simplex"
    level_scale: str = "raw"

    def __post_init__(self):
        if not 1 <= self.n <= MAX_DIMENSION:
            raise ValueError(f"dimension must be in [1, {MAX_DIMENSION}], got {self.n}")
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if not _is_pow2(self.table_size) or self.table_size > 2**32:
            raise ValueError(f"table size must be a power of two <= 2**32, got {self.table_size}")
        if self.features < 1:
            raise ValueError(f"features must be >= 1, got {self.features}")
        if self.base_resolution < 1:
            raise ValueError(f"base resolution must be >= 1, got {self.base_resolution}")
        if not self.growth > 1.0:
            raise ValueError(f"growth must be > 1, got {self.growth}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.level_scale not in LEVEL_SCALES:
            raise ValueError(f"level scale must be one of {LEVEL_SCALES}, got {self.level_scale!r}")

    @property
    def output_width(self) -> int:
        return self.levels * self.features

    @property
    def vertices_per_level(self) -> int:
        return self.n + 1 if self.backend == "simplex" else 2**self.n


def equal_memory_multiplier(n: int) -> float:
    """Resolution factor giving the simplex lattice the grid's vertex budget."""
    return (n + 1) ** ((n - 1) / (2 * n))


def level_resolution(config: EncoderConfig, level: int) -> float:
    if not 0 <= level < config.levels:
        raise ValueError(f"level must be in [0, {config.levels}), got {level}")
    res = float(math.floor(config.base_resolution * config.growth**level))
    if config.level_scale == "equal-memory" and config.backend == "simplex":
        res *= equal_memory_multiplier(config.n)
    return res


def level_resolutions(config: EncoderConfig) -> np.ndarray:
    return np.array([level_resolution(config, l) for l in range(config.levels)])


def level_bounds(config: EncoderConfig) -> np.ndarray:
    """Largest valid vertex coordinate on each level's lattice."""
    return np.ceil(level_resolutions(config)).astype(np.int64)


def hash_index(int_coords, table_size: int) -> np.ndarray | int:
    """Spatial hash of integer lattice coordinates into ``[0, table_size)``.

    Accepts one coordinate vector or an ``(m, n)`` array of them.
    """
    if not _is_pow2(table_size):
        raise ValueError(f"table size must be a power of two, got {table_size}")
    c = np.asarray(int_coords, dtype=np.int64)
    single = c.ndim == 1
    c2 = np.atleast_2d(c)
    if c2.shape[1] > len(_kernels.PRIMES):
        raise ValueError(f"at most {len(_kernels.PRIMES)} axes are supported")
    out = _kernels.hash_coords(np.ascontiguousarray(c2), table_size)
    return int(out[0]) if single else out


def _backend_code(backend: str) -> int:
    return _kernels.SIMPLEX if backend == "simplex" else _kernels.GRID


_FORWARD = {"simplex": _kernels.simplex_forward, "grid": _kernels.grid_forward}
_BACKWARD = {"simplex": _kernels.simplex_backward, "grid": _kernels.grid_backward}


def _check_points(x, n: int) -> np.ndarray:
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != n:
        raise ValueError(f"expected points of shape (batch, {n}), got {x.shape}")
    if x.size and (np.any(~np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0):
        raise ValueError("points must lie in the unit cube")
    return x


def _chunks(count: int, workers: int) -> list[slice]:
    workers = max(1, min(workers, count))
    edges = np.linspace(0, count, workers + 1).astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


@dataclass
class LookupCounters:
    fetches: int = 0
    out_of_bounds: int = 0


@dataclass
class EncoderGradient:
    """Per-level table gradients. Rows not touched by the forward pass stay zero."""

    grads: np.ndarray  # (L, T, F) float64

    def touched(self, level: int) -> np.ndarray:
        return np.flatnonzero(np.any(self.grads[level] != 0.0, axis=1))

    def items(self, level: int) -> dict[int, np.ndarray]:
        return {int(i): self.grads[level, i] for i in self.touched(level)}


def _run_forward(config, x, tables, counters=None, threads=1):
    if tables.shape != (config.levels, config.table_size, config.features):
        raise ValueError(f"tables have shape {tables.shape}, expected "
                         f"{(config.levels, config.table_size, config.features)}")
    x = _check_points(x, config.n)
    scales = level_resolutions(config)
    bounds = level_bounds(config)
    out = np.empty((x.shape[0], config.output_width), dtype=tables.dtype)
    kernel = _FORWARD[config.backend]
    parts = _chunks(x.shape[0], threads)
    cnt = [np.zeros(2, np.int64) for _ in parts]
    if len(parts) <= 1:
        for s, c in zip(parts, cnt):
            kernel(x[s], scales, bounds, tables, out[s], c)
    else:
        with ThreadPoolExecutor(len(parts)) as pool:
            list(pool.map(lambda sc: kernel(x[sc[0]], scales, bounds, tables, out[sc[0]], sc[1]),
                          zip(parts, cnt)))
    if counters is not None:
        total = np.sum(cnt, axis=0) if cnt else np.zeros(2, np.int64)
        counters.fetches += int(total[0])
        counters.out_of_bounds += int(total[1])
    return out


def encode_simplex(x, tables, config: EncoderConfig, counters=None, threads=1):
    if config.backend != "simplex":
        raise ValueError("config backend is not simplex")
    return _run_forward(config, x, tables, counters, threads)


def encode_grid(x, tables, config: EncoderConfig, counters=None, threads=1):
    if config.backend != "grid":
        raise ValueError("config backend is not grid")
    return _run_forward(config, x, tables, counters, threads)


def encode_backward(x, upstream, tables, config: EncoderConfig, threads=1) -> EncoderGradient:
    """Transpose of the encoding: route ``upstream`` into per-entry gradients.

    Workers fill private accumulators which are summed in chunk order, so the
    result is identical for any thread count given the same chunking.
    """
    x = _check_points(x, config.n)
    upstream = np.ascontiguousarray(np.asarray(upstream, dtype=np.float64))
    if upstream.shape != (x.shape[0], config.output_width):
        raise ValueError(f"upstream gradient has shape {upstream.shape}, expected "
                         f"{(x.shape[0], config.output_width)}")
    shape = (config.levels, config.table_size, config.features)
    if tables is not None and tables.shape != shape:
        raise ValueError(f"tables have shape {tables.shape}, expected {shape}")
    scales = level_resolutions(config)
    kernel = _BACKWARD[config.backend]
    parts = _chunks(x.shape[0], threads)
    grads = np.zeros(shape)
    if len(parts) <= 1:
        for s in parts:
            kernel(x[s], scales, upstream[s], grads)
        return EncoderGradient(grads)
    partials = [np.zeros(shape) for _ in parts]
    with ThreadPoolExecutor(len(parts)) as pool:
        list(pool.map(lambda sp: kernel(x[sp[0]], scales, upstream[sp[0]], sp[1]),
                      zip(parts, partials)))
    for p in partials:
        grads += p
    return EncoderGradient(grads)


@dataclass
class LookupPlan:
    indices: np.ndarray  # (B, L, K)
    weights: np.ndarray  # (B, L, K)
    coords: np.ndarray  # (B, L, K, n)


def lookup_plan(x, config: EncoderConfig) -> LookupPlan:
    """Hash indices, interpolation weights and lattice vertices of each lookup."""
    x = _check_points(x, config.n)
    k = config.vertices_per_level
    shape = (x.shape[0], config.levels, k)
    plan = LookupPlan(np.empty(shape, np.int64), np.empty(shape), np.empty(shape + (config.n,), np.int64))
    _kernels.lookup_plan(_backend_code(config.backend), x, level_resolutions(config),
                         config.table_size, plan.indices, plan.weights, plan.coords)
    return plan


def init_tables(config: EncoderConfig, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    shape = (config.levels, config.table_size, config.features)
    return rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape).astype(dtype)


@dataclass
class HashEncoder:
    """Feature tables plus the lookup configuration that indexes them."""

    config: EncoderConfig
    tables: np.ndarray
    counters: LookupCounters = field(default_factory=LookupCounters)
    threads: int = 1

    @classmethod
    def create(cls, config: EncoderConfig, seed: int = 0, dtype=np.float32, threads: int = 1):
        rng = np.random.default_rng(seed)
        return cls(config, init_tables(config, rng, dtype), threads=threads)

    @property
    def output_width(self) -> int:
        return self.config.output_width

    def encode(self, x) -> np.ndarray:
        return _run_forward(self.config, x, self.tables, self.counters, self.threads)

    __call__ = encode

    def backward(self, x, upstream) -> EncoderGradient:
        return encode_backward(x, upstream, self.tables, self.config, self.threads)
