"""Memory-utilization analysis and lookup-kernel benchmarks."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .encoding import EncoderConfig, init_tables, level_bounds, level_resolutions, lookup_plan
from .lattice import scale_adjustment, unskew_factor
from .tasks import counter_rng

FULL_SCALE_CELLS = 2**27
DESK_CELLS = 2**21


def volume_ratio(n: int) -> float:
    """Fraction of the skewed lattice's bounding box covered by the unit cube's image."""
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    return float((n + 1) ** (-(n - 1) / 2))


def volume_ratio_via_determinant(n: int) -> float:
    """Same ratio, from the determinant of the unskewed scaled edge vectors."""
    if not 1 <= n <= 8:
        raise ValueError(f"dimension must be in [1, 8], got {n}")
    edges = scale_adjustment(n) * np.eye(n)
    # unskew each edge vector (column): v - G * sum(v)
    unskewed = edges - unskew_factor(n) * np.ones((n, n)) @ edges
    return float(1.0 / abs(np.linalg.det(unskewed)))


@dataclass(frozen=True)
class UtilizationReport:
    n: int
    level: int
    samples: int
    estimate_pct: float
    bound_pct: float


@dataclass(frozen=True)
class KernelBenchReport:
    n: int
    backend: str
    cells: int
    samples: int
    reps: int
    seconds: float
    vertices_per_sample: int


MIN_SAMPLES = 10**6
MAX_AUTO_SAMPLES = 4 * 10**7


def default_sample_count(n: int, level: int) -> int:
    """Twice the lattice size, clamped to ``[MIN_SAMPLES, MAX_AUTO_SAMPLES]``.

    Coarse lattices saturate with 10**6 samples; fine ones need a few
    samples per vertex before the census stops undercounting.
    """
    return int(min(MAX_AUTO_SAMPLES, max(MIN_SAMPLES, 2 * (level + 1) ** n)))


def utilization_estimate(n: int, level: int, sample_count: int = 10**6, seed: int = 0,
                         chunk: int = 1 << 20) -> UtilizationReport:
    """Monte-Carlo share of level-``level`` lattice vertices touched by unit-cube samples.

    The vertex universe is the ``(level + 1)**n`` integer points of the skewed
    lattice's bounding box ``[0, level]**n``.
    """
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    if not 1 <= n <= 8:
        raise ValueError(f"dimension must be in [1, 8], got {n}")
    side = level + 1
    total = side**n
    bitmap = np.zeros((total + 63) // 64, dtype=np.uint64)
    rng = counter_rng(seed)
    outside = 0
    done = 0
    while done < sample_count:
        m = min(chunk, sample_count - done)
        outside += _kernels.mark_simplex_vertices(rng.random((m, n)), float(level), side, bitmap)
        done += m
    if outside:
        raise RuntimeError(f"{outside} vertex visits fell outside the level lattice")
    touched = int(np.bitwise_count(bitmap).sum())
    return UtilizationReport(n, level, sample_count, 100.0 * touched / total, 100.0 * volume_ratio(n))


def lattice_side(cells: int, n: int) -> int:
    """Largest integer side with ``side**n <= cells``."""
    side = max(1, int(round(cells ** (1.0 / n))))
    while side**n > cells:
        side -= 1
    while (side + 1) ** n <= cells:
        side += 1
    return side


def _bench_config(n: int, cells: int, backend: str, features: int) -> EncoderConfig:
    size = 1 << max(0, (cells - 1).bit_length())
    return EncoderConfig(n=n, levels=1, table_size=size, features=features,
                         base_resolution=lattice_side(cells, n), growth=2.0, backend=backend)


def bench_kernel(n: int, cells: int = DESK_CELLS, samples: int = 2**10, reps: int = 1000,
                 backend: str = "simplex", seed: int = 0, features: int = 2,
                 min_seconds: float = 1e-3) -> KernelBenchReport:
    """Time the hash + fetch + interpolate loop over ``reps`` passes of ``samples`` points.

    Table allocation and sampling happen outside the timed region. If the
    total is below ``min_seconds`` the run is repeated with 10x the reps.
    """
    config = _bench_config(n, cells, backend, features)
    rng = counter_rng(seed)
    tables = init_tables(config, rng)
    x = rng.random((samples, n))
    scales = level_resolutions(config)
    bounds = level_bounds(config)
    out = np.empty((samples, config.output_width), dtype=tables.dtype)
    repeat = _kernels.simplex_repeat if backend == "simplex" else _kernels.grid_repeat
    repeat(x, scales, bounds, tables, out, np.zeros(2, np.int64), 1)  # compile / warm caches
    while True:
        counters = np.zeros(2, np.int64)
        start = time.perf_counter()
        repeat(x, scales, bounds, tables, out, counters, reps)
        elapsed = time.perf_counter() - start
        if elapsed >= min_seconds:
            break
        warnings.warn(f"kernel run of {elapsed:.2e}s is below timer resolution; "
                      f"raising reps from {reps} to {reps * 10}", RuntimeWarning, stacklevel=2)
        reps *= 10
    if counters[1]:
        raise RuntimeError(f"{counters[1]} lookups fell outside the lattice")
    per_sample, rem = divmod(int(counters[0]), samples * reps)
    if rem:
        raise RuntimeError("vertex counter is not a whole number per sample")
    return KernelBenchReport(n, backend, cells, samples, reps, elapsed, per_sample)


def lookup_trace_digest(n: int, backend: str, cells: int = DESK_CELLS, samples: int = 2**10,
                        seed: int = 0) -> str:
    """SHA-256 over the hash indices the benchmark's samples touch."""
    config = _bench_config(n, cells, backend, 2)
    rng = counter_rng(seed)
    init_tables(config, rng)
    plan = lookup_plan(rng.random((samples, n)), config)
    return hashlib.sha256(plan.indices.tobytes()).hexdigest()


_CSV_TYPES = {"utilization": UtilizationReport, "kernel": KernelBenchReport}


def _report_type(kind) -> type:
    if isinstance(kind, str):
        return _CSV_TYPES[kind]
    return kind


def emit_report(reports, path, kind=None, plot_json: bool = False) -> Path:
    """Write reports as CSV with the dataclass field order as columns.

    ``kind`` ("utilization", "kernel" or the report class) is needed only when
    ``reports`` is empty. With ``plot_json`` a sibling ``.json`` file holds the
    same rows as column arrays.
    """
    reports = list(reports)
    cls = _report_type(kind) if kind is not None else type(reports[0]) if reports else None
    if cls is None:
        raise ValueError("cannot infer the report schema from an empty list")
    names = [f.name for f in dataclasses.fields(cls)]
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for r in reports:
            writer.writerow([repr(v) if isinstance(v, float) else v
                             for v in dataclasses.astuple(r)])
    if plot_json:
        cols = {name: [getattr(r, name) for r in reports] for name in names}
        path.with_suffix(".json").write_text(json.dumps(cols, indent=1))
    return path


def read_report(path, kind) -> list:
    cls = _report_type(kind)
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    casts = {"int": int, "float": float, "str": str}
    with open(path, newline="") as fh:
        return [cls(**{k: casts[types[k]](v) for k, v in row.items()})
                for row in csv.DictReader(fh)]
