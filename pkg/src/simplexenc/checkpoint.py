"""Binary checkpoints for feature tables and an optional MLP head.

Layout (little-endian throughout)::

    "SXEN" u32 version, n, L, T, F, N_base  f64 growth  u8 backend  u8 level_scale  2 pad
    L blocks of T*F f32
    optional: "SXMP" u32 version, input, hidden, layers, output
              per layer: fan_in*fan_out f32 weights, fan_out f32 biases
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .encoding import BACKENDS, LEVEL_SCALES, EncoderConfig, HashEncoder
from .field import MLP, MlpConfig

VERSION = 1
_ENC = struct.Struct("<4sIIIIIIdBB2x")
_MLP = struct.Struct("<4sIIIII")
_F32 = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


def save(path, encoder: HashEncoder, mlp: MLP | None = None) -> Path:
    c = encoder.config
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_ENC.pack(b"SXEN", VERSION, c.n, c.levels, c.table_size, c.features,
                           c.base_resolution, c.growth, BACKENDS.index(c.backend),
                           LEVEL_SCALES.index(c.level_scale)))
        fh.write(np.ascontiguousarray(encoder.tables, dtype=_F32).tobytes())
        if mlp is not None:
            m = mlp.config
            fh.write(_MLP.pack(b"SXMP", VERSION, m.input_width, m.hidden_width,
                               m.hidden_layers, m.output_width))
            for w, b in zip(mlp.weights, mlp.biases):
                fh.write(np.ascontiguousarray(w, dtype=_F32).tobytes())
                fh.write(np.ascontiguousarray(b, dtype=_F32).tobytes())
    return path


def _take(buf: memoryview, offset: int, count: int, what: str):
    end = offset + count * _F32.itemsize
    if end > len(buf):
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return np.frombuffer(buf[offset:end], dtype=_F32).astype(np.float32), end


def read_header(path) -> EncoderConfig:
    with open(path, "rb") as fh:
        return _parse_header(fh.read(_ENC.size))


def _parse_header(raw: bytes) -> EncoderConfig:
    if len(raw) < _ENC.size:
        raise CheckpointError("file too short for an encoder header")
    magic, version, n, levels, size, feats, base, growth, backend, scale = _ENC.unpack_from(raw)
    if magic != b"SXEN":
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if backend >= len(BACKENDS) or scale >= len(LEVEL_SCALES):
        raise CheckpointError("unknown backend or level-scale tag")
    try:
        return EncoderConfig(n, levels, size, feats, base, growth, BACKENDS[backend], LEVEL_SCALES[scale])
    except ValueError as exc:
        raise CheckpointError(f"invalid header: {exc}") from exc


def load(path) -> tuple[HashEncoder, MLP | None]:
    buf = memoryview(Path(path).read_bytes())
    config = _parse_header(bytes(buf[:_ENC.size]))
    shape = (config.levels, config.table_size, config.features)
    flat, pos = _take(buf, _ENC.size, int(np.prod(shape)), "tables")
    encoder = HashEncoder(config, flat.reshape(shape))
    if pos == len(buf):
        return encoder, None
    if len(buf) - pos < _MLP.size:
        raise CheckpointError("trailing bytes after tables")
    magic, version, fan_in, hidden, layers, fan_out = _MLP.unpack_from(buf, pos)
    if magic != b"SXMP" or version != VERSION:
        raise CheckpointError("bad MLP section header")
    pos += _MLP.size
    mcfg = MlpConfig(fan_in, hidden, layers, fan_out)
    widths = mcfg.widths
    weights, biases = [], []
    for a, b in zip(widths[:-1], widths[1:]):
        w, pos = _take(buf, pos, a * b, "weights")
        bias, pos = _take(buf, pos, b, "biases")
        weights.append(w.reshape(a, b))
        biases.append(bias)
    if pos != len(buf):
        raise CheckpointError("trailing bytes after MLP section")
    return encoder, MLP(mcfg, weights, biases)
