"""Compiled per-sample kernels: cell location, hashing, fetch and blend.

Every kernel walks samples sequentially and writes into caller-owned
buffers, so results never depend on scheduling. Scratch space is allocated
once per call, not per sample. Helpers are inlined at the IR level; as real
calls the per-sample array refcounting costs more than the math.
"""

import math

import numpy as np
from numba import njit

# Axis 8 borrows xxhash's second 32-bit prime; the first seven follow the
# usual spatial-hash convention.
PRIMES = np.array(
    [1, 2654435761, 805459861, 3674653429, 2097192037, 1434869437, 2165219737, 2246822519],
    dtype=np.uint64,
)

SIMPLEX = 0
GRID = 1


@njit(inline="always")
def _hash(vert, primes, mask):
    h = np.uint64(0)
    for i in range(vert.shape[0]):
        h ^= np.uint64(vert[i]) * primes[i]
    return np.int64(h & mask)


@njit(inline="always")
def _simplex_cell(xrow, scale, top, skew_f, inv_sn, pos, perm, verts, weights):
    """Fill ``verts[:n+1]`` / ``weights[:n+1]`` for one sample; returns n+1."""
    n = xrow.shape[0]
    total = 0.0
    for i in range(n):
        total += xrow[i]
    shift = skew_f * total
    for i in range(n):
        v = (xrow[i] + shift) * scale * inv_sn
        if v > top:
            v = top
        elif v < 0.0:
            v = 0.0
        b = math.floor(v)
        verts[0, i] = np.int64(b)
        pos[i] = v - b
        perm[i] = i
    # insertion sort, descending, stable on ties
    for i in range(1, n):
        j = i
        while j > 0 and pos[perm[j - 1]] < pos[perm[j]]:
            t = perm[j - 1]
            perm[j - 1] = perm[j]
            perm[j] = t
            j -= 1
    prev = 1.0
    for k in range(n):
        axis = perm[k]
        cur = pos[axis]
        weights[k] = prev - cur
        prev = cur
        for i in range(n):
            verts[k + 1, i] = verts[k, i]
        verts[k + 1, axis] += 1
    weights[n] = prev
    return n + 1


@njit(inline="always")
def _grid_cell(xrow, scale, top, pos, base, verts, weights):
    """Fill the ``2**n`` cell corners with n-linear weights; returns 2**n."""
    n = xrow.shape[0]
    for i in range(n):
        v = xrow[i] * scale
        if v > top:
            v = top
        elif v < 0.0:
            v = 0.0
        b = math.floor(v)
        base[i] = np.int64(b)
        pos[i] = v - b
    count = 1 << n
    for c in range(count):
        w = 1.0
        for i in range(n):
            if (c >> i) & 1:
                verts[c, i] = base[i] + 1
                w *= pos[i]
            else:
                verts[c, i] = base[i]
                w *= 1.0 - pos[i]
        weights[c] = w
    return count


@njit(inline="always")
def _cell(backend, xrow, scale, top, skew_f, inv_sn, pos, perm, base, verts, weights):
    if backend == 0:
        return _simplex_cell(xrow, scale, top, skew_f, inv_sn, pos, perm, verts, weights)
    return _grid_cell(xrow, scale, top, pos, base, verts, weights)


@njit(inline="always")
def _blend(table, verts, weights, k, bound, primes, mask, acc):
    """Fetch and blend ``k`` vertices into ``acc``; returns out-of-bounds count."""
    n = verts.shape[1]
    outside = 0
    for f in range(acc.shape[0]):
        acc[f] = 0.0
    for c in range(k):
        for i in range(n):
            if verts[c, i] < 0 or verts[c, i] > bound:
                outside += 1
                break
        idx = _hash(verts[c], primes, mask)
        w = weights[c]
        for f in range(acc.shape[0]):
            acc[f] += w * table[idx, f]
    return outside


@njit(inline="always")
def _scatter(grad, verts, weights, k, up, col, primes, mask):
    nf = grad.shape[1]
    for c in range(k):
        idx = _hash(verts[c], primes, mask)
        w = weights[c]
        for f in range(nf):
            grad[idx, f] += w * up[col + f]


# The backend is fixed per kernel rather than passed as an argument: a
# runtime branch around the cell helpers roughly doubles the per-lookup cost.

@njit(cache=True, nogil=True)
def simplex_forward(x, scales, bounds, tables, out, counters):
    """Encode ``x`` (B, n) into ``out`` (B, L*F) on the skewed simplex lattice.

    ``counters[0]`` accumulates vertex fetches, ``counters[1]`` fetches whose
    vertex falls outside ``[0, bounds[l]]`` on some axis.
    """
    nb, n = x.shape
    nl, size, nf = tables.shape
    mask = np.uint64(size - 1)
    skew_f = (math.sqrt(n + 1.0) - 1.0) / n
    inv_sn = 1.0 / math.sqrt(n + 1.0)
    pos = np.empty(n)
    perm = np.empty(n, np.int64)
    verts = np.empty((n + 1, n), np.int64)
    weights = np.empty(n + 1)
    acc = np.empty(nf)
    outside = 0
    # level-outer order keeps one level's table hot in cache
    for lvl in range(nl):
        scale = scales[lvl]
        top = np.nextafter(scale, 0.0)
        table = tables[lvl]
        for b in range(nb):
            k = _simplex_cell(x[b], scale, top, skew_f, inv_sn, pos, perm, verts, weights)
            outside += _blend(table, verts, weights, k, bounds[lvl], PRIMES, mask, acc)
            for f in range(nf):
                out[b, lvl * nf + f] = acc[f]
    counters[0] += nb * nl * (n + 1)
    counters[1] += outside


@njit(cache=True, nogil=True)
def grid_forward(x, scales, bounds, tables, out, counters):
    """Grid counterpart of :func:`simplex_forward` with ``2**n`` corners per cell."""
    nb, n = x.shape
    nl, size, nf = tables.shape
    mask = np.uint64(size - 1)
    pos = np.empty(n)
    base = np.empty(n, np.int64)
    verts = np.empty((1 << n, n), np.int64)
    weights = np.empty(1 << n)
    acc = np.empty(nf)
    outside = 0
    for lvl in range(nl):
        scale = scales[lvl]
        top = np.nextafter(scale, 0.0)
        table = tables[lvl]
        for b in range(nb):
            k = _grid_cell(x[b], scale, top, pos, base, verts, weights)
            outside += _blend(table, verts, weights, k, bounds[lvl], PRIMES, mask, acc)
            for f in range(nf):
                out[b, lvl * nf + f] = acc[f]
    counters[0] += nb * nl * (1 << n)
    counters[1] += outside


@njit(cache=True, nogil=True)
def simplex_backward(x, scales, upstream, grads):
    """Scatter ``upstream`` (B, L*F) into ``grads`` (L, T, F) via the blend weights."""
    nb, n = x.shape
    nl, size, nf = grads.shape
    mask = np.uint64(size - 1)
    skew_f = (math.sqrt(n + 1.0) - 1.0) / n
    inv_sn = 1.0 / math.sqrt(n + 1.0)
    pos = np.empty(n)
    perm = np.empty(n, np.int64)
    verts = np.empty((n + 1, n), np.int64)
    weights = np.empty(n + 1)
    for lvl in range(nl):
        scale = scales[lvl]
        top = np.nextafter(scale, 0.0)
        grad = grads[lvl]
        for b in range(nb):
            k = _simplex_cell(x[b], scale, top, skew_f, inv_sn, pos, perm, verts, weights)
            _scatter(grad, verts, weights, k, upstream[b], lvl * nf, PRIMES, mask)


@njit(cache=True, nogil=True)
def grid_backward(x, scales, upstream, grads):
    nb, n = x.shape
    nl, size, nf = grads.shape
    mask = np.uint64(size - 1)
    pos = np.empty(n)
    base = np.empty(n, np.int64)
    verts = np.empty((1 << n, n), np.int64)
    weights = np.empty(1 << n)
    for lvl in range(nl):
        scale = scales[lvl]
        top = np.nextafter(scale, 0.0)
        grad = grads[lvl]
        for b in range(nb):
            k = _grid_cell(x[b], scale, top, pos, base, verts, weights)
            _scatter(grad, verts, weights, k, upstream[b], lvl * nf, PRIMES, mask)


@njit(cache=True, nogil=True)
def lookup_plan(backend, x, scales, size, indices, weights_out, coords_out):
    """Record hash indices, weights and vertex coordinates of every lookup.

    Shapes: indices/weights (B, L, K), coords (B, L, K, n).
    """
    nb, n = x.shape
    nl = scales.shape[0]
    mask = np.uint64(size - 1)
    primes = PRIMES
    skew_f = (math.sqrt(n + 1.0) - 1.0) / n
    inv_sn = 1.0 / math.sqrt(n + 1.0)
    kmax = n + 1 if backend == 0 else 1 << n
    pos = np.empty(n)
    base = np.empty(n, np.int64)
    perm = np.empty(n, np.int64)
    verts = np.empty((kmax, n), np.int64)
    weights = np.empty(kmax)
    for b in range(nb):
        xrow = x[b]
        for lvl in range(nl):
            scale = scales[lvl]
            k = _cell(backend, xrow, scale, np.nextafter(scale, 0.0), skew_f, inv_sn,
                      pos, perm, base, verts, weights)
            for c in range(k):
                indices[b, lvl, c] = _hash(verts[c], primes, mask)
                weights_out[b, lvl, c] = weights[c]
                for i in range(n):
                    coords_out[b, lvl, c, i] = verts[c, i]


@njit(cache=True, nogil=True)
def mark_simplex_vertices(x, scale, side, bitmap):
    """Set one bit per distinct vertex touched, vertices indexed in base ``side``.

    Returns the number of vertices that fell outside ``[0, side)``.
    """
    nb, n = x.shape
    skew_f = (math.sqrt(n + 1.0) - 1.0) / n
    inv_sn = 1.0 / math.sqrt(n + 1.0)
    top = np.nextafter(scale, 0.0)
    pos = np.empty(n)
    perm = np.empty(n, np.int64)
    verts = np.empty((n + 1, n), np.int64)
    weights = np.empty(n + 1)
    outside = 0
    for b in range(nb):
        k = _simplex_cell(x[b], scale, top, skew_f, inv_sn, pos, perm, verts, weights)
        for c in range(k):
            flat = np.int64(0)
            ok = True
            for i in range(n - 1, -1, -1):
                v = verts[c, i]
                if v < 0 or v >= side:
                    ok = False
                    break
                flat = flat * side + v
            if not ok:
                outside += 1
                continue
            bitmap[flat >> 6] |= np.uint64(1) << np.uint64(flat & 63)
    return outside


@njit(cache=True, nogil=True)
def hash_coords(coords, size):
    """Hash an (m, n) array of integer coordinates into ``[0, size)``."""
    m = coords.shape[0]
    out = np.empty(m, np.int64)
    mask = np.uint64(size - 1)
    primes = PRIMES
    for r in range(m):
        out[r] = _hash(coords[r], primes, mask)
    return out


@njit(cache=True, nogil=True)
def adam_update(p, g, m, v, lr, beta1, beta2, eps, c1, c2):
    """Fused Adam update over flat views of one parameter array."""
    for i in range(p.shape[0]):
        gi = g[i]
        mi = beta1 * m[i] + (1.0 - beta1) * gi
        vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= lr * (mi / c1) / (math.sqrt(vi / c2) + eps)


@njit(cache=True, nogil=True)
def simplex_repeat(x, scales, bounds, tables, out, counters, reps):
    for _ in range(reps):
        simplex_forward(x, scales, bounds, tables, out, counters)


@njit(cache=True, nogil=True)
def grid_repeat(x, scales, bounds, tables, out, counters, reps):
    for _ in range(reps):
        grid_forward(x, scales, bounds, tables, out, counters)
