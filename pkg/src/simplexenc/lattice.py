"""Coordinate math for the skewed simplicial lattice.

Points live either in the original Cartesian frame or in the skewed frame
where the unit hypercube is split into ``n!`` simplices by ordering its
coordinates. Permutations are 0-based: ``perm[0]`` is the axis of the
largest fractional coordinate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

MAX_DIMENSION = 8


@dataclass(frozen=True)
class SkewConstants:
    n: int
    skew: float
    unskew: float
    scale: float

    @classmethod
    def for_dimension(cls, n: int) -> "SkewConstants":
        if n < 1:
            raise ValueError(f"dimension must be >= 1, got {n}")
        root = math.sqrt(n + 1)
        return cls(n=n, skew=(root - 1.0) / n, unskew=(1.0 - 1.0 / root) / n, scale=root)


def skew_factor(n: int) -> float:
    return SkewConstants.for_dimension(n).skew


def unskew_factor(n: int) -> float:
    return SkewConstants.for_dimension(n).unskew


def scale_adjustment(n: int) -> float:
    """Shrink factor that keeps skewed samples of the unit cube in the lattice."""
    return SkewConstants.for_dimension(n).scale


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ValueError("points must have dimension >= 1")
    return x


def skew(x) -> np.ndarray:
    """Map points (shape ``(..., n)``) from Cartesian to skewed coordinates."""
    x = _as_points(x)
    f = skew_factor(x.shape[-1])
    return x + f * x.sum(axis=-1, keepdims=True)


def unskew(xs) -> np.ndarray:
    """Inverse of :func:`skew`."""
    xs = _as_points(xs)
    g = unskew_factor(xs.shape[-1])
    return xs - g * xs.sum(axis=-1, keepdims=True)


def skew_matrix(n: int) -> np.ndarray:
    return np.eye(n) + skew_factor(n) * np.ones((n, n))


def sort_descending(fracs) -> list[int]:
    """Stable insertion sort returning axis indices ordered by descending value."""
    perm = list(range(len(fracs)))
    for i in range(1, len(perm)):
        j = i
        # strict comparison keeps equal entries in ascending index order
        while j > 0 and fracs[perm[j - 1]] < fracs[perm[j]]:
            perm[j - 1], perm[j] = perm[j], perm[j - 1]
            j -= 1
    return perm


def simplex_vertices(perm) -> np.ndarray:
    """Vertices of the unit-cube simplex selected by ``perm``, shape ``(n+1, n)``.

    Starts at the origin and sets axis ``perm[0]``, then ``perm[1]``, ... to one.
    """
    n = len(perm)
    verts = np.zeros((n + 1, n), dtype=np.int64)
    for i, axis in enumerate(perm):
        verts[i + 1] = verts[i]
        verts[i + 1, axis] = 1
    return verts


def subdivide(fracs) -> tuple[tuple[int, ...], np.ndarray]:
    """Locate the simplex holding a point of the unit cube.

    Returns the descending-order permutation and the ``n+1`` integer vertices
    relative to the cell origin.
    """
    fracs = np.asarray(fracs, dtype=np.float64)
    if fracs.ndim != 1 or fracs.size == 0:
        raise ValueError("fractional coordinates must be a non-empty vector")
    if not np.all((fracs >= 0.0) & (fracs < 1.0)):
        raise ValueError(f"fractional coordinates must lie in [0, 1): {fracs}")
    perm = tuple(sort_descending(fracs))
    return perm, simplex_vertices(perm)


def barycentric_weights(sorted_fracs) -> np.ndarray:
    """Closed-form barycentric weights for descending fractional coordinates."""
    s = np.asarray(sorted_fracs, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("expected a non-empty vector")
    if np.any(np.diff(s) > 0.0):
        raise ValueError(f"coordinates must be sorted in descending order: {s}")
    w = np.empty(s.size + 1)
    w[0] = 1.0 - s[0]
    w[1:-1] = s[:-1] - s[1:]
    w[-1] = s[-1]
    return w


def locate(x_skewed) -> tuple[np.ndarray, tuple[int, ...], np.ndarray, np.ndarray]:
    """Base cell, permutation, absolute vertices and weights for one skewed point."""
    xs = np.asarray(x_skewed, dtype=np.float64)
    base = np.floor(xs)
    fracs = xs - base
    perm, rel = subdivide(fracs)
    weights = barycentric_weights(fracs[list(perm)])
    return base.astype(np.int64), perm, base.astype(np.int64) + rel, weights


def simplex_contains(perm, points) -> np.ndarray | bool:
    """True where ``1 >= x[perm[0]] >= ... >= x[perm[-1]] >= 0``.

    ``points`` may be a single point or an array of shape ``(..., n)``.
    """
    pts = np.asarray(points, dtype=np.float64)
    ordered = pts[..., list(perm)]
    inside = (ordered[..., 0] <= 1.0) & (ordered[..., -1] >= 0.0)
    inside &= np.all(ordered[..., :-1] >= ordered[..., 1:], axis=-1)
    if inside.ndim == 0:
        return bool(inside)
    return inside


def all_permutations(n: int):
    return itertools.permutations(range(n))


def pairwise_edge_lengths(vertices) -> np.ndarray:
    """Sorted lengths of all ``n(n+1)/2`` edges between the given vertices."""
    v = np.asarray(vertices, dtype=np.float64)
    i, j = np.triu_indices(len(v), k=1)
    return np.sort(np.linalg.norm(v[i] - v[j], axis=1))


def edge_length_multiset(n: int, skewed: bool = False) -> np.ndarray:
    """Sorted edge lengths of one cell simplex, from the closed-form distances.

    With ``skewed=True`` the simplex is taken from the skewed lattice and
    measured after mapping back to Cartesian space.
    """
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    g = unskew_factor(n)
    lengths = []
    for k in range(1, n + 1):
        if skewed:
            d = math.sqrt(k * (1.0 - k * g) ** 2 + (n - k) * (k * g) ** 2)
        else:
            d = math.sqrt(k)
        lengths.extend([d] * (n + 1 - k))
    return np.sort(np.array(lengths))
