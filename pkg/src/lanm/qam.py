"""Square QAM constellations on the odd-integer lattice.

Points are kept unnormalized (e.g. 4-QAM is {±1±1j}); unit-norm message
vectors are obtained by dividing a symbol tuple by its Euclidean norm.
Because the receiver knows the constellation and the tuple length, the
original scale can be recovered from the finite set of achievable norms.
"""

from __future__ import annotations

from enum import Enum

import numpy as np


class Constellation(Enum):
    QAM4 = "qam4"
    QAM16 = "qam16"
    QAM64 = "qam64"


_SIDE = {Constellation.QAM4: 2, Constellation.QAM16: 4, Constellation.QAM64: 8}

# Quarter-turn rotations map every square QAM constellation onto itself.
ROTATIONS = np.array([1.0, 1j, -1.0, -1j])


def points(constellation: Constellation) -> np.ndarray:
    """All constellation points as a complex vector."""
    side = _SIDE[constellation]
    axis = np.arange(-side + 1, side, 2, dtype=float)
    re, im = np.meshgrid(axis, axis, indexing="ij")
    return (re + 1j * im).ravel()


def draw_symbols(constellation: Constellation, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n i.i.d. uniform constellation points (unnormalized)."""
    pts = points(constellation)
    return pts[rng.integers(0, pts.size, size=n)]


def achievable_sq_norms(constellation: Constellation, n: int) -> np.ndarray:
    """Every value that ||x||^2 can take over length-n constellation tuples.

    Exact integer arithmetic over the multiset of per-symbol squared
    magnitudes, so the list is complete (unlike coarse per-ring heuristics).
    """
    if n < 1:
        raise ValueError("tuple length must be positive")
    mags = sorted({int(round(abs(p) ** 2)) for p in points(constellation)})
    sums = {0}
    for _ in range(n):
        sums = {a + b for a in sums for b in mags}
    return np.array(sorted(sums), dtype=float)


def achievable_norms(constellation: Constellation, n: int) -> np.ndarray:
    return np.sqrt(achievable_sq_norms(constellation, n))


def nearest_points(values: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Snap each entry to the nearest constellation point."""
    pts = points(constellation)
    values = np.asarray(values, dtype=complex)
    dist = np.abs(values[..., None] - pts)
    return pts[np.argmin(dist, axis=-1)]


__all__ = [
    "Constellation",
    "ROTATIONS",
    "points",
    "draw_symbols",
    "achievable_sq_norms",
    "achievable_norms",
    "nearest_points",
]
