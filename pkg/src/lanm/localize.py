"""Dual-polynomial evaluation and parameter extraction.

The solved dual vector q defines the vector trigonometric polynomial
f(x) = X*(q) a(x) over the 4-torus; targets sit where ||f||_2 reaches 1.
Evaluation goes through the coefficient tensor of f so that grids are
computed by zero-padded FFTs (exact polynomial evaluation, not
interpolation).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .model import MeasurementOperator, adjoint_coef, wrap_distance

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class DualPolynomial:
    """f(x) = X*(q) a(x), cached as a trig-coefficient tensor.

    ``coef`` has shape (T, Lbar, Lbar, n_tx, n_rx): delay and Doppler
    frequency axes run over signed indices {-N..N}, the transmit axis over
    exponents {0..n_tx-1} of exp(2j pi aod), and the receive axis over
    exponents {0..n_rx-1} of exp(2j pi n_tx aoa).
    """

    def __init__(self, q: np.ndarray, op: MeasurementOperator) -> None:
        self.q = np.asarray(q, dtype=complex)
        self.op = op
        scene = op.scene
        tens = adjoint_coef(op, self.q).reshape((scene.subspace_dim,) + scene.atom_shape)
        # (t, r, s, n_l, n_m) -> (t, n_l, n_m, s, r)
        self.coef = np.ascontiguousarray(np.transpose(tens, (0, 3, 4, 2, 1)))

    @property
    def scene(self):
        return self.op.scene

    def degrees(self) -> tuple:
        """Native one-sided degree per dimension (tau, dopp, aod, aoa)."""
        scene = self.scene
        return (
            scene.half_len,
            scene.half_len,
            scene.n_tx - 1,
            (scene.n_rx - 1) * scene.n_tx,
        )

    def _phase_vectors(self, point: Sequence[float]) -> tuple:
        scene = self.scene
        tau, dopp, aod, aoa = point
        nidx = scene.signed_indices()
        return (
            np.exp(-2j * np.pi * tau * nidx),
            np.exp(-2j * np.pi * dopp * nidx),
            np.exp(2j * np.pi * aod * np.arange(scene.n_tx)),
            np.exp(2j * np.pi * aoa * scene.n_tx * np.arange(scene.n_rx)),
        )

    def vector_at(self, point: Sequence[float]) -> np.ndarray:
        """f(point) in C^T by direct contraction."""
        e_l, e_m, e_s, e_r = self._phase_vectors(point)
        return np.einsum("tlmsr,l,m,s,r->t", self.coef, e_l, e_m, e_s, e_r)

    def norm_at(self, point: Sequence[float]) -> float:
        return float(np.linalg.norm(self.vector_at(point)))

    def norms_at(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.array([self.norm_at(p) for p in points])


def _axis_fft(coef: np.ndarray, axis: int, res: int, freqs: np.ndarray, sign: int) -> np.ndarray:
    """Evaluate one axis on a uniform grid of size res via zero-padded FFT.

    sign=-1 evaluates sum_n c_n exp(-2j pi n j / res) (delay/Doppler axes),
    sign=+1 the positive-exponent convention (angular axes).
    """
    shape = list(coef.shape)
    shape[axis] = res
    padded = np.zeros(shape, dtype=complex)
    idx = [slice(None)] * coef.ndim
    src = [slice(None)] * coef.ndim
    for pos, n in enumerate(freqs):
        idx[axis] = int(n % res)
        src[axis] = pos
        padded[tuple(idx)] += coef[tuple(src)]
    if sign < 0:
        return np.fft.fft(padded, axis=axis)
    return np.fft.ifft(padded, axis=axis) * res


def eval_grid(
    poly: DualPolynomial,
    res: Sequence[int],
    slab: int = 8,
) -> np.ndarray:
    """||f||_2 on the uniform grid {j/res_d} of shape res.

    Each res_d must be at least 2*degree_d + 1 so the FFT evaluates the
    polynomial exactly. The receive-angle axis is processed in slabs to
    bound peak memory.
    """
    res = tuple(int(r) for r in res)
    if len(res) != 4:
        raise ValueError("res must give four grid sizes")
    degs = poly.degrees()
    for r, d in zip(res, degs):
        if r < 2 * d + 1:
            raise ValueError(f"grid size {r} too small for exact evaluation (need {2*d+1})")
    scene = poly.scene
    nidx = scene.signed_indices()
    work = poly.coef  # (t, l, m, s, r)
    work = _axis_fft(work, 1, res[0], nidx, sign=-1)
    work = _axis_fft(work, 2, res[1], nidx, sign=-1)
    work = _axis_fft(work, 3, res[2], np.arange(scene.n_tx), sign=+1)
    out = np.empty(res, dtype=float)
    r_freqs = scene.n_tx * np.arange(scene.n_rx)
    grid_phi = np.arange(res[3]) / res[3]
    for start in range(0, res[3], slab):
        stop = min(start + slab, res[3])
        phase = np.exp(2j * np.pi * np.outer(r_freqs, grid_phi[start:stop]))
        vals = np.tensordot(work, phase, axes=([4], [0]))  # (t, g1, g2, g3, chunk)
        out[..., start:stop] = np.sqrt(np.sum(np.abs(vals) ** 2, axis=0))
    return out


@dataclass(frozen=True)
class TargetEstimate:
    """One localized target candidate."""

    coords: tuple
    peak_value: float

    @property
    def coords_array(self) -> np.ndarray:
        return np.array(self.coords)


def _grid_local_maxima(grid: np.ndarray, threshold: float) -> np.ndarray:
    """Indices of points >= threshold that dominate their axis neighbors (wrapped)."""
    mask = grid >= threshold
    for axis in range(grid.ndim):
        if grid.shape[axis] == 1:
            continue
        fwd = np.roll(grid, -1, axis=axis)
        bwd = np.roll(grid, 1, axis=axis)
        mask &= (grid >= fwd) & (grid >= bwd)
    return np.argwhere(mask)


def _golden_ascent(f: Callable[[float], float], lo: float, hi: float, iters: int = 40) -> float:
    """Golden-section maximization of a unimodal-ish 1-D slice."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def refine_peak(
    poly: DualPolynomial, coords: np.ndarray, cell: np.ndarray, sweeps: int = 3
) -> np.ndarray:
    """Coordinate-wise golden-section ascent of ||f||^2 within one grid cell."""
    x = np.array(coords, dtype=float)

    def val(point):
        v = poly.vector_at(point)
        return float(np.real(np.vdot(v, v)))

    for _ in range(sweeps):
        for d in range(4):
            lo, hi = x[d] - cell[d], x[d] + cell[d]

            def slice_fun(t, d=d):
                p = x.copy()
                p[d] = t
                return val(p)

            x[d] = _golden_ascent(slice_fun, lo, hi) % 1.0
    return x


def extract_peaks(
    poly: Optional[DualPolynomial],
    grid: np.ndarray,
    threshold: float = 0.99,
    min_sep: Optional[float] = None,
    refine: bool = True,
) -> list:
    """Thresholded local maxima of the grid, merged and refined.

    The number of accepted peaks is the model-order estimate; nothing here
    assumes the true target count. Peaks within ``min_sep`` (wrap-around,
    max-coordinate) collapse onto the largest one.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    res = np.array(grid.shape, dtype=float)
    cell = 1.0 / res
    # Singleton axes are degenerate and do not constrain the merge radius.
    live = cell[res > 1]
    cell_floor = float(live.max()) if live.size else 0.0
    if min_sep is None:
        min_sep = 2.0 * cell_floor
    if min_sep < cell_floor:
        raise ValueError("min_sep must be at least one grid cell")
    cand_idx = _grid_local_maxima(grid, threshold)
    if cand_idx.size == 0:
        return []
    values = grid[tuple(cand_idx.T)]
    order = np.argsort(values)[::-1]
    kept: list = []
    for i in order:
        coords = cand_idx[i] / res
        if all(
            np.max(wrap_distance(coords, k)) >= min_sep for k, _ in kept
        ):
            kept.append((coords, values[i]))
    estimates = []
    for coords, value in kept:
        if refine:
            coords = refine_peak(poly, coords, cell)
            value = poly.norm_at(coords)
        estimates.append(TargetEstimate(tuple(float(c) % 1.0 for c in coords), float(value)))
    estimates.sort(key=lambda e: -e.peak_value)
    return estimates


def localize_targets(
    q: np.ndarray,
    op: MeasurementOperator,
    res: Optional[Sequence[int]] = None,
    threshold: float = 0.99,
    min_sep: Optional[float] = None,
) -> list:
    """One-call pipeline: build f, evaluate a default grid, extract peaks."""
    poly = DualPolynomial(q, op)
    if res is None:
        res = default_grid(op.scene)
    grid = eval_grid(poly, res)
    return extract_peaks(poly, grid, threshold=threshold, min_sep=min_sep)


def default_grid(scene) -> tuple:
    """64 points per delay/Doppler axis, at least 8 per virtual antenna in angle."""
    ang = max(64, 8 * scene.n_tx * scene.n_rx)
    return (64, 64, ang, ang)


class JammerPolynomial:
    """psi -> || reshape(q)^H a_rx(psi) ||_2 for jammer localization.

    q reshapes antenna-major into rows indexed by receive antenna; the
    polynomial's coefficient vectors are the conjugated rows.
    """

    def __init__(self, q: np.ndarray, scene) -> None:
        q = np.asarray(q, dtype=complex)
        if q.shape != (scene.n_meas,):
            raise ValueError(f"q must have length {scene.n_meas}")
        self.scene = scene
        self.rows = q.reshape(scene.n_rx, scene.sig_len)

    def __call__(self, psi) -> np.ndarray:
        psi = np.asarray(psi, dtype=float)
        steer = np.exp(2j * np.pi * np.outer(psi.ravel(), np.arange(self.scene.n_rx)))
        vals = steer @ np.conj(self.rows)
        out = np.linalg.norm(vals, axis=-1)
        return out.reshape(psi.shape) if psi.ndim else float(out[0])

    def grid(self, res: int = 512) -> np.ndarray:
        """Values on {j/res} via one zero-padded FFT."""
        if res < 2 * self.scene.n_rx - 1:
            raise ValueError("resolution too small for exact evaluation")
        padded = np.zeros((res, self.scene.sig_len), dtype=complex)
        padded[: self.scene.n_rx] = np.conj(self.rows)
        vals = np.fft.ifft(padded, axis=0) * res
        return np.linalg.norm(vals, axis=1)


def jammer_polynomial(q: np.ndarray, scene) -> JammerPolynomial:
    return JammerPolynomial(q, scene)


def extract_jammer_peaks(
    q: np.ndarray,
    scene,
    level: float,
    eps_peak: float = 1e-2,
    res: int = 512,
) -> list:
    """Spatial frequencies where the jammer polynomial reaches ``level``.

    Returns (psi, value) pairs for local maxima whose value is within
    ``eps_peak`` of ``level``, refined by golden-section ascent.
    """
    poly = JammerPolynomial(q, scene)
    vals = poly.grid(res)
    peaks = []
    for i in range(res):
        left, right = vals[(i - 1) % res], vals[(i + 1) % res]
        if vals[i] >= left and vals[i] >= right and vals[i] >= level * (1.0 - eps_peak):
            psi = _golden_ascent(
                lambda t: poly(t % 1.0), (i - 1) / res, (i + 1) / res
            ) % 1.0
            peaks.append((float(psi), float(poly(psi))))
    # Merge plateau duplicates within one cell.
    merged: list = []
    for psi, val in sorted(peaks, key=lambda p: -p[1]):
        if all(min(abs(psi - m), 1 - abs(psi - m)) > 1.5 / res for m, _ in merged):
            merged.append((psi, val))
    return merged
