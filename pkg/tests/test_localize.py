"""Dual-polynomial grid evaluation and peak-picking tests."""

import numpy as np
import pytest

from lanm.localize import (
    DualPolynomial,
    JammerPolynomial,
    TargetEstimate,
    default_grid,
    eval_grid,
    extract_jammer_peaks,
    extract_peaks,
    jammer_polynomial,
)
from lanm.model import (
    MeasurementOperator,
    OperatorFlavor,
    SceneConfig,
    adjoint,
    make_atom,
    make_coding,
)

from _oracles import polynomial_direct

SCENE = SceneConfig(n_tx=2, n_rx=2, half_len=2, subspace_dim=3, n_targets=1)


def make_op(seed=0, flavor=OperatorFlavor.PER_ANTENNA_CODED, scene=SCENE):
    rng = np.random.default_rng(seed)
    return MeasurementOperator(scene, make_coding(scene, rng, flavor), flavor)


def random_q(op, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(op.scene.n_meas) + 1j * rng.standard_normal(op.scene.n_meas)
    return scale * q


class TestDualPolynomial:
    def test_matches_direct_adjoint_product(self):
        op = make_op(3)
        poly = DualPolynomial(random_q(op, 7), op)
        xs = np.random.default_rng(1).random((20, 4))
        g = adjoint(op, poly.q)
        for x in xs:
            direct = np.linalg.norm(g @ make_atom(x, SCENE).vector)
            assert poly.norm_at(x) == pytest.approx(direct, abs=1e-10)

    def test_zero_q(self):
        op = make_op()
        poly = DualPolynomial(np.zeros(10, dtype=complex), op)
        grid = eval_grid(poly, (8, 8, 8, 8))
        assert np.all(grid == 0.0)

    def test_grid_matches_pointwise(self):
        op = make_op(5)
        poly = DualPolynomial(random_q(op, 11), op)
        res = (9, 8, 6, 7)
        grid = eval_grid(poly, res)
        rng = np.random.default_rng(2)
        for _ in range(10):
            ijkl = tuple(rng.integers(0, r) for r in res)
            point = [i / r for i, r in zip(ijkl, res)]
            assert grid[ijkl] == pytest.approx(poly.norm_at(point), abs=1e-9)

    def test_grid_matches_coefficient_contraction(self):
        op = make_op(9)
        poly = DualPolynomial(random_q(op, 13), op)
        res = (6, 6, 5, 5)
        grid = eval_grid(poly, res)
        pts = np.array(
            [[i / 6, j / 6, k / 5, l / 5] for i in range(6) for j in range(6)
             for k in range(5) for l in range(5)]
        )
        direct = polynomial_direct(
            np.transpose(poly.coef, (0, 4, 3, 1, 2)), SCENE, pts
        )
        assert np.allclose(grid.ravel(), direct, atol=1e-9)

    def test_res_too_small_rejected(self):
        op = make_op()
        poly = DualPolynomial(random_q(op), op)
        with pytest.raises(ValueError):
            eval_grid(poly, (4, 8, 8, 8))

    def test_homogeneous_in_q(self):
        op = make_op(2)
        q = random_q(op, 3)
        g1 = eval_grid(DualPolynomial(q, op), (8, 8, 4, 6))
        g2 = eval_grid(DualPolynomial(2.0 * q, op), (8, 8, 4, 6))
        assert np.allclose(g2, 2.0 * g1, atol=1e-12)

    def test_default_grid_sizes(self):
        assert default_grid(SCENE) == (64, 64, 64, 64)


class TestExtractPeaks:
    def test_all_below_threshold_empty(self):
        op = make_op()
        poly = DualPolynomial(random_q(op, 1, scale=1e-6), op)
        grid = eval_grid(poly, (8, 8, 8, 8))
        assert extract_peaks(poly, grid, threshold=0.5) == []

    def test_broad_lobe_merges(self):
        grid = np.zeros((16, 1, 1, 1))
        grid[7, 0, 0, 0] = 1.0
        grid[8, 0, 0, 0] = 1.0  # plateau neighbor
        peaks = extract_peaks(None, grid, threshold=0.9, min_sep=0.2, refine=False)
        assert len(peaks) == 1

    def test_min_sep_validation(self):
        grid = np.ones((8, 8, 8, 8))
        with pytest.raises(ValueError):
            extract_peaks(None, grid, threshold=0.5, min_sep=0.01, refine=False)
        with pytest.raises(ValueError):
            extract_peaks(None, grid, threshold=1.5, refine=False)

    def test_synthetic_peak_refinement(self):
        # Build q whose polynomial has a clear single ridge: q = measurements
        # of a one-target instance, then normalize the polynomial peak to ~1.
        op = make_op(21)
        truth = (0.31, 0.62, 0.0, 0.0)
        atom = make_atom(truth, SCENE).vector
        from lanm.model import forward

        u = np.outer(np.ones(3) / np.sqrt(3.0), np.conj(atom))
        q = np.conj(forward(op, u))
        poly = DualPolynomial(q, op)
        grid = eval_grid(poly, (32, 32, 8, 8))
        top = np.unravel_index(np.argmax(grid), grid.shape)
        scale = 1.0 / grid[top]
        poly2 = DualPolynomial(scale * q, op)
        grid2 = eval_grid(poly2, (32, 32, 8, 8))
        peaks = extract_peaks(poly2, grid2, threshold=0.8, min_sep=0.2)
        assert len(peaks) >= 1
        assert peaks[0].peak_value >= grid2[top] - 1e-9


class TestJammerPolynomial:
    def test_zero_q(self):
        poly = jammer_polynomial(np.zeros(SCENE.n_meas, dtype=complex), SCENE)
        assert np.all(poly.grid(64) == 0.0)
        assert poly(0.37) == 0.0

    def test_single_steering_vector_peak(self):
        scene = SceneConfig(n_tx=2, n_rx=4, half_len=2, subspace_dim=2, n_targets=1)
        rng = np.random.default_rng(4)
        u = rng.standard_normal(scene.sig_len) + 1j * rng.standard_normal(scene.sig_len)
        psi0 = 0.3
        rows = np.conj(np.outer(np.exp(-2j * np.pi * psi0 * np.arange(scene.n_rx)), u))
        q = rows.ravel()
        poly = JammerPolynomial(q, scene)
        res = 512
        vals = poly.grid(res)
        assert np.argmax(vals) == pytest.approx(psi0 * res, abs=1.0)
        peak = poly(psi0)
        assert peak == pytest.approx(scene.n_rx * np.linalg.norm(u), rel=1e-12)
        found = extract_jammer_peaks(q, scene, level=peak, res=res)
        assert len(found) == 1
        assert min(abs(found[0][0] - psi0), 1 - abs(found[0][0] - psi0)) < 1e-3

    def test_grid_matches_callable(self):
        rng = np.random.default_rng(8)
        q = rng.standard_normal(SCENE.n_meas) + 1j * rng.standard_normal(SCENE.n_meas)
        poly = JammerPolynomial(q, SCENE)
        vals = poly.grid(32)
        pts = np.arange(32) / 32
        assert np.allclose(vals, [poly(p) for p in pts], atol=1e-12)
