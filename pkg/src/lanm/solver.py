"""Semidefinite relaxations of the dual estimation problems and a
first-order operator-splitting solver for them.

The dual problem maximizes <q, y>_R subject to the dual atomic norm of
X*(q) being at most 1 (plus, in the robust variant, a noise penalty and a
jammer dual-norm cap). The infinite-dimensional sup constraint is encoded
by linear matrix inequalities:

* a block [[Q, H^H], [H, I_T]] >= 0 where H is the trig-coefficient tensor
  of the dual polynomial f = X*(q) a(.), flattened (T, M), and
* generalized Toeplitz trace constraints fixing every 4-D diagonal sum of
  Q to the delta pattern, which force a(x)^H Q a(x) = 1 identically.

Note the basis: H must be the coefficient-side arrangement of X*(q) (the
delay/Doppler axes pass through the small per-axis DFT of
``model.coefficient_dft``). The raw tap-basis X*(q) would not make the
Schur complement bound the polynomial's sup-norm.

The solver is a two-block consensus ADMM over z (affine-feasible copy)
and w (cone-feasible copy): the z-update projects onto {Az = b} through a
cached Cholesky factor of A A^T, the w-update projects blockwise onto
free space, second-order cones, and Hermitian PSD cones (native complex
eigendecomposition, no real embedding). Deterministic for fixed inputs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .localize import DualPolynomial, eval_grid
from .model import MeasurementOperator

# ---------------------------------------------------------------------------
# Hermitian vectorization
# ---------------------------------------------------------------------------


def _upper_index(i: int, j: int, n: int) -> int:
    """Position of (i, j), i<j, in numpy's triu_indices(n, 1) ordering."""
    return i * (n - 1) - (i * (i - 1)) // 2 + (j - i - 1)


def hvec(s: np.ndarray) -> np.ndarray:
    """Isometric real vectorization of a Hermitian matrix.

    Layout: n real diagonal entries, then sqrt(2)*Re and sqrt(2)*Im of the
    strict upper triangle interleaved, row-major. Preserves Frobenius
    inner products.
    """
    n = s.shape[0]
    iu = np.triu_indices(n, 1)
    out = np.empty(n * n)
    out[:n] = s.diagonal().real
    upper = s[iu] * np.sqrt(2.0)
    out[n::2] = upper.real
    out[n + 1 :: 2] = upper.imag
    return out


def unhvec(x: np.ndarray, n: int) -> np.ndarray:
    s = np.zeros((n, n), dtype=complex)
    iu = np.triu_indices(n, 1)
    upper = (x[n::2] + 1j * x[n + 1 :: 2]) / np.sqrt(2.0)
    s[iu] = upper
    s += s.conj().T
    s[np.diag_indices(n)] = x[:n]
    return s


def project_hermitian_psd(s: np.ndarray) -> np.ndarray:
    """Nearest (Frobenius) Hermitian PSD matrix: clip negative eigenvalues."""
    s = 0.5 * (s + s.conj().T)
    vals, vecs = scipy.linalg.eigh(s, check_finite=False)
    pos = vals > 0
    if not np.any(pos):
        return np.zeros_like(s)
    v = vecs[:, pos]
    return (v * vals[pos]) @ v.conj().T


def project_soc(x: np.ndarray) -> np.ndarray:
    """Projection onto {(t, v): ||v||_2 <= t}."""
    t, v = x[0], x[1:]
    nv = np.linalg.norm(v)
    if nv <= t:
        return x
    if nv <= -t:
        return np.zeros_like(x)
    alpha = 0.5 * (t + nv)
    out = np.empty_like(x)
    out[0] = alpha
    out[1:] = v * (alpha / nv)
    return out


# ---------------------------------------------------------------------------
# Problem containers
# ---------------------------------------------------------------------------


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    MAX_ITERS = "max_iters"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class ConeBlock:
    """One cone factor of the variable vector.

    kind 'free' or 'soc' with ``size`` coordinates, or 'psd' where ``size``
    is the Hermitian matrix dimension (size**2 real coordinates).
    """

    kind: str
    size: int

    @property
    def n_coords(self) -> int:
        return self.size * self.size if self.kind == "psd" else self.size


@dataclass
class SdpProblem:
    """Standard-form conic program: maximize objective . z, A z = b, z in K."""

    objective: np.ndarray
    a_matrix: sp.csr_matrix
    b: np.ndarray
    blocks: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = sum(blk.n_coords for blk in self.blocks)
        if self.a_matrix.shape != (self.b.size, n) or self.objective.size != n:
            raise ValueError("inconsistent problem dimensions")
        for blk in self.blocks:
            if blk.size <= 0:
                raise ValueError("cone block sizes must be positive")

    @property
    def psd_blocks(self) -> list:
        return [blk.size for blk in self.blocks if blk.kind == "psd"]

    @property
    def equality_constraints(self) -> tuple:
        return self.a_matrix, self.b

    @property
    def n_vars(self) -> int:
        return self.a_matrix.shape[1]


@dataclass
class SdpSolution:
    q: Optional[np.ndarray]
    big_q: Optional[np.ndarray]
    status: SolveStatus
    primal_residual: float
    dual_residual: float
    objective_value: float
    iterations: int
    extras: dict = field(default_factory=dict)

    @property
    def Q(self) -> Optional[np.ndarray]:  # noqa: N802 - conventional alias
        return self.big_q


# ---------------------------------------------------------------------------
# Constraint assembly helpers
# ---------------------------------------------------------------------------


class _RowBag:
    """Collects sparse real rows, two per complex constraint."""

    def __init__(self) -> None:
        self.rows: list = []
        self.cols: list = []
        self.vals: list = []
        self.rhs: list = []
        self.m = 0

    def add_real_row(self, cols, vals, rhs: float) -> None:
        self.rows.extend([self.m] * len(cols))
        self.cols.extend(cols)
        self.vals.extend(vals)
        self.rhs.append(rhs)
        self.m += 1

    def add_complex_row(self, cols, cvals, rhs: complex) -> None:
        cvals = np.asarray(cvals)
        self.add_real_row(cols, cvals.real, rhs.real)
        self.add_real_row(cols, cvals.imag, rhs.imag)

    def build(self, n: int) -> tuple:
        a = sp.coo_matrix(
            (self.vals, (self.rows, self.cols)), shape=(self.m, n)
        ).tocsr()
        return a, np.array(self.rhs, dtype=float)


class _HermBlockCoords:
    """hvec coordinate arithmetic for one PSD block at a given offset."""

    def __init__(self, offset: int, n: int) -> None:
        self.offset = offset
        self.n = n

    def entry(self, i: int, j: int):
        """(cols, complex coefficients) with S_ij = sum coeff * z[col]."""
        if i == j:
            return [self.offset + i], np.array([1.0 + 0.0j])
        a, b = (i, j) if i < j else (j, i)
        u = self.offset + self.n + 2 * _upper_index(a, b, self.n)
        inv = 1.0 / np.sqrt(2.0)
        if i < j:
            return [u, u + 1], np.array([inv, 1j * inv])
        return [u, u + 1], np.array([inv, -1j * inv])


def _canonical_offset(diff: tuple) -> bool:
    for d in diff:
        if d > 0:
            return True
        if d < 0:
            return False
    return True  # all zero


def _add_toeplitz_trace_rows(bag: _RowBag, herm: _HermBlockCoords, axes_shape: tuple) -> int:
    """Fix every generalized-diagonal sum of the block's leading principal
    submatrix (the Q part) to the delta pattern. Returns the number of
    distinct offsets (= number of real rows emitted).
    """
    dim = int(np.prod(axes_shape))
    coords = np.array(np.unravel_index(np.arange(dim), axes_shape)).T
    groups: dict = {}
    for c1 in range(dim):
        for c2 in range(dim):
            diff = tuple(int(d) for d in coords[c1] - coords[c2])
            if not _canonical_offset(diff):
                continue
            groups.setdefault(diff, []).append((c1, c2))
    for diff, pairs in sorted(groups.items()):
        cols: list = []
        cvals: list = []
        for c1, c2 in pairs:
            cc, vv = herm.entry(c1, c2)
            cols.extend(cc)
            cvals.extend(vv)
        if diff == (0,) * len(axes_shape):
            bag.add_real_row(cols, np.asarray(cvals).real, 1.0)
        else:
            bag.add_complex_row(cols, cvals, 0.0)
    n_offsets = int(np.prod([2 * (s - 1) + 1 for s in axes_shape]))
    return n_offsets


def _add_identity_rows(bag: _RowBag, herm: _HermBlockCoords, start: int, size: int, scale: float) -> None:
    """Pin the trailing size x size block to scale * I."""
    for t in range(size):
        cols, vals = herm.entry(start + t, start + t)
        bag.add_real_row(cols, np.asarray(vals).real, scale)
    for t1 in range(size):
        for t2 in range(t1 + 1, size):
            cols, vals = herm.entry(start + t1, start + t2)
            bag.add_complex_row(cols, vals, 0.0)


def _add_coupling_rows(
    bag: _RowBag,
    herm: _HermBlockCoords,
    tensors: np.ndarray,
    q_offset: int,
    n_meas: int,
) -> None:
    """Tie the block's lower-left T x M corner to sum_j q_j tensors[j].

    tensors has shape (L, T, M); the constraint per (t, c) reads
    S[c, M + t] = conj(sum_j q_j tensors[j, t, c]).
    """
    _, t_dim, m_dim = tensors.shape
    inv = 1.0 / np.sqrt(2.0)
    qre = q_offset
    qim = q_offset + n_meas
    jcols_re = list(range(qre, qre + n_meas))
    jcols_im = list(range(qim, qim + n_meas))
    for t in range(t_dim):
        for c in range(m_dim):
            w = tensors[:, t, c]
            u = herm.offset + herm.n + 2 * _upper_index(c, m_dim + t, herm.n)
            # Re: z_u/sqrt2 - sum(Re w . qre - Im w . qim) = 0
            bag.add_real_row(
                [u] + jcols_re + jcols_im,
                np.concatenate(([inv], -w.real, w.imag)),
                0.0,
            )
            # Im: z_v/sqrt2 + sum(Im w . qre + Re w . qim) = 0
            bag.add_real_row(
                [u + 1] + jcols_re + jcols_im,
                np.concatenate(([inv], w.imag, w.real)),
                0.0,
            )


class _Layout:
    """Sequential block allocator used by the SDR builders."""

    def __init__(self) -> None:
        self.blocks: list = []
        self.slices: dict = {}
        self.n = 0

    def add(self, name: str, kind: str, size: int) -> ConeBlock:
        blk = ConeBlock(kind, size)
        self.blocks.append(blk)
        self.slices[name] = slice(self.n, self.n + blk.n_coords)
        self.n += blk.n_coords
        return blk


# ---------------------------------------------------------------------------
# SDR builders
# ---------------------------------------------------------------------------


def _polynomial_blocks(
    y: np.ndarray,
    coef_tensors: Sequence[np.ndarray],
    delta2: float,
    lam: Optional[float],
    scene,
) -> SdpProblem:
    """Shared assembly for the clean, robust, and pilot dual relaxations.

    Each entry of ``coef_tensors`` is an (L, T_k, M) stack defining one
    sup-norm-bounded vector polynomial sum_j q_j B_k[j]; every one gets a
    Schur block plus its own Toeplitz trace family.
    """
    y = np.asarray(y, dtype=complex)
    n_meas = y.size
    scale = float(np.linalg.norm(y))
    y_scaled = y / scale if scale > 0 else y
    d2_scaled = delta2 / scale if scale > 0 else delta2

    layout = _Layout()
    if delta2 > 0:
        layout.add("soc", "soc", 1 + 2 * n_meas)
        q_offset = layout.slices["soc"].start + 1
    else:
        layout.add("q", "free", 2 * n_meas)
        q_offset = layout.slices["q"].start

    herms = []
    for k, tens in enumerate(coef_tensors):
        _, t_dim, m_dim = tens.shape
        blk = layout.add(f"schur{k}", "psd", m_dim + t_dim)
        herms.append(_HermBlockCoords(layout.slices[f"schur{k}"].start, blk.size))
    if lam is not None:
        jdim = scene.n_rx + scene.sig_len
        layout.add("jammer", "psd", jdim)

    bag = _RowBag()
    n_trace = 0
    axes_shape = scene.atom_shape
    for tens, herm in zip(coef_tensors, herms):
        _, t_dim, m_dim = tens.shape
        n_trace += _add_toeplitz_trace_rows(bag, herm, axes_shape)
        _add_identity_rows(bag, herm, m_dim, t_dim, 1.0)
        _add_coupling_rows(bag, herm, tens, q_offset, n_meas)

    if lam is not None:
        if lam <= 0:
            raise ValueError("the jammer dual-norm cap must be positive")
        jherm = _HermBlockCoords(layout.slices["jammer"].start, scene.n_rx + scene.sig_len)
        n_trace += _add_toeplitz_trace_rows(bag, jherm, (scene.n_rx,))
        _add_identity_rows(bag, jherm, scene.n_rx, scene.sig_len, lam * lam)
        # P block: J[n_rx + p, r] = q[(r, p)] (antenna-major measurement order).
        inv = 1.0 / np.sqrt(2.0)
        for r in range(scene.n_rx):
            for p in range(scene.sig_len):
                j = r * scene.sig_len + p
                u = jherm.offset + jherm.n + 2 * _upper_index(
                    r, scene.n_rx + p, jherm.n
                )
                bag.add_real_row([u, q_offset + j], [inv, -1.0], 0.0)
                bag.add_real_row([u + 1, q_offset + n_meas + j], [inv, 1.0], 0.0)

    a, b = bag.build(layout.n)
    c = np.zeros(layout.n)
    c[q_offset : q_offset + n_meas] = y_scaled.real
    c[q_offset + n_meas : q_offset + 2 * n_meas] = y_scaled.imag
    if delta2 > 0:
        c[layout.slices["soc"].start] = -d2_scaled

    meta = {
        "layout": layout.slices,
        "q_offset": q_offset,
        "n_meas": n_meas,
        "y": y,
        "scale": scale,
        "delta2": delta2,
        "lambda": lam,
        "block_dims": [tuple(t.shape[1:]) for t in coef_tensors],
        "n_trace_constraints": n_trace,
    }
    return SdpProblem(c, a, b, layout.blocks, meta)


def build_clean_sdr(y: np.ndarray, op: MeasurementOperator) -> SdpProblem:
    """Noiseless dual relaxation: maximize <q, y>_R under the sup-norm LMI."""
    y = np.asarray(y, dtype=complex)
    if y.shape != (op.scene.n_meas,):
        raise ValueError(f"y must have length {op.scene.n_meas}")
    prob = _polynomial_blocks(y, [op.coef_sensing], 0.0, None, op.scene)
    prob.meta["op"] = op
    prob.meta["kind"] = "clean"
    return prob


def build_robust_sdr(
    y_w: np.ndarray,
    op: MeasurementOperator,
    lam: Optional[float],
    delta2: float,
) -> SdpProblem:
    """Noise/jammer-aware dual relaxation.

    Adds a -delta2 ||q||_2 objective term (second-order-cone epigraph) and,
    when ``lam`` is finite, the PSD block capping the jammer dual norm
    sup_psi ||reshape(q)^H a_rx(psi)||_2 at lam. Pass ``lam=None`` to drop
    the jammer constraint entirely.
    """
    y_w = np.asarray(y_w, dtype=complex)
    if y_w.shape != (op.scene.n_meas,):
        raise ValueError(f"y must have length {op.scene.n_meas}")
    if delta2 < 0:
        raise ValueError("delta2 must be non-negative")
    if lam is not None and not np.isfinite(lam):
        lam = None
    prob = _polynomial_blocks(y_w, [op.coef_sensing], float(delta2), lam, op.scene)
    prob.meta["op"] = op
    prob.meta["kind"] = "robust"
    return prob


def build_pilot_sdr(
    y: np.ndarray, op: MeasurementOperator, h_list: Sequence[np.ndarray]
) -> SdpProblem:
    """Dual relaxation with known messages: one scalar polynomial per h.

    Collapses each Schur block's message dimension to 1 by contracting the
    sensing tensors with the known h, so the dual polynomial becomes the
    scalar h^H X*(q) a(.).
    """
    y = np.asarray(y, dtype=complex)
    tensors = []
    for h in h_list:
        h = np.asarray(h, dtype=complex)
        collapsed = np.einsum("t,jtm->jm", np.conj(h), op.coef_sensing)
        tensors.append(collapsed[:, None, :])
    prob = _polynomial_blocks(y, tensors, 0.0, None, op.scene)
    prob.meta["op"] = op
    prob.meta["kind"] = "pilot"
    return prob


# ---------------------------------------------------------------------------
# ADMM solver
# ---------------------------------------------------------------------------


def _project_cones(x: np.ndarray, blocks: Sequence[ConeBlock]) -> np.ndarray:
    out = np.empty_like(x)
    pos = 0
    for blk in blocks:
        seg = slice(pos, pos + blk.n_coords)
        if blk.kind == "free":
            out[seg] = x[seg]
        elif blk.kind == "soc":
            out[seg] = project_soc(x[seg])
        elif blk.kind == "psd":
            out[seg] = hvec(project_hermitian_psd(unhvec(x[seg], blk.size)))
        else:
            raise ValueError(f"unknown cone kind {blk.kind}")
        pos += blk.n_coords
    return out


def solve(
    problem: SdpProblem,
    tol: float = 1e-6,
    max_iters: int = 50000,
    rho: float = 1.0,
    over_relaxation: float = 1.5,
    adaptive_rho: bool = True,
    check_every: int = 25,
) -> SdpSolution:
    """Consensus ADMM for the conic program; deterministic for fixed inputs.

    Returns the affine-side iterate for q and the objective, and the
    cone-side iterate for the PSD matrix, with relative consensus
    residuals. Status MAX_ITERS means the tolerance was not met;
    INFEASIBLE is a divergence heuristic (dual variable blow-up with a
    stalled primal residual).
    """
    a = problem.a_matrix
    at = a.T.tocsr()
    b = problem.b
    c = problem.objective
    n = problem.n_vars
    aat = (a @ at).toarray()
    try:
        cho = scipy.linalg.cho_factor(aat, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise ValueError(
            "constraint matrix is not full row rank; eliminate redundant rows"
        ) from exc

    def proj_affine(v: np.ndarray) -> np.ndarray:
        mu = scipy.linalg.cho_solve(cho, a @ v - b, check_finite=False)
        return v - at @ mu

    z = proj_affine(np.zeros(n))
    w = z.copy()
    u = np.zeros(n)
    alpha = over_relaxation
    start = time.perf_counter()
    status = SolveStatus.MAX_ITERS
    pri = dua = np.inf
    it = 0
    stall_floor = np.inf
    stall_count = 0
    for it in range(1, max_iters + 1):
        z = proj_affine(w - u + c / rho)
        zhat = alpha * z + (1.0 - alpha) * w
        w_prev = w
        w = _project_cones(zhat + u, problem.blocks)
        u = u + zhat - w
        if it % check_every == 0 or it == max_iters:
            pri = np.linalg.norm(z - w) / max(1.0, np.linalg.norm(z), np.linalg.norm(w))
            dua = rho * np.linalg.norm(w - w_prev) / max(1.0, rho * np.linalg.norm(u))
            if pri <= tol and dua <= tol:
                status = SolveStatus.OPTIMAL
                break
            if adaptive_rho and it % 100 == 0:
                if pri > 10.0 * dua and rho < 1e4:
                    rho *= 2.0
                    u /= 2.0
                elif dua > 10.0 * pri and rho > 1e-4:
                    rho /= 2.0
                    u *= 2.0
            # Divergence heuristic: windows where the primal residual stops
            # improving while the scaled dual variable keeps growing.
            if it % 100 == 0:
                if pri < 0.99 * stall_floor:
                    stall_floor = pri
                    stall_count = 0
                else:
                    stall_count += 1
                if (
                    stall_count >= 50
                    and pri > 1e-3
                    and np.linalg.norm(u) > 1e6 * max(1.0, np.linalg.norm(b))
                ):
                    status = SolveStatus.INFEASIBLE
                    break

    extras = {
        "z": z,
        "w": w,
        "rho_final": rho,
        "runtime_s": time.perf_counter() - start,
    }
    q = None
    big_q = None
    objective_value = float(c @ z) * problem.meta.get("scale", 1.0)
    if "q_offset" in problem.meta:
        off = problem.meta["q_offset"]
        n_meas = problem.meta["n_meas"]
        q = z[off : off + n_meas] + 1j * z[off + n_meas : off + 2 * n_meas]
        y = problem.meta["y"]
        objective_value = float(np.real(np.vdot(y, q)))
        if problem.meta.get("delta2", 0.0) > 0:
            objective_value -= problem.meta["delta2"] * float(np.linalg.norm(q))
        if "schur0" in problem.meta.get("layout", {}):
            sl = problem.meta["layout"]["schur0"]
            t_dim, m_dim = problem.meta["block_dims"][0]
            s_mat = unhvec(w[sl], m_dim + t_dim)
            big_q = s_mat[:m_dim, :m_dim]
    return SdpSolution(
        q=q,
        big_q=big_q,
        status=status,
        primal_residual=float(pri),
        dual_residual=float(dua),
        objective_value=objective_value,
        iterations=it,
        extras=extras,
    )


def dual_atomic_norm_check(
    q: np.ndarray, op: MeasurementOperator, grid_resolution: int = 16
) -> float:
    """Grid maximum of ||X*(q) a(x)||_2 over the 4-torus (FFT evaluated).

    The per-dimension resolution is raised to the exact-evaluation minimum
    when ``grid_resolution`` is below it.
    """
    poly = DualPolynomial(q, op)
    res = tuple(max(int(grid_resolution), 2 * d + 1) for d in poly.degrees())
    return float(eval_grid(poly, res).max())
