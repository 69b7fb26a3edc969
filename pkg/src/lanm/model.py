"""Scene, atoms, the lifted linear measurement operator, and signal generators.

Conventions (fixed once here, everything downstream relies on them):

* Signal length ``Lbar = 2*half_len + 1`` with signed sample indices
  ``l, m, p in {-N..N}`` stored at array position ``idx + N``.
* Atom entries are indexed by the tuple ``(r, s, l, m)`` (receive antenna,
  transmit antenna, delay tap, Doppler tap), flattened in C order, so the
  atom dimension is ``M = n_rx * n_tx * Lbar**2``.
* Measurements are indexed by ``j = (r, p)`` (receive antenna major), so
  ``L = n_rx * Lbar``.
* The angular phase signs are chosen so that contracting an atom's
  conjugate against the sensing matrices reproduces a direct time-domain
  evaluation of the echo model exactly; the time-domain signal therefore
  carries ``exp(-2j*pi*r*n_tx*aoa)`` and ``exp(-2j*pi*s*aod)`` while atom
  entries carry the positive-sign phases.

All functions are pure: randomness enters only through an explicit
``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .qam import Constellation, draw_symbols


class OperatorFlavor(Enum):
    # Single coding matrix shared by all transmit antennas: the literal
    # lifted model. Angle of departure only enters measurements through the
    # scalar sum_s exp(-2j pi s aod), so it is not identifiable here.
    PAPER_FAITHFUL = "paper_faithful"
    # One independent coding matrix per transmit antenna, which makes the
    # angle of departure identifiable.
    PER_ANTENNA_CODED = "per_antenna_coded"


@dataclass(frozen=True)
class SceneConfig:
    """Static problem dimensions.

    ``half_len`` is N, so signals have ``Lbar = 2N+1`` samples.
    """

    n_tx: int
    n_rx: int
    half_len: int
    subspace_dim: int
    n_targets: int
    n_jammers: int = 0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_tx", "n_rx", "half_len", "subspace_dim", "n_targets"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.n_jammers < 0:
            raise ValueError("n_jammers must be non-negative")
        if self.n_targets >= self.n_tx:
            raise ValueError("need n_targets < n_tx")
        if self.subspace_dim > self.sig_len:
            raise ValueError("subspace_dim must not exceed the signal length")

    @property
    def sig_len(self) -> int:
        """Lbar = 2N+1 (odd by construction)."""
        return 2 * self.half_len + 1

    @property
    def n_meas(self) -> int:
        """Number of observed samples L = Lbar * n_rx."""
        return self.sig_len * self.n_rx

    @property
    def atom_dim(self) -> int:
        """Length M of one atom vector."""
        return self.n_rx * self.n_tx * self.sig_len ** 2

    @property
    def atom_shape(self) -> tuple:
        return (self.n_rx, self.n_tx, self.sig_len, self.sig_len)

    @property
    def min_separation_bound(self) -> float:
        """Wrap-around separation the recovery theory asks for."""
        return 10.0 / (self.n_tx * self.n_rx - 1)

    def signed_indices(self) -> np.ndarray:
        return np.arange(-self.half_len, self.half_len + 1)


@dataclass(frozen=True)
class TargetParams:
    """One target: normalized delay/Doppler/angles on [0,1) and a complex gain.

    Coordinates wrap on the unit torus, so they are reduced mod 1 here.
    """

    tau: float
    dopp: float
    aod: float
    aoa: float
    amp: complex

    def __post_init__(self) -> None:
        for name in ("tau", "dopp", "aod", "aoa"):
            object.__setattr__(self, name, float(getattr(self, name)) % 1.0)
        object.__setattr__(self, "amp", complex(self.amp))

    @property
    def coords(self) -> np.ndarray:
        return np.array([self.tau, self.dopp, self.aod, self.aoa])


@dataclass(frozen=True)
class JammerParams:
    """One jammer: spatial frequency, power, and a unit-norm temporal vector."""

    psi: float
    power: float
    temporal: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "psi", float(self.psi) % 1.0)
        if self.power < 0:
            raise ValueError("jammer power must be non-negative")
        temporal = np.asarray(self.temporal, dtype=complex)
        nrm = np.linalg.norm(temporal)
        if nrm == 0:
            raise ValueError("jammer temporal vector must be nonzero")
        object.__setattr__(self, "temporal", temporal / nrm)


@dataclass(frozen=True)
class CodingMatrix:
    """Known coding/dictionary matrix with its empirical coherence."""

    entries: np.ndarray
    coherence: float = field(init=False)

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=complex)
        if entries.ndim != 2:
            raise ValueError("coding matrix must be 2-D")
        object.__setattr__(self, "entries", entries)
        # Empirical max squared magnitude, floored at 1/T so that
        # coherence * T >= 1 always holds.
        mu = float(np.max(np.abs(entries) ** 2))
        object.__setattr__(self, "coherence", max(mu, 1.0 / entries.shape[1]))

    @property
    def sig_len(self) -> int:
        return self.entries.shape[0]

    @property
    def subspace_dim(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class SymbolVector:
    """A constellation tuple and its unit-norm transmitted version."""

    symbols: np.ndarray
    constellation: Constellation
    h: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        symbols = np.asarray(self.symbols, dtype=complex)
        nrm = np.linalg.norm(symbols)
        if nrm == 0:
            raise ValueError("symbol tuple must be nonzero")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "h", symbols / nrm)

    @classmethod
    def draw(
        cls, constellation: Constellation, n: int, rng: np.random.Generator
    ) -> "SymbolVector":
        return cls(draw_symbols(constellation, n, rng), constellation)


@dataclass(frozen=True)
class Atom4D:
    """One steering/kernel atom a(tau, dopp, aod, aoa)."""

    coords: tuple
    vector: np.ndarray

    def tensor(self, scene: SceneConfig) -> np.ndarray:
        return self.vector.reshape(scene.atom_shape)


def dirichlet(t, half_len: int):
    """Periodic Dirichlet kernel: mean of the 2N+1 phasors exp(2j pi t m).

    Real-valued, 1-periodic, equals 1 at integers, and bounded by 1.
    Accepts scalars or arrays.
    """
    lbar = 2 * half_len + 1
    t = np.asarray(t, dtype=float)
    # Reduce to [-1/2, 1/2] first; sin() then loses no precision near the
    # kernel's unit peaks and 1-periodicity is exact by construction.
    tw = t - np.round(t)
    num = np.sin(np.pi * lbar * tw)
    den = lbar * np.sin(np.pi * tw)
    at_peak = np.abs(tw) < 1e-15
    out = np.where(at_peak, 1.0, num / np.where(at_peak, 1.0, den))
    if out.ndim == 0:
        return float(out)
    return out


def make_atom(coords: Sequence[float], scene: SceneConfig) -> Atom4D:
    """Build the atom vector for coordinates (tau, dopp, aod, aoa).

    The complex gain's phase is carried by ``TargetParams.amp``, never by
    the atom itself.
    """
    tau, dopp, aod, aoa = (float(c) for c in coords)
    n = scene.half_len
    idx = scene.signed_indices()
    ph_r = np.exp(2j * np.pi * np.arange(scene.n_rx) * scene.n_tx * aoa)
    ph_s = np.exp(2j * np.pi * np.arange(scene.n_tx) * aod)
    ker_l = dirichlet(idx / scene.sig_len - tau, n)
    ker_m = dirichlet(idx / scene.sig_len - dopp, n)
    tensor = np.einsum("r,s,l,m->rslm", ph_r, ph_s, ker_l, ker_m)
    return Atom4D((tau, dopp, aod, aoa), tensor.ravel())


def make_coding(
    scene: SceneConfig,
    rng: np.random.Generator,
    flavor: OperatorFlavor = OperatorFlavor.PAPER_FAITHFUL,
) -> list:
    """Draw i.i.d. complex Gaussian coding matrices (unit entry variance).

    Returns one matrix for the shared-coding flavor and ``n_tx`` matrices
    for the per-antenna flavor.
    """
    count = 1 if flavor is OperatorFlavor.PAPER_FAITHFUL else scene.n_tx
    books = []
    for _ in range(count):
        g = rng.standard_normal((scene.sig_len, scene.subspace_dim, 2))
        books.append(CodingMatrix((g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)))
    return books


class MeasurementOperator:
    """The family of sensing matrices realizing the lifted linear model.

    ``sensing[j]`` stores the adjoint-side matrix E_j = Dtilde_j^H of shape
    (T, M); the forward map is y_j = <U, E_j> and the adjoint is
    X*(q) = sum_j q_j E_j, so the adjoint identity holds by construction.

    ``coef_sensing`` holds the same matrices with the delay and Doppler
    axes moved to the trigonometric coefficient basis (a small DFT per
    axis). That version is what dual-polynomial evaluation and the
    semidefinite relaxation consume.
    """

    def __init__(
        self,
        scene: SceneConfig,
        coding: Union[CodingMatrix, Sequence[CodingMatrix]],
        flavor: OperatorFlavor = OperatorFlavor.PAPER_FAITHFUL,
    ) -> None:
        if isinstance(coding, CodingMatrix):
            coding = [coding]
        coding = list(coding)
        expected = 1 if flavor is OperatorFlavor.PAPER_FAITHFUL else scene.n_tx
        if len(coding) != expected:
            raise ValueError(
                f"flavor {flavor.value} needs {expected} coding matrices, got {len(coding)}"
            )
        for book in coding:
            if book.entries.shape != (scene.sig_len, scene.subspace_dim):
                raise ValueError("coding matrix shape does not match the scene")
        self.scene = scene
        self.flavor = flavor
        self.coding = coding
        self.sensing = self._build_sensing()
        self.coef_sensing = to_coefficient_basis(self.sensing, scene)

    def _build_sensing(self) -> np.ndarray:
        scene = self.scene
        lbar, n_tx, n_rx, t_dim = scene.sig_len, scene.n_tx, scene.n_rx, scene.subspace_dim
        idx = scene.signed_indices()
        # books[s] is the coding matrix seen by transmit antenna s.
        if self.flavor is OperatorFlavor.PAPER_FAITHFUL:
            books = np.broadcast_to(
                self.coding[0].entries, (n_tx, lbar, t_dim)
            )
        else:
            books = np.stack([b.entries for b in self.coding])
        # row_pos[pi, li] = array row of the coding entry used when the
        # observed sample index is p and the delay tap is l (cyclic wrap).
        # Signed index (p - l) wrapped into {-N..N} lives at array row
        # (p - l + N) mod Lbar.
        p = idx[:, None]
        l = idx[None, :]
        row_pos = (p - l + scene.half_len) % lbar
        # Doppler modulation exp(-2j pi p m / Lbar) on the adjoint side.
        dopp_phase = np.exp(-2j * np.pi * np.outer(idx, idx) / lbar)
        # sensing[(r, p), t, (r2, s, l, m)] =
        #   delta(r, r2)/n_tx * exp(-2j pi p m/Lbar) * conj(books[s][(p-l) mod Lbar, t])
        # so that the forward-side matrices carry the coding rows unconjugated.
        e = np.zeros((n_rx, lbar, t_dim, n_rx, n_tx, lbar, lbar), dtype=complex)
        coded = np.conj(books[:, row_pos, :])  # (s, p, l, t)
        block = np.einsum("splt,pm->ptslm", coded, dopp_phase) / n_tx
        for r in range(n_rx):
            e[r, :, :, r, :, :, :] = block
        return e.reshape(scene.n_meas, t_dim, scene.atom_dim)


def coefficient_dft(scene: SceneConfig) -> np.ndarray:
    """Per-axis map from Dirichlet-tap coordinates to trig coefficients.

    ``F[l, n] = exp(2j pi l n / Lbar) / Lbar`` over signed l, n, so that
    the tap vector [D_N(l/Lbar - x)]_l equals F @ [exp(-2j pi x n)]_n.
    """
    idx = scene.signed_indices()
    return np.exp(2j * np.pi * np.outer(idx, idx) / scene.sig_len) / scene.sig_len


def to_coefficient_basis(sensing: np.ndarray, scene: SceneConfig) -> np.ndarray:
    """Transform the delay/Doppler axes of (L, T, M) sensing tensors."""
    l_meas, t_dim, _ = sensing.shape
    f = coefficient_dft(scene)
    tens = sensing.reshape((l_meas, t_dim) + scene.atom_shape)
    tens = np.einsum("jtrslm,ln,mk->jtrsnk", tens, f, f)
    return tens.reshape(l_meas, t_dim, scene.atom_dim)


def forward(op: MeasurementOperator, u: np.ndarray) -> np.ndarray:
    """Apply the lifted measurement map: y_j = <U, E_j>."""
    u = np.asarray(u, dtype=complex)
    t_dim = op.scene.subspace_dim
    if u.shape != (t_dim, op.scene.atom_dim):
        raise ValueError(f"U must have shape ({t_dim}, {op.scene.atom_dim})")
    return np.einsum("jtm,tm->j", np.conj(op.sensing), u)


def adjoint(op: MeasurementOperator, q: np.ndarray) -> np.ndarray:
    """Apply the adjoint map: X*(q) = sum_j q_j E_j, shape (T, M)."""
    q = np.asarray(q, dtype=complex)
    if q.shape != (op.scene.n_meas,):
        raise ValueError(f"q must have length {op.scene.n_meas}")
    return np.einsum("j,jtm->tm", q, op.sensing)


def adjoint_coef(op: MeasurementOperator, q: np.ndarray) -> np.ndarray:
    """Adjoint in the trig-coefficient basis (used by the SDR and localization)."""
    q = np.asarray(q, dtype=complex)
    if q.shape != (op.scene.n_meas,):
        raise ValueError(f"q must have length {op.scene.n_meas}")
    return np.einsum("j,jtm->tm", q, op.coef_sensing)


def response_matrix(op: MeasurementOperator, coords: Sequence[float]) -> np.ndarray:
    """Per-target regression matrix: row j is a(coords)^H Dtilde_j, shape (L, T).

    With the transmitted vector h, the noiseless response of a unit-gain
    target at ``coords`` is ``response_matrix(op, coords) @ h``.
    """
    atom = make_atom(coords, op.scene).vector
    return np.conj(np.einsum("jtm,m->jt", op.sensing, atom))


def lifted_matrix(
    targets: Sequence[TargetParams],
    symbols: Sequence[SymbolVector],
    scene: SceneConfig,
) -> np.ndarray:
    """U = sum_k amp_k h_k a(coords_k)^H of shape (T, M)."""
    u = np.zeros((scene.subspace_dim, scene.atom_dim), dtype=complex)
    for tgt, sym in zip(targets, symbols):
        atom = make_atom(tgt.coords, scene).vector
        u += tgt.amp * np.outer(sym.h, np.conj(atom))
    return u


def jammer_vector(jammer: JammerParams, scene: SceneConfig) -> np.ndarray:
    """One jammer's contribution in measurement ordering (antenna major).

    The receive steering factor exp(2j pi psi r) varies across antenna
    blocks and the temporal vector varies within each block.
    """
    steer = np.exp(2j * np.pi * jammer.psi * np.arange(scene.n_rx))
    return jammer.power * np.kron(steer, jammer.temporal)


class SimulatedInstance(NamedTuple):
    y_clean: np.ndarray
    y_observed: np.ndarray
    u_true: np.ndarray
    z_true: np.ndarray


def simulate(
    op: MeasurementOperator,
    targets: Sequence[TargetParams],
    symbols: Sequence[SymbolVector],
    jammers: Sequence[JammerParams] = (),
    snr_db: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> SimulatedInstance:
    """Generate a measurement instance: y_observed = X(U) + noise + jamming.

    Gaussian noise is scaled so that 10 log10(||y_clean||^2 / ||w||^2)
    equals ``snr_db`` exactly; pass ``snr_db=None`` for a noiseless
    instance.
    """
    scene = op.scene
    if len(targets) != scene.n_targets:
        raise ValueError("target list does not match scene.n_targets")
    if len(symbols) != scene.n_targets:
        raise ValueError("need one symbol vector per target")
    if len(jammers) != scene.n_jammers:
        raise ValueError("jammer list does not match scene.n_jammers")
    u_true = lifted_matrix(targets, symbols, scene)
    y_clean = forward(op, u_true)
    z_true = np.zeros(scene.n_meas, dtype=complex)
    for jam in jammers:
        z_true += jammer_vector(jam, scene)
    w = np.zeros(scene.n_meas, dtype=complex)
    if snr_db is not None:
        if not np.isfinite(snr_db):
            raise ValueError("snr_db must be finite")
        if rng is None:
            raise ValueError("need an rng to draw noise")
        clean_norm = np.linalg.norm(y_clean)
        if clean_norm == 0:
            raise ValueError("cannot set an SNR for an all-zero clean signal")
        g = rng.standard_normal((scene.n_meas, 2))
        w = (g[:, 0] + 1j * g[:, 1]) / np.sqrt(2.0)
        w *= clean_norm / (np.linalg.norm(w) * 10.0 ** (snr_db / 20.0))
    return SimulatedInstance(y_clean, y_clean + w + z_true, u_true, z_true)


def wrap_distance(a, b) -> np.ndarray:
    """Wrap-around distance on the unit torus (elementwise)."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 1.0
    return np.minimum(d, 1.0 - d)


def coord_distance(coords_a, coords_b) -> float:
    """Max over the four coordinates of the wrap-around distance."""
    return float(np.max(wrap_distance(coords_a, coords_b)))


def min_separation(targets: Sequence[TargetParams]) -> float:
    """Smallest pairwise coordinate separation; +inf for a single target."""
    if len(targets) == 0:
        raise ValueError("need at least one target")
    if len(targets) == 1:
        return float("inf")
    best = float("inf")
    for i in range(len(targets)):
        for j in range(i + 1, len(targets)):
            best = min(best, coord_distance(targets[i].coords, targets[j].coords))
    return best


def check_separation(targets: Sequence[TargetParams], scene: SceneConfig) -> bool:
    """Whether the separation meets the 10/(n_tx*n_rx - 1) bound (inclusive)."""
    return min_separation(targets) >= scene.min_separation_bound


def random_targets(
    scene: SceneConfig,
    rng: np.random.Generator,
    min_sep: Optional[float] = None,
    max_draws: int = 10000,
) -> list:
    """Draw uniform target coordinates with unit-variance Gaussian gains.

    ``min_sep`` optionally rejection-samples until every pair is separated
    by at least that wrap-around distance in the max-coordinate metric.
    """
    targets: list = []
    for _ in range(max_draws):
        coords = rng.random(4)
        g = rng.standard_normal(2)
        amp = (g[0] + 1j * g[1]) / np.sqrt(2.0)
        cand = TargetParams(*coords, amp=amp)
        if min_sep is None or all(
            coord_distance(cand.coords, t.coords) >= min_sep for t in targets
        ):
            targets.append(cand)
            if len(targets) == scene.n_targets:
                return targets
    raise RuntimeError("could not place targets with the requested separation")


def random_jammers(scene: SceneConfig, rng: np.random.Generator, power: float = 1.0) -> list:
    jammers = []
    for _ in range(scene.n_jammers):
        g = rng.standard_normal((scene.sig_len, 2))
        temporal = g[:, 0] + 1j * g[:, 1]
        jammers.append(JammerParams(psi=rng.random(), power=power, temporal=temporal))
    return jammers
