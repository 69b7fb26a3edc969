"""Gain and symbol recovery at fixed parameter estimates.

Least squares over the per-target regression matrices recovers the
products g_k = amp_k * h_k; the QAM structure then disambiguates the
scale (finite set of achievable tuple norms) and the global phase
(quarter-turn symmetry group), leaving only the constellation's inherent
rotational ambiguity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import qam
from .model import MeasurementOperator, response_matrix
from .qam import Constellation


class RankDeficiencyError(ValueError):
    """The stacked regression matrix lost column rank; estimates unusable."""


@dataclass(frozen=True)
class DecodedMessage:
    """Decoded payload for one target."""

    g: np.ndarray
    amp_hat: float
    h_hat: np.ndarray
    symbols_hat: np.ndarray
    scale_used: float
    snap_distance: float
    constellation: Constellation


def _stack_columns(
    op: MeasurementOperator,
    coords_list: Sequence,
    jammer_psis: Sequence[float] = (),
) -> np.ndarray:
    """Regression matrix with one (L x T) block per target and one
    (L x Lbar) block per jammer spatial frequency."""
    scene = op.scene
    blocks = [response_matrix(op, coords) for coords in coords_list]
    for psi in jammer_psis:
        steer = np.exp(2j * np.pi * psi * np.arange(scene.n_rx))
        blocks.append(np.kron(steer[:, None], np.eye(scene.sig_len)))
    if not blocks:
        raise ValueError("nothing to regress on")
    return np.hstack(blocks)


def _solve_full_rank(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    rank = np.linalg.matrix_rank(a)
    if rank < a.shape[1]:
        raise RankDeficiencyError(
            f"regression matrix rank {rank} < {a.shape[1]} columns"
        )
    sol, *_ = np.linalg.lstsq(a, y, rcond=None)
    return sol


def least_squares_decode(
    y: np.ndarray, op: MeasurementOperator, estimates: Sequence
) -> tuple:
    """Jointly fit g_k for every estimated target; returns (g list, residual).

    ``estimates`` may be TargetEstimate objects or coordinate 4-tuples.
    Rank deficiency raises rather than silently regularizing.
    """
    if len(estimates) == 0:
        raise ValueError("need at least one target estimate")
    coords_list = [getattr(e, "coords", e) for e in estimates]
    t_dim = op.scene.subspace_dim
    a = _stack_columns(op, coords_list)
    sol = _solve_full_rank(a, np.asarray(y, dtype=complex))
    gs = [sol[k * t_dim : (k + 1) * t_dim] for k in range(len(coords_list))]
    residual = float(np.linalg.norm(a @ sol - y))
    return gs, residual


def joint_decode_with_jammer(
    y_w: np.ndarray,
    op: MeasurementOperator,
    target_estimates: Sequence,
    jammer_psis: Sequence[float],
) -> tuple:
    """Joint fit of target gains and per-jammer temporal waveforms.

    Returns (g list, list of length-Lbar jammer waveforms, residual); the
    recovered waveform for jammer r approximates power_r * temporal_r.
    """
    coords_list = [getattr(e, "coords", e) for e in target_estimates]
    scene = op.scene
    t_dim = scene.subspace_dim
    a = _stack_columns(op, coords_list, jammer_psis)
    sol = _solve_full_rank(a, np.asarray(y_w, dtype=complex))
    gs = [sol[k * t_dim : (k + 1) * t_dim] for k in range(len(coords_list))]
    base = len(coords_list) * t_dim
    waveforms = [
        sol[base + r * scene.sig_len : base + (r + 1) * scene.sig_len]
        for r in range(len(jammer_psis))
    ]
    residual = float(np.linalg.norm(a @ sol - y_w))
    return gs, waveforms, residual


def snap_to_constellation(g: np.ndarray, constellation: Constellation) -> DecodedMessage:
    """Resolve the blind scale/phase of g and read off the symbols.

    Every achievable tuple norm is tried along with the four quarter-turn
    rotations; the candidate whose rescaled vector lands closest to the
    constellation (entrywise) wins, ties broken toward the smaller norm.
    """
    g = np.asarray(g, dtype=complex)
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0:
        raise ValueError("cannot snap an all-zero vector")
    unit = g / gnorm
    best = None
    for scale in qam.achievable_norms(constellation, g.size):
        for rot in qam.ROTATIONS:
            cand = scale * rot * unit
            snapped = qam.nearest_points(cand, constellation)
            dist = float(np.linalg.norm(cand - snapped))
            key = (round(dist, 12), scale)
            if best is None or key < best[0]:
                best = (key, scale, rot, snapped, dist)
    _, scale, rot, snapped, dist = best
    return DecodedMessage(
        g=g,
        amp_hat=gnorm,
        h_hat=rot * unit,
        symbols_hat=snapped,
        scale_used=float(scale),
        snap_distance=dist,
        constellation=constellation,
    )


def decode_targets(
    y: np.ndarray,
    op: MeasurementOperator,
    estimates: Sequence,
    constellation: Constellation,
    jammer_psis: Optional[Sequence[float]] = None,
) -> tuple:
    """Full decode stage: LS gains, then constellation snap per target.

    Returns (list of DecodedMessage, g list, residual). With jammers the
    joint variant is used and their waveforms are discarded here.
    """
    if jammer_psis:
        gs, _, residual = joint_decode_with_jammer(y, op, estimates, jammer_psis)
    else:
        gs, residual = least_squares_decode(y, op, estimates)
    return [snap_to_constellation(g, constellation) for g in gs], gs, residual
