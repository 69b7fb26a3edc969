"""Independent brute-force reference implementations used only by tests.

Everything here is written directly from the signal model definitions
(loops, explicit DFTs) and deliberately shares no code with the package's
operator machinery, so agreement is meaningful evidence.
"""

from __future__ import annotations

import numpy as np


def dirichlet_sum(t: float, half_len: int) -> complex:
    """Literal phasor-sum definition of the periodic interpolation kernel."""
    lbar = 2 * half_len + 1
    total = 0.0 + 0.0j
    for m in range(-half_len, half_len + 1):
        total += np.exp(2j * np.pi * t * m)
    return total / lbar


def circular_delay(x: np.ndarray, tau: float) -> np.ndarray:
    """Continuously delay the sampled signal x by normalized tau.

    DFT, modulate each frequency by exp(-2j pi f tau), inverse DFT, all
    over the signed index grid {-N..N}.
    """
    lbar = x.size
    half = (lbar - 1) // 2
    idx = np.arange(-half, half + 1)
    out = np.zeros(lbar, dtype=complex)
    for pi, p in enumerate(idx):
        acc = 0.0 + 0.0j
        for f in idx:
            xhat_f = sum(
                x[li] * np.exp(-2j * np.pi * f * l / lbar) for li, l in enumerate(idx)
            )
            acc += xhat_f * np.exp(-2j * np.pi * f * tau) * np.exp(2j * np.pi * f * p / lbar)
        out[pi] = acc / lbar
    return out


def time_domain_measurement(op, targets, symbols) -> np.ndarray:
    """Direct echo-model evaluation, sample by sample.

    For each target and transmit antenna: code the message onto the
    waveform, delay it continuously, apply the Doppler ramp and the two
    angular phase profiles, and average over transmit antennas.
    """
    scene = op.scene
    lbar = scene.sig_len
    half = scene.half_len
    idx = np.arange(-half, half + 1)
    y = np.zeros(scene.n_meas, dtype=complex)
    for tgt, sym in zip(targets, symbols):
        for s in range(scene.n_tx):
            book = op.coding[0] if len(op.coding) == 1 else op.coding[s]
            x = book.entries @ sym.h
            xs = circular_delay(x, tgt.tau)
            for r in range(scene.n_rx):
                for pi, p in enumerate(idx):
                    j = r * lbar + pi
                    y[j] += (
                        tgt.amp
                        * np.exp(-2j * np.pi * r * scene.n_tx * tgt.aoa)
                        * np.exp(-2j * np.pi * s * tgt.aod)
                        * xs[pi]
                        * np.exp(2j * np.pi * tgt.dopp * p)
                        / scene.n_tx
                    )
    return y


def jammer_kron(psi: float, power: float, temporal: np.ndarray, n_rx: int) -> np.ndarray:
    """Entrywise Kronecker construction of one jammer block."""
    lbar = temporal.size
    z = np.zeros(n_rx * lbar, dtype=complex)
    for r in range(n_rx):
        for p in range(lbar):
            z[r * lbar + p] = power * temporal[p] * np.exp(2j * np.pi * psi * r)
    return z


def polynomial_direct(coef: np.ndarray, scene, points: np.ndarray) -> np.ndarray:
    """Evaluate the dual vector polynomial from its coefficient tensor.

    coef has shape (T, n_rx, n_tx, Lbar, Lbar) with trig-coefficient
    delay/Doppler axes; points is (P, 4). Returns (P,) norms.
    """
    half = scene.half_len
    nidx = np.arange(-half, half + 1)
    out = np.zeros(points.shape[0])
    for i, (tau, dopp, aod, aoa) in enumerate(points):
        e_r = np.exp(2j * np.pi * np.arange(scene.n_rx) * scene.n_tx * aoa)
        e_s = np.exp(2j * np.pi * np.arange(scene.n_tx) * aod)
        e_l = np.exp(-2j * np.pi * nidx * tau)
        e_m = np.exp(-2j * np.pi * nidx * dopp)
        val = np.einsum("trsnk,r,s,n,k->t", coef, e_r, e_s, e_l, e_m)
        out[i] = np.linalg.norm(val)
    return out
