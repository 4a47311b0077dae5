"""Independent reference computations used by the tests.

Nothing here imports the package under test except for plain data types, so
each oracle can disagree with the implementation.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def gray(n_bits):
    """Binary-reflected Gray labels, rows MSB first."""
    codes = [i ^ (i >> 1) for i in range(2 ** n_bits)]
    return np.array([[(c >> (n_bits - 1 - b)) & 1 for b in range(n_bits)] for c in codes])


def gauss_hermite_bitwise_gmi(order: int, snr_db: float, nodes: int = 80) -> float:
    """Bit-wise GMI (bits/2D) of uniform square QAM over AWGN with Gray labels.

    The 2D channel splits into two identical PAM channels, each integrated
    with Gauss-Hermite quadrature.
    """
    side = math.isqrt(order)
    bits = int(math.log2(side))
    pam = np.arange(-(side - 1), side, 2.0)
    lab = gray(bits)
    es = 2 * np.mean(pam ** 2)
    sigma = math.sqrt(es / 10 ** (snr_db / 10) / 2)
    xh, wh = np.polynomial.hermite.hermgauss(nodes)
    total = 0.0
    for i, x in enumerate(pam):
        y = x + math.sqrt(2) * sigma * xh
        m = -(y[:, None] - pam[None, :]) ** 2 / (2 * sigma ** 2)
        e = np.exp(m - m.max(axis=1, keepdims=True))
        t = e.sum(axis=1)
        acc = sum(np.log2(e[:, lab[:, j] == lab[i, j]].sum(axis=1) / t) for j in range(bits))
        total += np.sum(wh * acc) / math.sqrt(math.pi)
    return 2 * (bits + total / side)


def all_sequences(levels, N):
    return list(itertools.product(levels, repeat=N))


def energy(seq):
    return sum(int(a) ** 2 for a in seq)


def min_energy_codebook(levels, N, size):
    """The ``size`` lowest-energy sequences, ties by lexicographic level index."""
    idx = {a: i for i, a in enumerate(levels)}
    seqs = sorted(all_sequences(levels, N), key=lambda s: (energy(s), [idx[a] for a in s]))
    return seqs[:size]


def nlpc_scalar_loop(x, y, weight):
    """Sample-by-sample ``exp(j * weight * (|x|^2 + |y|^2))`` rotation."""
    ox, oy = [], []
    for a, b in zip(x, y):
        rot = complex(math.cos(weight * (abs(a) ** 2 + abs(b) ** 2)),
                      math.sin(weight * (abs(a) ** 2 + abs(b) ** 2)))
        ox.append(a * rot)
        oy.append(b * rot)
    return np.array(ox), np.array(oy)


def entropy_bits(p):
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def smf_pnl_dbm(length_m, gamma_per_W_km, alpha_db_km=0.2):
    """Closed-form ``1 / (gamma L_eff)`` for a passive fiber, in dBm."""
    alpha = alpha_db_km * math.log(10) / 10 / 1e3
    l_eff = (math.exp(alpha * length_m) - 1) / alpha
    return 10 * math.log10(1.0 / (gamma_per_W_km * 1e-3 * l_eff) / 1e-3)


def spm_autocorrelation_mc(r, phi, M=2, samples=2_000_000, seed=0):
    """Brute-force ``E[u1(t+tau) u1*(t)]`` after rotation for jointly Gaussian modes.

    Each of the ``M`` modes has variance ``1/M`` and lag correlation ``r``.
    """
    rng = np.random.default_rng(seed)
    rho = r * M

    def cg():
        return (rng.standard_normal((M, samples)) + 1j * rng.standard_normal((M, samples))) / math.sqrt(2 * M)

    a, w = cg(), cg()
    b = rho * a + math.sqrt(1 - abs(rho) ** 2) * w
    pa = np.sum(np.abs(a) ** 2, axis=0)
    pb = np.sum(np.abs(b) ** 2, axis=0)
    return complex(np.mean(b[0] * np.exp(-1j * phi * pb) * np.conj(a[0] * np.exp(-1j * phi * pa))))
