"""Performance metrics: bit-wise GMI, EVM and occupied bandwidth."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .shaping import QamConstellation
from .sigkit import DualPolSignal, estimate_psd

log = logging.getLogger(__name__)

EVM_FLOOR_DB = -150.0
_GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class GmiEstimate:
    gmi_bits_per_2d: float
    symbol_count: int
    noise_variance: float
    confidence_half_width: float
    entropy_bits_per_2d: float


def complex_gain(tx, rx) -> complex:
    """Least-squares ``h`` minimizing ``|rx - h tx|^2``."""
    tx = np.asarray(tx).reshape(-1)
    rx = np.asarray(rx).reshape(-1)
    den = np.vdot(tx, tx)
    if den == 0:
        raise ValueError("reference symbols are all zero")
    return complex(np.vdot(tx, rx) / den)


def _as_flat(symbols):
    s = getattr(symbols, "symbols", symbols)
    return np.asarray(s).reshape(-1)


def evm(tx_symbols, rx_symbols) -> float:
    """EVM in dB after removing the least-squares complex gain."""
    tx, rx = _as_flat(tx_symbols), _as_flat(rx_symbols)
    if tx.size == 0:
        raise ValueError("empty symbol sequence")
    if tx.shape != rx.shape:
        raise ValueError("tx and rx must have equal length")
    h = complex_gain(tx, rx)
    err = np.mean(np.abs(rx / h - tx) ** 2) / np.mean(np.abs(tx) ** 2)
    if err <= 10 ** (EVM_FLOOR_DB / 10):
        return EVM_FLOOR_DB
    return float(10 * np.log10(err))


class _GmiProblem:
    """Everything needed to evaluate the mismatched GMI for one variance."""

    def __init__(self, tx, rx, constellation: QamConstellation, priors=None):
        # transmitted symbols are a scaled odd-integer grid; the smallest
        # quadrature magnitude is the scale
        mags = np.abs(np.concatenate([tx.real, tx.imag]))
        scale = float(np.min(mags[mags > 0]))
        idx = constellation.index_of(tx / scale)
        if priors is None:
            counts = np.bincount(idx, minlength=constellation.order)
            priors = counts / counts.sum()
        priors = np.asarray(priors, dtype=float)
        if not math.isclose(priors.sum(), 1.0, rel_tol=1e-9):
            raise ValueError("constellation priors must sum to one")
        h = complex_gain(tx, rx)
        self.y = rx / (h * scale)
        self.idx = idx
        self.ti, self.tq = np.divmod(idx, constellation.side)
        self.points = constellation.points
        self.pam = constellation.pam
        self.pam_labels = constellation.pam_labels
        self.prior2d = priors.reshape(constellation.side, constellation.side)
        with np.errstate(divide="ignore"):
            self.log_prior = np.log(priors)
        self.log_prior[~np.isfinite(self.log_prior)] = -1e30
        p = priors[priors > 0]
        self.entropy = float(-np.sum(p * np.log2(p)))
        self.self_info = -self.log_prior[idx] / math.log(2)
        self.mse = float(np.mean(np.abs(self.y - self.points[idx]) ** 2))
        self.scale = scale

    def terms(self, var: float) -> np.ndarray:
        post = kernels.qam_bit_log_posteriors(self.y.real, self.y.imag, self.ti, self.tq,
                                              self.pam, self.prior2d, self.pam_labels, 1.0 / var)
        return self.self_info + post

    def rate(self, var: float) -> float:
        return float(np.mean(self.terms(var)))


def _golden_max(f, lo, hi, iters):
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc > fd else (d, fd)


def gmi_estimate(tx_symbols, rx_symbols, constellation: QamConstellation, priors=None,
                 n_batches: int = 32, iters: int = 16) -> GmiEstimate:
    """Bit-metric-decoding rate per 2D symbol with a fitted Gaussian metric.

    ``GMI = H(X) - sum_j H(B_j | Y)`` where the bit posteriors use a circular
    Gaussian auxiliary channel around the (gain-corrected) constellation.  Its
    variance is chosen by golden-section search to maximize the estimate.
    ``priors`` default to the realized symbol frequencies of ``tx_symbols``.
    """
    tx, rx = _as_flat(tx_symbols), _as_flat(rx_symbols)
    if tx.shape != rx.shape:
        raise ValueError("tx and rx must be aligned sequences of equal length")
    n = tx.size
    if n < 1000:
        warnings.warn(f"GMI from only {n} symbols; confidence interval is wide", stacklevel=2)
    prob = _GmiProblem(tx, rx, constellation, priors)
    if not np.isfinite(prob.mse):
        raise ValueError("degenerate received samples (non-finite)")
    ref = max(prob.mse, 1e-24 * np.mean(np.abs(constellation.points) ** 2))
    lo, hi = math.log(ref / 4), math.log(ref * 4)
    best_lv, best = _golden_max(lambda lv: prob.rate(math.exp(lv)), lo, hi, iters)
    # widen once if the optimum sits on the bracket edge (strong distortion)
    if best_lv - lo < 0.05 * (hi - lo) or hi - best_lv < 0.05 * (hi - lo):
        best_lv, best = _golden_max(lambda lv: prob.rate(math.exp(lv)),
                                    best_lv - 3.0, best_lv + 3.0, iters)
    var = math.exp(best_lv)
    terms = prob.terms(var)
    batches = np.array_split(terms, min(n_batches, n))
    means = np.array([b.mean() for b in batches])
    half = 1.96 * means.std(ddof=1) / math.sqrt(len(means)) if len(means) > 1 else math.inf
    if n < 1000:
        half *= 2
    gmi = min(max(float(np.mean(terms)), 0.0), prob.entropy)
    return GmiEstimate(gmi, n, var * prob.scale ** 2, float(half), prob.entropy)


def occupied_bandwidth(sig: DualPolSignal, threshold_db: float = 20.0, segment_len=None) -> float:
    """Width of the smallest symmetric band holding all PSD above ``peak - threshold_db``."""
    seg = segment_len or min(len(sig), 4096)
    psd = estimate_psd(sig, seg)
    tot = psd.total()
    peak = tot.max()
    if not peak > 0:
        raise ValueError("degenerate PSD")
    above = tot >= peak * 10 ** (-threshold_db / 10)
    return float(2 * np.max(np.abs(psd.freq[above])))


@dataclass
class MetricsRecord:
    gmi_bits_2d: float
    snr_db: float
    evm_db: float
    obw_hz: float | None = None
    seeds: list = field(default_factory=list)
    config_hash: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)
