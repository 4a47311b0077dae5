"""Sampled dual-polarization signals, RRC pulse shaping and spectral estimation.

All filtering is cyclic: a burst is treated as one period of a periodic
signal, so frequency-domain operations are exact on the discrete grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import signal as sps


@dataclass(frozen=True)
class DualPolSignal:
    """Normalized dual-polarization envelope ``u`` sampled at ``sample_rate``.

    ``samples`` has shape ``(2, n_samples)`` (row 0 is x, row 1 is y).  The
    physical field is ``sqrt(avg_power) * u`` with ``E{|u_x|^2 + |u_y|^2} = 1``.
    ``bandwidth`` records a one-sided band limit known to hold exactly (set by
    brickwall filtering, cleared by anything nonlinear).
    """

    samples: np.ndarray
    sample_rate: float
    avg_power: float = 1.0
    center_time_origin: float = 0.0
    bandwidth: float | None = field(default=None, compare=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim != 2 or s.shape[0] != 2 or s.shape[1] < 1:
            raise ValueError("samples must have shape (2, n) with n >= 1")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if not self.avg_power > 0:
            raise ValueError("avg_power must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @classmethod
    def from_xy(cls, samples_x, samples_y, sample_rate, avg_power=1.0):
        x = np.asarray(samples_x, dtype=complex)
        y = np.asarray(samples_y, dtype=complex)
        if x.shape != y.shape:
            raise ValueError("samples_x and samples_y must have equal length")
        return cls(np.stack([x, y]), sample_rate, avg_power)

    @property
    def samples_x(self) -> np.ndarray:
        return self.samples[0]

    @property
    def samples_y(self) -> np.ndarray:
        return self.samples[1]

    def __len__(self):
        return self.samples.shape[1]

    def power(self) -> float:
        """Mean of ``|u_x|^2 + |u_y|^2`` over the burst."""
        return float(np.mean(np.sum(np.abs(self.samples) ** 2, axis=0)))

    def with_samples(self, samples, bandwidth=None) -> "DualPolSignal":
        return replace(self, samples=samples, bandwidth=bandwidth)

    def freqs(self) -> np.ndarray:
        return np.fft.fftfreq(len(self), d=1.0 / self.sample_rate)


@dataclass(frozen=True)
class SymbolFrame:
    """Dual-polarization symbols ``a_k``, shape ``(2, n_symbols)``."""

    symbols: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=complex)
        if s.ndim != 2 or s.shape[0] != 2:
            raise ValueError("symbols must have shape (2, n_symbols)")
        s.setflags(write=False)
        object.__setattr__(self, "symbols", s)

    def __len__(self):
        return self.symbols.shape[1]

    def flat(self) -> np.ndarray:
        """All 2D symbols in transmission order (x then y per time slot)."""
        return self.symbols.T.reshape(-1)


@dataclass(frozen=True)
class PulseShape:
    """Root-raised-cosine pulse with energy ``T`` (unit energy per symbol)."""

    roll_off: float = 0.05
    symbol_interval: float = 1e-11
    truncation_span: int = 64
    kind: str = "rrc"

    def __post_init__(self):
        if self.kind != "rrc":
            raise ValueError("only root-raised-cosine pulses are supported")
        if not 0.0 <= self.roll_off <= 1.0:
            raise ValueError("roll_off must be in [0, 1]")
        if not self.symbol_interval > 0:
            raise ValueError("symbol_interval must be positive")

    @property
    def baud(self) -> float:
        return 1.0 / self.symbol_interval

    def raised_cosine(self, f_norm) -> np.ndarray:
        """Raised-cosine spectrum at frequencies normalized to the baud rate.

        Height 1 in the flat band, so it integrates to 1 over ``f_norm``.
        """
        f = np.abs(np.asarray(f_norm, dtype=float))
        b = self.roll_off
        lo, hi = (1 - b) / 2, (1 + b) / 2
        h = np.where(f <= lo, 1.0, 0.0)
        if b > 0:
            band = (f > lo) & (f <= hi)
            h = np.where(band, 0.5 * (1 + np.cos(np.pi / b * (f - lo))), h)
        return h

    def spectrum(self, n: int, n_symbols: int) -> np.ndarray:
        """DFT of the periodized pulse sampled at ``n`` samples/symbol.

        Aliased images are folded in, so ``n = 1`` gives the true sampled
        pulse rather than a truncated spectrum.
        """
        f = np.fft.fftfreq(n * n_symbols, d=1.0 / n)
        g = np.zeros_like(f)
        for shift in (-2, -1, 0, 1, 2):
            g += np.sqrt(self.raised_cosine(f - shift * n))
        return n * g

    def impulse_response(self, t_norm) -> np.ndarray:
        """Closed-form RRC at times normalized to the symbol interval."""
        t = np.asarray(t_norm, dtype=float)
        b = self.roll_off
        if b == 0:
            return np.sinc(t)
        out = np.empty_like(t)
        sing = np.isclose(np.abs(t), 1 / (4 * b))
        zero = np.isclose(t, 0.0)
        reg = ~(sing | zero)
        tr = t[reg]
        out[reg] = (np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))) / (
            np.pi * tr * (1 - (4 * b * tr) ** 2)
        )
        out[zero] = 1 - b + 4 * b / np.pi
        out[sing] = b / np.sqrt(2) * (
            (1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
        )
        return out

    def taps(self, n: int) -> np.ndarray:
        """Truncated time-domain taps over ``truncation_span`` symbols."""
        half = self.truncation_span * n // 2
        return self.impulse_response(np.arange(-half, half + 1) / n)


@dataclass(frozen=True)
class BrickwallFilter:
    """Ideal rectangular lowpass with one-sided bandwidth in Hz."""

    lowpass_bandwidth: float

    def __post_init__(self):
        if not self.lowpass_bandwidth > 0:
            raise ValueError("lowpass_bandwidth must be positive")

    def transfer(self, freqs) -> np.ndarray:
        return (np.abs(freqs) <= self.lowpass_bandwidth).astype(float)


def modulate(frame: SymbolFrame, pulse: PulseShape, n: int) -> DualPolSignal:
    """Pulse-shape ``frame`` at ``n`` samples per symbol.

    Symbol ``k`` lands on sample ``k*n``; the zero-phase pulse needs no delay
    compensation.  With unit mean ``|a_x|^2 + |a_y|^2`` the output has unit
    mean power.
    """
    if n < 1 or int(n) != n:
        raise ValueError("oversampling factor n must be a positive integer")
    n_sym = len(frame)
    if n_sym == 0:
        raise ValueError("cannot modulate an empty frame")
    up = np.zeros((2, n_sym * n), dtype=complex)
    up[:, ::n] = frame.symbols
    spec = np.fft.fft(up, axis=-1) * pulse.spectrum(n, n_sym)
    return DualPolSignal(np.fft.ifft(spec, axis=-1), sample_rate=n / pulse.symbol_interval)


def apply_brickwall(sig: DualPolSignal, filt: BrickwallFilter) -> DualPolSignal:
    """Zero every DFT bin with ``|f| > B``."""
    if len(sig) < 2:
        raise ValueError("signal must have at least two samples")
    b = filt.lowpass_bandwidth
    if sig.bandwidth is not None and sig.bandwidth <= b:
        return sig
    if b >= sig.sample_rate / 2:
        return replace(sig, bandwidth=min(b, sig.sample_rate / 2))
    spec = np.fft.fft(sig.samples, axis=-1) * filt.transfer(sig.freqs())
    return sig.with_samples(np.fft.ifft(spec, axis=-1), bandwidth=b)


def resample(sig: DualPolSignal, new_rate: float) -> DualPolSignal:
    """Change the sample rate by zero-padding or truncating the DFT.

    Downsampling discards content above the new Nyquist frequency (an ideal
    anti-aliasing filter) rather than folding it back.
    """
    n_old = len(sig)
    n_new = int(round(n_old * new_rate / sig.sample_rate))
    if n_new == n_old:
        return sig
    if not math.isclose(n_new * sig.sample_rate, n_old * new_rate, rel_tol=1e-9):
        raise ValueError("new_rate must give an integer number of samples")
    spec = np.fft.fft(sig.samples, axis=-1)
    k = min(n_old, n_new)
    q = np.arange(-(k // 2), k - k // 2)
    out = np.zeros((2, n_new), dtype=complex)
    out[:, q % n_new] = spec[:, q % n_old]
    bw = sig.bandwidth
    if n_new < n_old:
        bw = new_rate / 2 if bw is None else min(bw, new_rate / 2)
    samples = np.fft.ifft(out, axis=-1) * (n_new / n_old)
    return replace(sig, samples=samples, sample_rate=float(new_rate), bandwidth=bw)


def matched_filter_and_sample(sig: DualPolSignal, pulse: PulseShape, n: int) -> SymbolFrame:
    """Filter with the (real, even) pulse and take every ``n``-th sample."""
    if len(sig) % n:
        raise ValueError(f"signal length {len(sig)} is not a multiple of n={n}")
    n_sym = len(sig) // n
    spec = np.fft.fft(sig.samples, axis=-1) * pulse.spectrum(n, n_sym)
    y = np.fft.ifft(spec, axis=-1) / n
    return SymbolFrame(y[:, ::n])


@dataclass(frozen=True)
class Psd:
    """Two-sided PSD per polarization, in W/Hz, with ``freq`` ascending."""

    freq: np.ndarray
    psd: np.ndarray
    resolution: float

    def total(self) -> np.ndarray:
        return self.psd.sum(axis=0)

    def power(self) -> float:
        return float(np.sum(self.psd) * self.resolution)

    def to_csv(self, path) -> None:
        with np.errstate(divide="ignore"):
            db = 10 * np.log10(self.psd)
        data = np.column_stack([self.freq, db[0], db[1]])
        np.savetxt(path, data, delimiter=",", header="freq_hz,psd_x_db,psd_y_db",
                   comments="", fmt="%.10g")


def estimate_psd(sig: DualPolSignal, segment_len: int) -> Psd:
    """Averaged periodogram (rectangular window, no overlap)."""
    if segment_len < 8:
        raise ValueError("segment_len must be at least 8")
    if segment_len > len(sig):
        raise ValueError("segment_len exceeds the signal length")
    f, p = sps.welch(sig.samples, fs=sig.sample_rate, window="boxcar",
                     nperseg=segment_len, noverlap=0, detrend=False,
                     return_onesided=False, scaling="density", axis=-1)
    order = np.argsort(f)
    return Psd(f[order], sig.avg_power * p[:, order], sig.sample_rate / segment_len)


def dispersion_length(T0: float, beta2: float) -> float:
    """``T0**2 / |beta2|`` in meters; ``inf`` when ``beta2 == 0``."""
    if not T0 > 0:
        raise ValueError("T0 must be positive")
    if beta2 == 0:
        return math.inf
    return T0 ** 2 / abs(beta2)


def save_signal(sig: DualPolSignal, path) -> None:
    """Write little-endian float64 ``re_x, im_x, re_y, im_y`` plus a JSON sidecar."""
    path = Path(path)
    inter = np.empty((len(sig), 4), dtype="<f8")
    inter[:, 0] = sig.samples_x.real
    inter[:, 1] = sig.samples_x.imag
    inter[:, 2] = sig.samples_y.real
    inter[:, 3] = sig.samples_y.imag
    inter.tofile(path)
    meta = {"sample_rate": sig.sample_rate, "avg_power": sig.avg_power,
            "n_samples": len(sig), "layout": "re_x,im_x,re_y,im_y", "dtype": "<f8"}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2))


def load_signal(path) -> DualPolSignal:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    raw = np.fromfile(path, dtype="<f8").reshape(-1, 4)
    return DualPolSignal.from_xy(raw[:, 0] + 1j * raw[:, 1], raw[:, 2] + 1j * raw[:, 3],
                                 meta["sample_rate"], meta["avg_power"])
