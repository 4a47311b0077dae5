"""Closed-form SPM spectral broadening for Gaussian inputs without dispersion.

For a zero-mean circular Gaussian field with ``M`` modes, each with
autocorrelation ``R(0, tau)`` and ``R(0, 0) = 1/M``, a memoryless rotation by
``phi_bar * |u|^2`` gives::

    R(L, tau) = R(0, tau) / [1 + phi_bar^2 (1/M^2 - |R(0, tau)|^2)]^(M + 1)

and the PSD follows by Fourier transforming over the lag.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .sigkit import PulseShape, Psd

log = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-6
DECAY_GUARD = 1e-6
NEGATIVE_GUARD = 1e-6


@dataclass(frozen=True)
class AutocorrelationCurve:
    """Per-mode autocorrelation on a symmetric lag grid ``lags`` (s), ``values[mid] = R(0)``."""

    lags: np.ndarray
    values: np.ndarray
    mode_count: int = 2

    def __post_init__(self):
        lags = np.asarray(self.lags, dtype=float)
        vals = np.asarray(self.values, dtype=complex)
        if lags.shape != vals.shape or lags.ndim != 1 or lags.size < 2:
            raise ValueError("lags and values must be equal-length 1D arrays")
        if self.mode_count < 1:
            raise ValueError("mode_count must be >= 1")
        if lags[lags.size // 2] != 0.0:
            raise ValueError("lag grid must have tau = 0 at index len // 2")
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "values", vals)

    @property
    def r0(self) -> complex:
        return self.values[self.lags.size // 2]

    @property
    def spacing(self) -> float:
        return float(self.lags[1] - self.lags[0])


def _check_norm(curve: AutocorrelationCurve, M: int):
    if abs(curve.r0 - 1.0 / M) > NORMALIZATION_TOL / M:
        raise ValueError(f"autocorrelation must satisfy R(0) = 1/{M}; got {curve.r0:.6g}")


def evolve_autocorrelation_mmode(curve: AutocorrelationCurve, phi_bar: float,
                                 M: int | None = None) -> AutocorrelationCurve:
    """Apply the ``M``-mode evolution law pointwise."""
    M = curve.mode_count if M is None else M
    _check_norm(curve, M)
    r = curve.values
    den = (1.0 + phi_bar ** 2 * (1.0 / M ** 2 - np.abs(r) ** 2)) ** (M + 1)
    out = r / den
    out[curve.lags.size // 2] = curve.r0  # bracket is exactly 1 at tau = 0
    return AutocorrelationCurve(curve.lags, out, M)


def evolve_autocorrelation(curve: AutocorrelationCurve, phi_bar: float) -> AutocorrelationCurve:
    """Dual-polarization case (``M = 2``, cubic denominator)."""
    return evolve_autocorrelation_mmode(curve, phi_bar, 2)


@dataclass(frozen=True)
class AnalyticPsd(Psd):
    """:class:`Psd` plus the most negative excursion relative to the peak."""

    min_relative: float = 0.0

    @property
    def nonnegative(self) -> bool:
        return self.min_relative >= -NEGATIVE_GUARD


def psd_from_autocorrelation(curve: AutocorrelationCurve) -> AnalyticPsd:
    """Wiener–Khinchin transform on the lag grid (per mode, W/Hz for unit power).

    Both polarizations get the same curve.  Negative values beyond
    ``-1e-6 * peak`` are kept and flagged with a warning, never clipped.
    """
    v = curve.values
    edge = max(abs(v[0]), abs(v[-1]))
    if edge > DECAY_GUARD * abs(curve.r0):
        raise ValueError(f"autocorrelation has not decayed at the lag-grid edges "
                         f"(|R| = {edge:.3g}); enlarge the lag span")
    dt = curve.spacing
    n = v.size
    spec = np.fft.fft(np.fft.ifftshift(v)) * dt
    if np.max(np.abs(spec.imag)) > 1e-9 * np.max(np.abs(spec.real)):
        log.warning("autocorrelation is not Hermitian; discarding imaginary PSD part")
    s = np.fft.fftshift(spec.real)
    freq = np.fft.fftshift(np.fft.fftfreq(n, d=dt))
    peak = s.max()
    min_rel = float(min(s.min() / peak, 0.0))
    if min_rel < -NEGATIVE_GUARD:
        warnings.warn(f"analytic PSD dips to {min_rel:.2e} x peak (negative)", stacklevel=2)
    return AnalyticPsd(freq, np.vstack([s, s]), float(freq[1] - freq[0]), min_rel)


def input_autocorrelation_from_pulse(pulse: PulseShape, n: int, n_symbols: int,
                                     mode_count: int = 2) -> AutocorrelationCurve:
    """``R(0, tau)`` of i.i.d. unit-energy symbols shaped by ``pulse``.

    The lag grid matches a simulated burst of ``n_symbols`` at ``n``
    samples/symbol (spacing ``T/n``), so analytic and estimated PSDs share bins.
    For an RRC pulse this is the raised-cosine impulse response.
    """
    size = n * n_symbols
    f_norm = np.fft.fftfreq(size, d=1.0 / n)
    r = np.fft.ifft(pulse.raised_cosine(f_norm)).real
    r = np.fft.fftshift(r / r[0]) / mode_count
    lags = (np.arange(size) - size // 2) * pulse.symbol_interval / n
    return AutocorrelationCurve(lags, r.astype(complex), mode_count)
