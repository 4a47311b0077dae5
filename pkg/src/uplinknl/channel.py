"""Fiber/HPOA propagation, free-space loss and receiver noise.

Propagation works on the normalized envelope ``u`` (unit mean power); the
longitudinal power profile ``g(z)`` carries all gain and loss, so the only
physical scale is the output power ``P``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants as const
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.optimize import brentq

from . import kernels
from .sigkit import DualPolSignal

log = logging.getLogger(__name__)

WAVELENGTH = 1550e-9


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


def dbm2w(p_dbm):
    return 1e-3 * db2lin(p_dbm)


def w2dbm(p_w):
    return lin2db(np.asarray(p_w, dtype=float) / 1e-3)


def beta2_from_dispersion(d_ps_nm_km: float, wavelength: float = WAVELENGTH) -> float:
    """Group-velocity dispersion in s^2/m from D in ps/(nm km)."""
    d = d_ps_nm_km * 1e-6  # s/m^2
    return -d * wavelength ** 2 / (2 * math.pi * const.c)


@dataclass(frozen=True)
class FiberSegmentProfile:
    """One fiber section: ``g`` is tabulated on ``z`` and equals 1 at the segment end."""

    length: float
    gamma: float
    beta2: float
    alpha: float
    z: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    is_active: bool = False
    gain: float = 1.0
    noise_figure: float = 1.0

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("segment length must be positive")
        if np.any(np.asarray(self.g) <= 0):
            raise ValueError("power profile must be positive")
        if abs(self.g[-1] - 1.0) > 1e-9:
            raise ValueError("power profile must equal 1 at the segment end")

    @classmethod
    def passive(cls, length_m, gamma_per_W_km, alpha_db_km=0.2, D_ps_nm_km=17.0,
                beta2_ps2_km=None, n_grid=2001):
        alpha = alpha_db_km / (10 * math.log10(math.e)) / 1e3
        z = np.linspace(0.0, length_m, n_grid)
        g = np.exp(-alpha * (z - length_m))
        return cls(length_m, gamma_per_W_km * 1e-3, _beta2(D_ps_nm_km, beta2_ps2_km), alpha, z, g)

    @classmethod
    def active(cls, length_m, gamma_per_W_km, gain_db, nf_db=5.0, alpha_db_km=0.2,
               D_ps_nm_km=17.0, beta2_ps2_km=None, n_grid=2001):
        """Exponential-gain section with net power gain ``gain_db`` over its length."""
        alpha = alpha_db_km / (10 * math.log10(math.e)) / 1e3
        g0 = gain_db / (10 * math.log10(math.e)) / length_m
        z = np.linspace(0.0, length_m, n_grid)
        g = np.exp(g0 * (z - length_m))
        return cls(length_m, gamma_per_W_km * 1e-3, _beta2(D_ps_nm_km, beta2_ps2_km), alpha,
                   z, g, True, float(db2lin(gain_db)), float(db2lin(nf_db)))

    @classmethod
    def from_config(cls, cfg: dict) -> "FiberSegmentProfile":
        kw = dict(length_m=cfg["length_m"], gamma_per_W_km=cfg["gamma_per_W_km"],
                  alpha_db_km=cfg.get("alpha_db_km", 0.2),
                  D_ps_nm_km=cfg.get("D_ps_nm_km", 17.0),
                  beta2_ps2_km=cfg.get("beta2_ps2_km"))
        if cfg.get("gain_db") is not None:
            return cls.active(gain_db=cfg["gain_db"], nf_db=cfg.get("nf_db", 5.0), **kw)
        return cls.passive(**kw)

    @property
    def input_ratio(self) -> float:
        """Input over output power of this segment, ``g(0)``."""
        return float(self.g[0])

    def nonlinear_integral(self) -> float:
        """``int gamma g(z) dz`` by trapezoidal quadrature on the stored grid."""
        return float(self.gamma * trapezoid(self.g, self.z))


def _beta2(d_ps_nm_km, beta2_ps2_km):
    if beta2_ps2_km is not None:
        return beta2_ps2_km * 1e-24 / 1e3
    return beta2_from_dispersion(d_ps_nm_km)


def _output_scales(segments) -> list:
    # segment i delivers P * prod_{j>i} g_j(0) to the next one
    scales, acc = [], 1.0
    for seg in reversed(segments):
        scales.append(acc)
        acc *= seg.input_ratio
    return scales[::-1]


def characteristic_nonlinear_power(segments) -> float:
    """``P_NL = (int_0^L gamma g(z) dz)^-1`` in W over a chain of segments."""
    segments = list(segments)
    total = sum(s * seg.nonlinear_integral() for s, seg in zip(_output_scales(segments), segments))
    if not total > 0:
        raise ValueError("nonlinear integral is zero; P_NL is undefined")
    return 1.0 / total


def average_nlpr(P: float, segments) -> float:
    """Average accumulated nonlinear phase ``P / P_NL``."""
    return P * 1.0 / characteristic_nonlinear_power(segments)


@dataclass(frozen=True)
class HpoaModel:
    """Fiber chain of a high-power amplifier plus its lumped gain and noise figure."""

    segments: tuple
    gain: float
    noise_figure: float
    name: str = "hpoa"

    def p_nl(self) -> float:
        return characteristic_nonlinear_power(self.segments)


def default_hpoa(target_pnl_dbm: float = 42.7, nf_db: float = 5.0) -> HpoaModel:
    """30 m doped fiber plus 3 m patch cord, active gain calibrated to ``target_pnl_dbm``."""

    def build(gain_db):
        return (FiberSegmentProfile.active(30.0, 3.6, gain_db, nf_db, 0.2, 17.0),
                FiberSegmentProfile.passive(3.0, 1.27, 0.2, 17.0))

    def err(gain_db):
        return float(w2dbm(characteristic_nonlinear_power(build(gain_db)))) - target_pnl_dbm

    gain_db = brentq(err, 0.0, 60.0, xtol=1e-10)
    segs = build(gain_db)
    log.debug("default HPOA calibrated to %.3f dB active gain", gain_db)
    return HpoaModel(segs, float(db2lin(gain_db)), float(db2lin(nf_db)), "edfa_30m+smf_3m")


def smf_patchcord(length_m: float, hpoa_gain_db: float = 20.0, nf_db: float = 5.0) -> HpoaModel:
    """Only a passive SMF section is nonlinear (amplifier treated as linear)."""
    seg = FiberSegmentProfile.passive(length_m, 1.27, 0.2, 17.0)
    return HpoaModel((seg,), float(db2lin(hpoa_gain_db)), float(db2lin(nf_db)), f"smf_{length_m:g}m")


def large_mode_area_hpoa(p_out_dbm: float, p_in_dbm: float = 27.0, nf_db: float = 5.0) -> HpoaModel:
    """6.2 m low-nonlinearity doped fiber amplifying ``p_in_dbm`` to ``p_out_dbm``."""
    gain_db = p_out_dbm - p_in_dbm
    if gain_db <= 0:
        raise ValueError("output power must exceed the input power")
    seg = FiberSegmentProfile.active(6.2, 0.5, gain_db, nf_db, 0.2, 17.0)
    return HpoaModel((seg,), float(db2lin(gain_db)), float(db2lin(nf_db)), "lma_6.2m")


@dataclass(frozen=True)
class LinkNoiseBudget:
    """Free-space loss and receiver/amplifier noise parameters (linear units)."""

    fso_loss: float
    symbol_rate: float
    rx_noise_figure: float = float(db2lin(4.0))
    rx_gain: float = 1e3
    hpoa_gain: float = 1.0
    hpoa_noise_figure: float = 1.0
    wavelength: float = WAVELENGTH

    def __post_init__(self):
        for name in ("fso_loss", "symbol_rate", "rx_noise_figure", "rx_gain",
                     "hpoa_gain", "hpoa_noise_figure", "wavelength"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.fso_loss < 1:
            raise ValueError("fso_loss must be >= 1 (a loss, not a gain)")

    @property
    def photon_energy(self) -> float:
        return const.h * const.c / self.wavelength

    def snr(self, P: float, include_hpoa: bool = True) -> float:
        """Per-symbol SNR with both noise terms (HPOA term optional)."""
        den = self.fso_loss * self.rx_noise_figure
        if include_hpoa:
            den += self.hpoa_gain * self.hpoa_noise_figure
        return P / (self.symbol_rate * self.photon_energy * den)

    def snr_approx(self, P: float) -> float:
        """Strong-loss approximation (receiver noise only)."""
        return P / (self.symbol_rate * self.photon_energy * self.fso_loss * self.rx_noise_figure)

    def hpoa_ase_psd(self) -> float:
        """ASE PSD at the HPOA output per polarization, ``G F h nu / 2``."""
        return self.hpoa_gain * self.hpoa_noise_figure * self.photon_energy / 2


def loss_for_snr(budget: LinkNoiseBudget, P: float, snr: float) -> float:
    """Solve the two-term SNR expression for the free-space loss (linear)."""
    return (P / (budget.symbol_rate * budget.photon_energy * snr)
            - budget.hpoa_gain * budget.hpoa_noise_figure) / budget.rx_noise_figure


@dataclass(frozen=True)
class SsfmSettings:
    max_phase_per_step: float = 0.01
    min_steps_per_segment: int = 4
    distributed_ase: bool = False
    max_steps: int = 500_000

    def __post_init__(self):
        if not self.max_phase_per_step > 0:
            raise ValueError("max_phase_per_step must be positive")


def zero_dispersion_propagate(sig: DualPolSignal, phi_bar: float) -> DualPolSignal:
    """Closed-form dispersionless, noiseless solution: rotate by ``-phi_bar |u|^2``."""
    if phi_bar < 0:
        raise ValueError("phi_bar must be nonnegative")
    if phi_bar == 0:
        return sig
    return sig.with_samples(kernels.spm_rotate(sig.samples, -phi_bar))


def _complex_noise(rng, shape) -> np.ndarray:
    # unit total variance per complex sample
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def ssfm_propagate(sig: DualPolSignal, segments, P: float, settings: SsfmSettings | None = None,
                   rng=None, ase_psd: float = 0.0) -> DualPolSignal:
    """Symmetric split-step solution of the normalized Manakov equation.

    Steps are placed so each carries the same nonlinear phase, bounded by
    ``settings.max_phase_per_step`` at the burst's peak power.  With
    ``settings.distributed_ase`` and ``ase_psd`` (W/Hz per polarization at the
    output), Gaussian increments are injected along active segments.
    """
    settings = settings or SsfmSettings()
    segments = list(segments)
    u = np.array(sig.samples, dtype=complex)
    omega = 2 * math.pi * sig.freqs()
    peak = float(np.max(np.sum(np.abs(u) ** 2, axis=0)))
    scales = _output_scales(segments)
    if any(seg.beta2 != 0 for seg in segments):
        peak *= 1.25  # dispersion can raise peaks a little between steps

    plans = []
    for seg, sc in zip(segments, scales):
        cum = cumulative_trapezoid(seg.gamma * sc * seg.g, seg.z, initial=0.0)
        n = max(settings.min_steps_per_segment,
                math.ceil(cum[-1] * P * peak / settings.max_phase_per_step))
        plans.append((seg, sc, cum, n))
    total_steps = sum(p[3] for p in plans)
    if total_steps > settings.max_steps:
        raise RuntimeError(
            f"SSFM needs {total_steps} steps (> {settings.max_steps}) for peak power "
            f"{peak:.3g} at P={P:.3g} W; raise max_phase_per_step or max_steps")

    inject = settings.distributed_ase and ase_psd > 0
    if inject:
        rng = rng if rng is not None else np.random.default_rng()
        var_total = ase_psd * sig.sample_rate / P
        active_w = sum(trapezoid(1.0 / (sc * seg.g), seg.z) for seg, sc, _, _ in plans if seg.is_active)

    for seg, sc, cum, n in plans:
        bounds = np.interp(np.linspace(0, cum[-1], n + 1), cum, seg.z)
        dphi = P * cum[-1] / n
        disp = seg.beta2 != 0
        pending = 0.0
        spec_op = None
        for i in range(n):
            h = bounds[i + 1] - bounds[i]
            pending += h / 2
            if disp and pending > 0:
                spec_op = np.exp(-0.5j * seg.beta2 * omega ** 2 * pending)
                u = np.fft.ifft(np.fft.fft(u, axis=-1) * spec_op, axis=-1)
            pending = h / 2
            u = kernels.spm_rotate(u, -dphi)
            if inject and seg.is_active:
                zz = np.linspace(bounds[i], bounds[i + 1], 9)
                w = trapezoid(1.0 / (sc * np.interp(zz, seg.z, seg.g)), zz) / active_w
                u = u + math.sqrt(var_total * w) * _complex_noise(rng, u.shape)
        if disp and pending > 0:
            u = np.fft.ifft(np.fft.fft(u, axis=-1) * np.exp(-0.5j * seg.beta2 * omega ** 2 * pending),
                            axis=-1)
    return sig.with_samples(u)


def add_receiver_noise(sig: DualPolSignal, budget: LinkNoiseBudget, P: float, rng=None,
                       noise=None, include_hpoa: bool = True):
    """Add white circular Gaussian noise giving the per-symbol SNR of the budget.

    ``noise`` may supply a unit-variance complex template of shape ``(2, n)``
    so several noise levels share one realization.  Returns ``(signal, snr)``.
    """
    snr = budget.snr(P, include_hpoa)
    if not snr > 0 or not math.isfinite(snr):
        raise ValueError(f"infeasible SNR {snr}")
    if noise is None:
        rng = rng if rng is not None else np.random.default_rng()
        noise = _complex_noise(rng, sig.samples.shape)
    sps = sig.sample_rate / budget.symbol_rate
    sigma = math.sqrt(sps / (2 * snr))
    return sig.with_samples(sig.samples + sigma * noise), snr


def simplified_channel(sig: DualPolSignal, phi_bar: float, budget: LinkNoiseBudget, P: float,
                       rng=None, noise=None):
    """Memoryless phase rotation followed by AWGN; returns ``(signal, snr)``."""
    return add_receiver_noise(zero_dispersion_propagate(sig, phi_bar), budget, P, rng, noise)
