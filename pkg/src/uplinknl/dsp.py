"""Transmitter and receiver DSP chains with split nonlinear phase compensation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .metrics import complex_gain
from .sigkit import (BrickwallFilter, DualPolSignal, PulseShape, SymbolFrame, apply_brickwall,
                     matched_filter_and_sample, modulate, resample)


@dataclass(frozen=True)
class NlpcConfig:
    """Split compensation: ``kappa`` of the phase at TX, the rest at RX."""

    phi_bar: float
    kappa: float = 1.0
    n: int = 2

    def __post_init__(self):
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("kappa must lie in [0, 1]")
        if self.n < 1 or int(self.n) != self.n:
            raise ValueError("n must be a positive integer")
        if self.phi_bar < 0:
            raise ValueError("phi_bar must be nonnegative")


def _rotate(sig, weight):
    if weight == 0:
        return sig
    return sig.with_samples(kernels.spm_rotate(sig.samples, weight))


def nlpc_tx(sig: DualPolSignal, cfg: NlpcConfig) -> DualPolSignal:
    """Pre-rotate each sample by ``+kappa * phi_bar * |x[k]|^2``."""
    return _rotate(sig, cfg.kappa * cfg.phi_bar)


def nlpc_rx(sig: DualPolSignal, cfg: NlpcConfig) -> DualPolSignal:
    """Post-rotate each sample by ``+(1 - kappa) * phi_bar * |y'[k]|^2``."""
    return _rotate(sig, (1.0 - cfg.kappa) * cfg.phi_bar)


def nlpc_complexity(n: int) -> float:
    """Real multiplications per 2D symbol of one NLPC stage at ``n`` samples/symbol."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 5.5 * n


@dataclass(frozen=True)
class ChainConfig:
    """DSP parameters shared by :func:`tx_chain` and :func:`rx_chain`.

    ``n`` is the DSP oversampling (modulation, NLPC, matched filter) and
    ``n_sim`` the grid of the optical channel; ``bandwidth`` is the one-sided
    DAC/ADC limit in Hz (``None`` for unlimited).  ``nlpc`` is ``None`` when
    compensation is off.
    """

    pulse: PulseShape
    n: int = 2
    n_sim: int = 8
    bandwidth: float | None = None
    nlpc: NlpcConfig | None = None

    def __post_init__(self):
        if self.n < 1 or self.n_sim < self.n:
            raise ValueError("need 1 <= n <= n_sim")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.nlpc is not None and self.nlpc.n != self.n:
            raise ValueError("NLPC must run at the chain oversampling factor")

    @property
    def sim_rate(self) -> float:
        return self.n_sim * self.pulse.baud

    def _filter(self, sig):
        if self.bandwidth is None:
            return sig
        return apply_brickwall(sig, BrickwallFilter(self.bandwidth))


def tx_chain(frame: SymbolFrame, cfg: ChainConfig) -> DualPolSignal:
    """Pulse shaping, TX-side NLPC, DAC filter; output on the channel grid at unit power."""
    sig = modulate(frame, cfg.pulse, cfg.n)
    if cfg.nlpc is not None:
        sig = nlpc_tx(sig, cfg.nlpc)
    sig = cfg._filter(resample(sig, cfg.sim_rate))
    # the amplifier sets the launch power: renormalize after filtering
    return sig.with_samples(sig.samples / math.sqrt(sig.power()), bandwidth=sig.bandwidth)


def rx_chain(sig: DualPolSignal, cfg: ChainConfig, reference: SymbolFrame | None = None) -> SymbolFrame:
    """ADC filter, RX-side NLPC, matched filter and symbol-rate sampling.

    With ``reference`` the output is divided by the least-squares complex
    gain against the known symbols.
    """
    sig = resample(cfg._filter(sig), cfg.n * cfg.pulse.baud)
    if cfg.nlpc is not None:
        sig = nlpc_rx(sig, cfg.nlpc)
    out = matched_filter_and_sample(sig, cfg.pulse, cfg.n)
    if reference is None:
        return out
    h = complex_gain(reference.symbols, out.symbols)
    return SymbolFrame(out.symbols / h)
