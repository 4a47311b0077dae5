"""Experiment orchestration: configuration, acceptable-link-loss search and sweeps."""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import evolve_autocorrelation, input_autocorrelation_from_pulse, psd_from_autocorrelation
from .channel import (FiberSegmentProfile, HpoaModel, LinkNoiseBudget, SsfmSettings, db2lin,
                      default_hpoa, dbm2w, large_mode_area_hpoa, lin2db, smf_patchcord, ssfm_propagate,
                      w2dbm, zero_dispersion_propagate)
from .dsp import ChainConfig, NlpcConfig, rx_chain, tx_chain
from .metrics import GmiEstimate, MetricsRecord, evm, gmi_estimate
from .shaping import InfeasibleOperatingPoint, QamConstellation, ShapingScheme
from .sigkit import PulseShape, SymbolFrame, estimate_psd, modulate

log = logging.getLogger(__name__)

LOSS_TOLERANCE_DB = 0.1
BRACKET_HALF_WIDTH_DB = 6.0
GMI_SEARCH_ITERS = 10  # variance search inside the bisection; flat optimum


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted key that failed."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------- config

DEFAULTS = {
    "tx": {"baud": 100e9, "rolloff": 0.05},
    "shaping": {"kind": "lut", "order": 64, "rate": 4.5, "block_length": 4},
    "target_gmi": 3.0,
    "target_rate_bps": None,
    "power_dbm": [float(p) for p in range(30, 51)],
    "nlpc": {"enabled": False, "kappa": 1.0, "n": 2},
    "filters": {"bandwidth_ghz_onesided": 55.0},
    "channel": {"model": "simplified", "hpoa": "default", "p_nl_dbm": None,
                "segments": None, "max_phase_per_step": 0.01, "distributed_ase": False,
                "hpoa_input_dbm": 0.0},
    "budget": {"rx_nf_db": 4.0, "rx_gain_db": 30.0, "hpoa_nf_db": 5.0, "wavelength_nm": 1550.0},
    "mc": {"symbols": 2 ** 14, "bursts": 4, "n_sim": 8},
    "seed": 1,
}

HPOA_PRESETS = ("default", "smf_3m", "smf_43m", "lma_6.2m", "custom")


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        p = f"{path}{key}"
        if key not in base:
            raise ConfigError(p, "unknown key")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, p + ".")
        else:
            out[key] = val
    return out


def _positive(value, path, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not value > 0 or not math.isfinite(value):
        raise ConfigError(path, f"must be positive, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(path, f"must be an integer, got {value!r}")
    return int(value) if integer else float(value)


@dataclass(frozen=True)
class LinkConfig:
    """Validated experiment configuration; build with :meth:`from_dict`.

    ``raw`` keeps the fully merged dictionary (defaults filled in), which is
    what the config hash covers.
    """

    raw: dict = field(repr=False)

    @classmethod
    def from_dict(cls, d: dict | None = None) -> "LinkConfig":
        raw = _merge(DEFAULTS, d or {})
        cls._validate(raw)
        return cls(raw)

    @classmethod
    def from_file(cls, path) -> "LinkConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"not valid JSON: {exc}") from exc
        return cls.from_dict(data.get("config", data))

    @staticmethod
    def _validate(r: dict):
        _positive(r["tx"]["baud"], "tx.baud")
        ro = r["tx"]["rolloff"]
        if not isinstance(ro, (int, float)) or not 0 <= ro <= 1:
            raise ConfigError("tx.rolloff", "must lie in [0, 1]")
        s = r["shaping"]
        try:
            ShapingScheme(s["kind"], s["order"], s["rate"], s["block_length"])
        except (ValueError, TypeError) as exc:
            raise ConfigError("shaping", str(exc)) from exc
        if s["kind"] != "uniform":
            if not 2 < s["rate"] <= math.log2(s["order"]):
                raise ConfigError("shaping.rate", "must lie in (2, log2(order)]")
        _positive(r["target_gmi"], "target_gmi")
        if r["target_rate_bps"] is not None:
            _positive(r["target_rate_bps"], "target_rate_bps")
        grid = r["power_dbm"]
        if not isinstance(grid, list) or not grid:
            raise ConfigError("power_dbm", "must be a nonempty list")
        for i, p in enumerate(grid):
            if not isinstance(p, (int, float)) or not math.isfinite(p):
                raise ConfigError(f"power_dbm[{i}]", "must be a finite number")
        nl = r["nlpc"]
        if not 0 <= nl["kappa"] <= 1:
            raise ConfigError("nlpc.kappa", "must lie in [0, 1]")
        _positive(nl["n"], "nlpc.n", integer=True)
        bw = r["filters"]["bandwidth_ghz_onesided"]
        if bw is not None:
            _positive(bw, "filters.bandwidth_ghz_onesided")
        ch = r["channel"]
        if ch["model"] not in ("simplified", "ssfm"):
            raise ConfigError("channel.model", "must be 'simplified' or 'ssfm'")
        if ch["hpoa"] not in HPOA_PRESETS:
            raise ConfigError("channel.hpoa", f"must be one of {HPOA_PRESETS}")
        if ch["p_nl_dbm"] is not None:
            if ch["model"] != "simplified":
                raise ConfigError("channel.p_nl_dbm", "only valid with the simplified model")
            if not isinstance(ch["p_nl_dbm"], (int, float)):
                raise ConfigError("channel.p_nl_dbm", "must be a number")
        if ch["hpoa"] == "custom":
            segs = ch["segments"]
            if not segs:
                raise ConfigError("channel.segments", "custom HPOA needs a segment list")
            for i, sd in enumerate(segs):
                for key in ("length_m", "gamma_per_W_km"):
                    if key not in sd:
                        raise ConfigError(f"channel.segments[{i}].{key}", "missing")
                    _positive(sd[key], f"channel.segments[{i}].{key}")
        _positive(ch["max_phase_per_step"], "channel.max_phase_per_step")
        for key in ("rx_nf_db", "rx_gain_db", "hpoa_nf_db"):
            if not isinstance(r["budget"][key], (int, float)):
                raise ConfigError(f"budget.{key}", "must be a number")
        _positive(r["budget"]["wavelength_nm"], "budget.wavelength_nm")
        _positive(r["mc"]["symbols"], "mc.symbols", integer=True)
        _positive(r["mc"]["bursts"], "mc.bursts", integer=True)
        _positive(r["mc"]["n_sim"], "mc.n_sim", integer=True)
        if r["mc"]["n_sim"] < nl["n"]:
            raise ConfigError("mc.n_sim", "must be >= nlpc.n")
        if not isinstance(r["seed"], int) or r["seed"] < 0:
            raise ConfigError("seed", "must be a nonnegative integer")

    def with_updates(self, **paths) -> "LinkConfig":
        """Copy with dotted-path overrides, e.g. ``with_updates(**{"nlpc.kappa": 0.6})``."""
        raw = copy.deepcopy(self.raw)
        for path, val in paths.items():
            node = raw
            *head, last = path.split(".")
            for key in head:
                node = node[key]
            if last not in node:
                raise ConfigError(path, "unknown key")
            node[last] = val
        return LinkConfig.from_dict(raw)

    def get(self, path: str):
        node = self.raw
        for key in path.split("."):
            node = node[key]
        return node

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # convenience views
    @property
    def baud(self) -> float:
        return float(self.raw["tx"]["baud"])

    @property
    def scheme(self) -> ShapingScheme:
        s = self.raw["shaping"]
        return ShapingScheme(s["kind"], s["order"], s["rate"], s["block_length"])

    @property
    def target_gmi(self) -> float:
        if self.raw["target_rate_bps"] is not None:
            return self.raw["target_rate_bps"] / (2 * self.baud)
        return float(self.raw["target_gmi"])


# ---------------------------------------------------------------- simulation


def hpoa_for(cfg: LinkConfig, P: float) -> HpoaModel:
    ch = cfg.raw["channel"]
    nf = cfg.raw["budget"]["hpoa_nf_db"]
    kind = ch["hpoa"]
    if kind == "default":
        return default_hpoa(42.7, nf)
    if kind == "smf_3m":
        return smf_patchcord(3.0, nf_db=nf)
    if kind == "smf_43m":
        return smf_patchcord(43.0, nf_db=nf)
    if kind == "lma_6.2m":
        return large_mode_area_hpoa(float(w2dbm(P)), 27.0, nf)
    segs = tuple(FiberSegmentProfile.from_config(s) for s in ch["segments"])
    return HpoaModel(segs, 1.0, float(db2lin(nf)), "custom")


def p_nl_for(cfg: LinkConfig, P: float) -> float:
    """Characteristic nonlinear power (W) seen at output power ``P``."""
    if cfg.raw["channel"]["p_nl_dbm"] is not None:
        return float(dbm2w(cfg.raw["channel"]["p_nl_dbm"]))
    return hpoa_for(cfg, P).p_nl()


def _hpoa_input_w(cfg):
    if cfg.raw["channel"]["hpoa"] == "lma_6.2m":
        return float(dbm2w(27.0))
    return float(dbm2w(cfg.raw["channel"]["hpoa_input_dbm"]))


def noise_budget(cfg: LinkConfig, P: float, loss_db: float) -> LinkNoiseBudget:
    b = cfg.raw["budget"]
    return LinkNoiseBudget(
        fso_loss=float(db2lin(loss_db)), symbol_rate=cfg.baud,
        rx_noise_figure=float(db2lin(b["rx_nf_db"])), rx_gain=float(db2lin(b["rx_gain_db"])),
        hpoa_gain=max(P / _hpoa_input_w(cfg), 1.0), hpoa_noise_figure=float(db2lin(b["hpoa_nf_db"])),
        wavelength=b["wavelength_nm"] * 1e-9)


def burst_rng(seed: int, burst: int) -> np.random.Generator:
    """Per-burst stream; shared by all grid points for common random numbers."""
    return np.random.default_rng(np.random.SeedSequence([seed, burst]))


def chain_for(cfg: LinkConfig, phi_bar: float) -> ChainConfig:
    nl = cfg.raw["nlpc"]
    bw = cfg.raw["filters"]["bandwidth_ghz_onesided"]
    pulse = PulseShape(cfg.raw["tx"]["rolloff"], 1.0 / cfg.baud)
    nlpc = NlpcConfig(phi_bar, nl["kappa"], nl["n"]) if nl["enabled"] else None
    return ChainConfig(pulse, nl["n"], cfg.raw["mc"]["n_sim"],
                       None if bw is None else bw * 1e9, nlpc)


@dataclass
class PreparedPoint:
    """Noiseless received bursts plus fixed unit noise for one launch power."""

    P: float
    phi_bar: float
    p_nl: float
    frames: list
    clean: list
    noise: list
    chain: ChainConfig
    include_hpoa: bool


def prepare_point(cfg: LinkConfig, P_dbm: float, dm=None) -> PreparedPoint:
    P = float(dbm2w(P_dbm))
    p_nl = p_nl_for(cfg, P)
    phi_bar = P / p_nl
    chain = chain_for(cfg, phi_bar)
    scheme = cfg.scheme
    dm = dm if dm is not None else scheme.matcher()
    ch = cfg.raw["channel"]
    settings = SsfmSettings(ch["max_phase_per_step"], distributed_ase=ch["distributed_ase"])
    frames, clean, noise = [], [], []
    for b in range(cfg.raw["mc"]["bursts"]):
        rng = burst_rng(cfg.raw["seed"], b)
        frame = scheme.draw_frame(cfg.raw["mc"]["symbols"], rng, dm)
        sig = tx_chain(frame, chain)
        unit = (rng.standard_normal(sig.samples.shape)
                + 1j * rng.standard_normal(sig.samples.shape)) / math.sqrt(2)
        if ch["model"] == "simplified":
            out = zero_dispersion_propagate(sig, phi_bar)
        else:
            hp = hpoa_for(cfg, P)
            ase = noise_budget(cfg, P, 0.0).hpoa_ase_psd() if settings.distributed_ase else 0.0
            out = ssfm_propagate(sig, hp.segments, P, settings, rng, ase)
        frames.append(frame)
        clean.append(out)
        noise.append(unit)
    return PreparedPoint(P, phi_bar, p_nl, frames, clean, noise, chain,
                         not (ch["model"] == "ssfm" and settings.distributed_ase))


def received_symbols(cfg: LinkConfig, pt: PreparedPoint, loss_db: float):
    """Concatenated transmitted and gain-corrected received 2D symbols, and the SNR."""
    budget = noise_budget(cfg, pt.P, loss_db)
    snr = budget.snr(pt.P, pt.include_hpoa)
    tx, rx = [], []
    for frame, sig, unit in zip(pt.frames, pt.clean, pt.noise):
        sigma = math.sqrt(cfg.raw["mc"]["n_sim"] / (2 * snr))
        noisy = sig.with_samples(sig.samples + sigma * unit)
        out = rx_chain(noisy, pt.chain, frame)
        tx.append(frame.flat())
        rx.append(out.flat())
    return np.concatenate(tx), np.concatenate(rx), snr


def gmi_at(cfg: LinkConfig, pt: PreparedPoint, loss_db: float) -> GmiEstimate:
    tx, rx, _ = received_symbols(cfg, pt, loss_db)
    return gmi_estimate(tx, rx, QamConstellation(cfg.scheme.order), iters=GMI_SEARCH_ITERS)


def awgn_gmi_threshold_snr(target_gmi: float) -> float:
    """Shannon bound on the SNR (linear) needed for ``target_gmi`` bits/2D."""
    return 2.0 ** target_gmi - 1.0


@dataclass
class LossResult:
    power_dbm: float
    loss_db: float | None
    record: MetricsRecord | None
    evaluations: list


def acceptable_link_loss(cfg: LinkConfig, P_dbm: float, pt: PreparedPoint | None = None) -> LossResult:
    """Largest free-space loss (dB) meeting the target GMI at launch power ``P_dbm``.

    Bisection on the loss in dB with common random numbers (fixed symbols and
    unit noise; only the noise scale changes) until the bracket is below
    0.1 dB.  ``loss_db`` is ``None`` when the target is missed even at 0 dB.
    """
    target = cfg.target_gmi
    order = cfg.scheme.order
    if target >= math.log2(order):
        raise InfeasibleOperatingPoint(
            f"target GMI {target} is not below the {math.log2(order):g} bits/2D saturation")
    pt = pt or prepare_point(cfg, P_dbm)
    evals = []
    cache = {}

    def gmi(loss):
        if loss not in cache:
            est = gmi_at(cfg, pt, loss)
            cache[loss] = est
            evals.append((loss, est.gmi_bits_per_2d))
        return cache[loss].gmi_bits_per_2d

    ref = noise_budget(cfg, pt.P, 0.0)
    snr_req = awgn_gmi_threshold_snr(target)
    lin = (pt.P / (ref.symbol_rate * ref.photon_energy * snr_req)
           - ref.hpoa_gain * ref.hpoa_noise_figure) / ref.rx_noise_figure
    center = float(lin2db(lin)) if lin > 1 else 0.0
    hi, lo = center + BRACKET_HALF_WIDTH_DB, center - BRACKET_HALF_WIDTH_DB
    while gmi(hi) >= target:
        lo, hi = hi, hi + BRACKET_HALF_WIDTH_DB
    lo = max(lo, 0.0)
    if gmi(lo) < target:
        if lo == 0.0 or gmi(0.0) < target:
            return LossResult(P_dbm, None, None, evals)
        while gmi(lo) < target:
            hi, lo = lo, max(lo - BRACKET_HALF_WIDTH_DB, 0.0)
    while hi - lo >= LOSS_TOLERANCE_DB:
        mid = 0.5 * (lo + hi)
        if gmi(mid) >= target:
            lo = mid
        else:
            hi = mid
    loss = 0.5 * (lo + hi)
    _check_monotone(evals, P_dbm)
    tx, rx, snr = received_symbols(cfg, pt, loss)
    est = gmi_estimate(tx, rx, QamConstellation(order))
    # GMI confidence mapped to loss through the local slope of the bracket
    slope = (cache[lo].gmi_bits_per_2d - cache[hi].gmi_bits_per_2d) / (hi - lo)
    loss_ci = est.confidence_half_width / slope if slope > 0 else math.inf
    rec = MetricsRecord(
        gmi_bits_2d=est.gmi_bits_per_2d, snr_db=float(lin2db(snr)), evm_db=evm(tx, rx),
        seeds=[cfg.raw["seed"]], config_hash=cfg.config_hash,
        extra={"power_dbm": P_dbm, "acceptable_loss_db": loss, "phi_bar": pt.phi_bar,
               "p_nl_dbm": float(w2dbm(pt.p_nl)), "gmi_ci_bits": est.confidence_half_width,
               "loss_ci_db": loss_ci,
               "snr_approx_db": float(lin2db(noise_budget(cfg, pt.P, loss).snr_approx(pt.P)))})
    return LossResult(P_dbm, loss, rec, evals)


def _check_monotone(evals, P_dbm):
    pts = sorted(evals)
    if len(pts) < 3:
        return
    idx = np.linspace(0, len(pts) - 1, 3).astype(int)
    g = [pts[i][1] for i in idx]
    if not (g[0] >= g[1] >= g[2]):
        log.warning("GMI not monotone in loss at P=%.1f dBm: %s", P_dbm, [pts[i] for i in idx])


@dataclass
class MaxLossResult:
    max_loss_db: float | None
    optimal_power_dbm: float | None
    curve: list
    edge_warning: bool = False


def max_acceptable_link_loss(cfg: LinkConfig, powers=None) -> MaxLossResult:
    """Peak acceptable loss over the launch-power grid (1 dB steps recommended)."""
    powers = list(cfg.raw["power_dbm"] if powers is None else powers)
    dm = cfg.scheme.matcher()
    curve = []
    for p in powers:
        res = acceptable_link_loss(cfg, p, prepare_point(cfg, p, dm))
        curve.append(res)
    losses = [(-math.inf if r.loss_db is None else r.loss_db) for r in curve]
    if all(math.isinf(x) for x in losses):
        return MaxLossResult(None, None, curve)
    i = int(np.argmax(losses))
    edge = i in (0, len(losses) - 1) and len(losses) > 1
    if edge:
        warnings.warn("maximum acceptable loss at the edge of the power grid; extend grid",
                      stacklevel=2)
    return MaxLossResult(losses[i], powers[i], curve, edge)


# ---------------------------------------------------------------- sweeps

SWEEP_AXES = {
    "power": None,
    "kappa": "nlpc.kappa",
    "block_length": "shaping.block_length",
    "baud": "tx.baud",
    "p_nl": "channel.p_nl_dbm",
    "n": "nlpc.n",
    "hpoa": "channel.hpoa",
}


@dataclass
class SweepResult:
    axis: str
    values: list
    points: list
    config_hash: str
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1, default=_json_default)

    def rows(self):
        """Flat ``(value, power_dbm, loss_db)`` rows over every evaluated point."""
        for v, pt in zip(self.values, self.points):
            for p, loss in pt.get("curve", []):
                yield v, p, loss


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def point_config(cfg: LinkConfig, axis: str, value) -> LinkConfig:
    if axis == "power":
        return cfg
    if axis not in SWEEP_AXES:
        raise ConfigError("sweep.axis", f"unknown axis {axis!r}")
    upd = {SWEEP_AXES[axis]: value}
    if axis == "n":
        upd["mc.n_sim"] = max(int(value), cfg.raw["mc"]["n_sim"])
    if axis == "p_nl":
        # keep the grid aligned with P/P_NL so every P_NL sees the same phases
        base = cfg.raw["channel"]["p_nl_dbm"]
        if base is None:
            raise ConfigError("channel.p_nl_dbm", "p_nl sweeps need a reference P_NL")
        upd["power_dbm"] = [p + value - base for p in cfg.raw["power_dbm"]]
    return cfg.with_updates(**upd)


def _run_point(args):
    raw, axis, value = args
    try:
        cfg = point_config(LinkConfig(raw), axis, value)
        if axis == "power":
            res = acceptable_link_loss(cfg, value)
            return {"value": value, "loss_db": res.loss_db,
                    "record": asdict(res.record) if res.record else None}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = max_acceptable_link_loss(cfg)
        return {"value": value, "max_loss_db": res.max_loss_db,
                "optimal_power_dbm": res.optimal_power_dbm, "edge_warning": res.edge_warning,
                "target_gmi": cfg.target_gmi,
                "curve": [(r.power_dbm, r.loss_db) for r in res.curve],
                "records": [asdict(r.record) for r in res.curve if r.record]}
    except (ValueError, RuntimeError) as exc:
        log.error("sweep point %s=%r failed: %s", axis, value, exc)
        return {"value": value, "error": f"{type(exc).__name__}: {exc}"}


def sweep(cfg: LinkConfig, axis: str, values, workers: int = 1) -> SweepResult:
    """Evaluate every grid point; failures are recorded and the sweep continues.

    ``power`` gives the acceptable loss per launch power; all other axes give
    the maximum acceptable loss over ``cfg``'s power grid.  Results are
    ordered by grid index whatever the worker count.
    """
    values = list(values)
    if not values:
        raise ConfigError("sweep.values", "grid is empty")
    if axis not in SWEEP_AXES:
        raise ConfigError("sweep.axis", f"unknown axis {axis!r}")
    jobs = [(cfg.raw, axis, v) for v in values]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            points = list(ex.map(_run_point, jobs))
    else:
        points = [_run_point(j) for j in jobs]
    return SweepResult(axis, values, points, cfg.config_hash)


# ---------------------------------------------------------------- PSD experiment


def psd_experiment(cfg: LinkConfig, phi_bar: float = 1.1, kinds=("mb", "lut"), bursts: int = 16,
                   symbols: int = 4096, n: int = 8, smoothing_bins: int = 64,
                   max_phase_per_step: float | None = None):
    """Analytic (Gaussian-input) and Monte-Carlo PSDs at average phase ``phi_bar``.

    Returns ``{"freq": ..., "analytic": ..., "<kind>": ..., "input": ...}``
    with per-polarization PSDs of the unit-power envelope, smoothed over
    ``smoothing_bins`` bins.  Bursts are unfiltered and sampled at ``n``.
    """
    pulse = PulseShape(cfg.raw["tx"]["rolloff"], 1.0 / cfg.baud)
    curve = input_autocorrelation_from_pulse(pulse, n, symbols)
    analytic = psd_from_autocorrelation(evolve_autocorrelation(curve, phi_bar))
    out = {"freq": analytic.freq, "analytic": _smooth(analytic.psd[0], smoothing_bins),
           "analytic_input": _smooth(psd_from_autocorrelation(curve).psd[0], smoothing_bins)}
    ch = cfg.raw["channel"]
    step = max_phase_per_step or ch["max_phase_per_step"]
    for kind in kinds:
        s = cfg.raw["shaping"]
        scheme = ShapingScheme(kind, s["order"], None if kind == "uniform" else s["rate"],
                               s["block_length"])
        dm = scheme.matcher()
        acc = 0.0
        for b in range(bursts):
            rng = burst_rng(cfg.raw["seed"], b)
            sig = modulate(scheme.draw_frame(symbols, rng, dm), pulse, n)
            sig = sig.with_samples(sig.samples / math.sqrt(sig.power()))
            if ch["model"] == "simplified":
                sig = zero_dispersion_propagate(sig, phi_bar)
            else:
                hp = hpoa_for(cfg, 1.0)
                P = phi_bar * hp.p_nl()
                if ch["hpoa"] == "lma_6.2m":
                    hp = hpoa_for(cfg, P)
                    P = phi_bar * hp.p_nl()
                sig = ssfm_propagate(sig, hp.segments, P, SsfmSettings(step))
            acc = acc + estimate_psd(sig, len(sig)).psd.mean(axis=0)
        out[kind] = _smooth(acc / bursts, smoothing_bins)
    return out


def _smooth(x, w):
    if w <= 1:
        return np.asarray(x)
    # cyclic boxcar so band edges are not biased by zero padding
    k = np.ones(w) / w
    pad = np.concatenate([x[-w:], x, x[:w]])
    return np.convolve(pad, k, "same")[w:-w]


# ---------------------------------------------------------------- experiments

RECIPES = ("fig2_shaping", "fig3_psd", "fig5_kappa", "fig5_n", "fig6_pnl", "fig7_baud",
           "quick_max_loss")


def load_recipe(name: str) -> dict:
    if name not in RECIPES:
        raise ConfigError("recipe", f"unknown recipe {name!r}; choose from {RECIPES}")
    text = resources.files("uplinknl").joinpath("recipes", f"{name}.json").read_text()
    return json.loads(text)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def run_experiment(spec, out_dir, workers: int = 1) -> dict:
    """Run an experiment file (or recipe name / parsed dict) and write its outputs.

    Writes ``result.json``, one or more CSV curves and ``manifest.json`` into
    ``out_dir``; returns the manifest.
    """
    if isinstance(spec, dict):
        doc = spec
    elif isinstance(spec, str) and spec in RECIPES:
        doc = load_recipe(spec)
    else:
        try:
            doc = json.loads(Path(spec).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"not valid JSON: {exc}") from exc
    kind = doc.get("experiment")
    if kind not in ("psd", "sweep", "max_loss"):
        raise ConfigError("experiment", "must be 'psd', 'sweep' or 'max_loss'")
    cfg = LinkConfig.from_dict(doc.get("config", {}))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    files = []
    if kind == "psd":
        opts = doc.get("psd", {})
        res = psd_experiment(cfg, **opts)
        names = [k for k in res if k != "freq"]
        rows = zip(res["freq"], *[10 * np.log10(np.maximum(res[k], 1e-300)) for k in names])
        _write_csv(out / "psd.csv", ["freq_hz"] + [f"psd_{k}_db" for k in names], rows)
        files.append("psd.csv")
        result = {"experiment": "psd", "options": opts, "columns": names}
    elif kind == "sweep":
        sw = doc.get("sweep", {})
        if "axis" not in sw or "values" not in sw:
            raise ConfigError("sweep", "needs 'axis' and 'values'")
        res = sweep(cfg, sw["axis"], sw["values"], workers)
        _write_csv(out / "curve.csv", [sw["axis"], "power_dbm", "acceptable_loss_db"],
                   res.rows() if sw["axis"] != "power" else
                   ((p["value"], p["value"], p.get("loss_db")) for p in res.points))
        summary = [(p["value"], p.get("max_loss_db", p.get("loss_db")), p.get("optimal_power_dbm"))
                   for p in res.points]
        _write_csv(out / "summary.csv", [sw["axis"], "max_loss_db", "optimal_power_dbm"], summary)
        files += ["curve.csv", "summary.csv"]
        result = json.loads(res.to_json())
    else:
        res = max_acceptable_link_loss(cfg)
        _write_csv(out / "curve.csv", ["power_dbm", "acceptable_loss_db"],
                   [(r.power_dbm, r.loss_db) for r in res.curve])
        files.append("curve.csv")
        result = {"max_loss_db": res.max_loss_db, "optimal_power_dbm": res.optimal_power_dbm,
                  "edge_warning": res.edge_warning,
                  "records": [asdict(r.record) for r in res.curve if r.record]}
    (out / "result.json").write_text(json.dumps(result, sort_keys=True, indent=1,
                                                default=_json_default))
    files.append("result.json")
    manifest = {"experiment": kind, "name": doc.get("name", kind), "config_hash": cfg.config_hash,
                "seed": cfg.raw["seed"], "version": __version__, "files": files,
                "wall_time_s": time.perf_counter() - t0}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return manifest
