"""Acceptance criteria, one test per criterion.

Each test prints ``CRITERION n: PASS|FAIL ...`` with the measured values; the
lines are repeated in the pytest terminal summary.  Monte-Carlo criteria run
at desk scale (2^14 symbols x 4 bursts) with fixed seeds.
"""

import contextlib
import functools
import itertools
import json
import math
import time
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import energy, gauss_hermite_bitwise_gmi, min_energy_codebook
from uplinknl.channel import (FiberSegmentProfile, characteristic_nonlinear_power, ssfm_propagate,
                              zero_dispersion_propagate)
from uplinknl.cli import main
from uplinknl.dsp import ChainConfig, NlpcConfig, nlpc_complexity, rx_chain, tx_chain
from uplinknl.harness import LinkConfig, max_acceptable_link_loss, psd_experiment, sweep
from uplinknl.metrics import evm, gmi_estimate
from uplinknl.shaping import (AmplitudeAlphabet, CcdmDm, EssDm, QamConstellation, ShapingScheme,
                              build_lut_dm)
from uplinknl.sigkit import PulseShape, modulate

PULSE = PulseShape(0.05, 1e-11)


def report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@functools.lru_cache(maxsize=None)
def max_loss(cfg_json, powers):
    cfg = LinkConfig.from_dict(json.loads(cfg_json))
    with _quiet():
        res = max_acceptable_link_loss(cfg, list(powers))
    best = next(r for r in res.curve if r.power_dbm == res.optimal_power_dbm)
    return res.max_loss_db, res.optimal_power_dbm, best.record.extra["loss_ci_db"], res.edge_warning


@contextlib.contextmanager
def _quiet():
    # grid-edge warnings are reported through the edge flag instead
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


def cfg_json(**d):
    return json.dumps(d, sort_keys=True)


def grid(lo, hi):
    return tuple(float(p) for p in range(lo, hi + 1))


# ---------------------------------------------------------------- 1

def test_criterion_01_pnl(capsys):
    t0 = time.perf_counter()
    vals = []
    for length in ("43", "3"):
        assert main(["pnl", "--length", length]) == 0
        vals.append(json.loads(capsys.readouterr().out)["p_nl_dbm"])
    dt = time.perf_counter() - t0
    ok = 42.6 <= vals[0] <= 42.8 and 54.1 <= vals[1] <= 54.3 and dt < 1.0
    report(1, ok, f"43 m SMF {vals[0]:.2f} dBm, 3 m SMF {vals[1]:.2f} dBm, {dt:.2f} s")


# ---------------------------------------------------------------- 2

def test_criterion_02_exact_nlpc_inversion():
    t0 = time.perf_counter()
    fr = ShapingScheme("lut", 64, 4.5).draw_frame(1 << 14, np.random.default_rng(2))
    worst = -math.inf
    for kappa in (0.0, 0.5, 1.0):
        cfg = ChainConfig(PULSE, n=2, n_sim=2, bandwidth=None, nlpc=NlpcConfig(1.1, kappa, 2))
        rx = rx_chain(zero_dispersion_propagate(tx_chain(fr, cfg), 1.1), cfg, reference=fr)
        worst = max(worst, evm(fr, rx))
    dt = time.perf_counter() - t0
    report(2, worst <= -120 and dt < 10, f"worst EVM {worst:.1f} dB over kappa 0/0.5/1, {dt:.2f} s")


# ---------------------------------------------------------------- 3

def test_criterion_03_zero_dispersion_equivalence():
    t0 = time.perf_counter()
    fr = ShapingScheme("mb", 64, 4.5).draw_frame(1 << 12, np.random.default_rng(3))
    sig = modulate(fr, PULSE, 8)
    sig = sig.with_samples(sig.samples / math.sqrt(sig.power()))
    segs = [FiberSegmentProfile.active(30.0, 3.6, 7.865, beta2_ps2_km=0.0),
            FiberSegmentProfile.passive(3.0, 1.27, beta2_ps2_km=0.0)]
    p_nl = characteristic_nonlinear_power(segs)
    dev = max(np.max(np.abs(ssfm_propagate(sig, segs, phi * p_nl).samples
                            - zero_dispersion_propagate(sig, phi).samples)) for phi in (0.5, 1.1, 2.0))
    dt = time.perf_counter() - t0
    report(3, dev < 1e-9 and dt < 30, f"max sample deviation {dev:.2e}, {dt:.2f} s")


# ---------------------------------------------------------------- 4

@pytest.mark.slow
def test_criterion_04_psd_analytic_vs_ssfm():
    t0 = time.perf_counter()
    cfg = LinkConfig.from_dict({"channel": {"model": "ssfm", "hpoa": "default"}, "seed": 7})
    res = psd_experiment(cfg, phi_bar=1.1, kinds=("mb",), bursts=64, symbols=4096, n=8,
                         smoothing_bins=64, max_phase_per_step=0.05)
    ana, mc = res["analytic"], res["mb"]
    band = ana >= ana.max() * 1e-3
    dev = float(np.max(np.abs(10 * np.log10(mc[band] / ana[band]))))
    dt = time.perf_counter() - t0
    report(4, dev <= 1.0 and dt < 600,
           f"max |MC - analytic| {dev:.2f} dB over {band.sum()} bins above peak-30 dB, "
           f"64 x 4096 symbols, {dt:.0f} s")


# ---------------------------------------------------------------- 5

def test_criterion_05_gmi_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for order, snr_db in itertools.product((4, 16), (5, 10, 15)):
        rng = np.random.default_rng(order * 100 + snr_db)
        tx = ShapingScheme("uniform", order).draw_frame(1 << 15, rng).symbols.reshape(-1)
        sigma = math.sqrt(np.mean(np.abs(tx) ** 2) / 10 ** (snr_db / 10) / 2)
        rx = tx + sigma * (rng.standard_normal(tx.size) + 1j * rng.standard_normal(tx.size))
        est = gmi_estimate(tx, rx, QamConstellation(order), priors=np.full(order, 1 / order))
        worst = max(worst, abs(est.gmi_bits_per_2d - gauss_hermite_bitwise_gmi(order, snr_db)))
    dt = time.perf_counter() - t0
    report(5, worst <= 0.02 and dt < 60, f"max |GMI - quadrature| {worst:.4f} bits/2D at 2^16 symbols, {dt:.1f} s")


# ---------------------------------------------------------------- 6

BASE = {"target_gmi": 3.0, "filters": {"bandwidth_ghz_onesided": 55.0}, "seed": 1}


@pytest.mark.slow
def test_criterion_06_shaping_ordering():
    t0 = time.perf_counter()
    out = {}
    for name, shaping in [("SpSh N=4", {"kind": "lut", "order": 64, "rate": 4.5, "block_length": 4}),
                          ("U64", {"kind": "uniform", "order": 64, "rate": None}),
                          ("MB", {"kind": "mb", "order": 64, "rate": 4.5})]:
        out[name] = max_loss(cfg_json(**BASE, shaping=shaping), grid(37, 41))
    (l1, p1, c1, _), (l2, p2, c2, _), (l3, p3, c3, _) = out.values()
    ok = (l1 - l2 > c1 + c2) and (l2 - l3 > c2 + c3)
    dt = time.perf_counter() - t0
    report(6, ok and dt < 1800,
           f"SpSh {l1:.2f} dB @{p1:g} dBm (ci {c1:.2f}), U64 {l2:.2f} @{p2:g} (ci {c2:.2f}), "
           f"MB {l3:.2f} @{p3:g} (ci {c3:.2f}), {dt:.0f} s")


# ---------------------------------------------------------------- 7 and 8

def nlpc_cfg(kappa, n=2):
    if kappa is None:
        return cfg_json(**BASE, nlpc={"enabled": False, "kappa": 1.0, "n": n})
    return cfg_json(**BASE, nlpc={"enabled": True, "kappa": kappa, "n": n})


NLPC_GRIDS = {None: grid(38, 42), 1.0: grid(40, 44), 0.6: grid(41, 45), 0.0: grid(39, 43)}


@pytest.mark.slow
def test_criterion_07_nlpc_gains():
    t0 = time.perf_counter()
    r = {k: max_loss(nlpc_cfg(k), g) for k, g in NLPC_GRIDS.items()}
    gain = r[1.0][0] - r[None][0]
    split_ok = r[0.6][0] >= r[1.0][0]
    worst_ok = r[0.0][0] <= min(r[1.0][0], r[0.6][0])
    edges = [k for k, v in r.items() if v[3]]
    dt = time.perf_counter() - t0
    detail = ", ".join(f"{'off' if k is None else 'kappa ' + str(k)} {v[0]:.2f} dB @{v[1]:g}"
                       for k, v in r.items())
    report(7, gain >= 1.0 and split_ok and worst_ok and not edges and dt < 2700,
           f"TX-NLPC gain {gain:.2f} dB; {detail}; {dt:.0f} s")


@pytest.mark.slow
def test_criterion_08_oversampling_saturation():
    t0 = time.perf_counter()
    diffs = {}
    for kappa in (0.6, 1.0):
        l2 = max_loss(nlpc_cfg(kappa, 2), NLPC_GRIDS[kappa])[0]
        l8 = max_loss(cfg_json(**BASE, nlpc={"enabled": True, "kappa": kappa, "n": 8},
                               mc={"symbols": 1 << 14, "bursts": 4, "n_sim": 8}), NLPC_GRIDS[kappa])[0]
        diffs[kappa] = (l2, l8)
    worst = max(abs(a - b) for a, b in diffs.values())
    dt = time.perf_counter() - t0
    detail = ", ".join(f"kappa {k}: n=2 {a:.2f} dB, n=8 {b:.2f} dB" for k, (a, b) in diffs.items())
    report(8, worst < 0.3 and dt < 1800, f"max |diff| {worst:.2f} dB; {detail}; {dt:.0f} s")


# ---------------------------------------------------------------- 9

HPOA_CASES = {"default": 40, "smf_3m": 51.5, "smf_43m": 40, "lma_6.2m": 61}


@pytest.mark.slow
def test_criterion_09_simplified_model_equivalence():
    t0 = time.perf_counter()
    rows = []
    for hpoa, centre in HPOA_CASES.items():
        powers = tuple(centre + d for d in (-1.0, 0.0, 1.0))
        ss = max_loss(cfg_json(**BASE, channel={"model": "ssfm", "hpoa": hpoa, "max_phase_per_step": 0.05}),
                      powers)
        sm = max_loss(cfg_json(**BASE, channel={"model": "simplified", "hpoa": hpoa}), powers)
        rows.append((hpoa, ss[0], sm[0]))
    worst = max(abs(a - b) for _, a, b in rows)
    # simplified model vs P_NL over a 12 dB span
    cfg = LinkConfig.from_dict(dict(BASE, channel={"model": "simplified", "p_nl_dbm": 42.7},
                                    power_dbm=[39.0, 40.0, 41.0]))
    pnl = [36.7, 42.7, 48.7]
    with _quiet():
        sw = sweep(cfg, "p_nl", pnl)
    losses = [p["max_loss_db"] for p in sw.points]
    slope = float(np.polyfit(pnl, losses, 1)[0])
    dt = time.perf_counter() - t0
    detail = ", ".join(f"{h} ssfm {a:.2f}/simplified {b:.2f} dB" for h, a, b in rows)
    report(9, worst <= 0.5 and abs(slope - 1) <= 0.1 and dt < 3600,
           f"max |diff| {worst:.2f} dB ({detail}); slope {slope:.3f} dB/dB over 12 dB; {dt:.0f} s")


# ---------------------------------------------------------------- 10

def test_criterion_10_dm_properties():
    t0 = time.perf_counter()
    checked = 0
    # LUT: exhaustive bijection for k <= 12 and prefix optimality against enumeration
    for M, N in [(2, 12), (4, 4), (4, 6), (8, 4), (16, 3)]:
        a = AmplitudeAlphabet.from_count(M)
        k = min(12, int(math.log2(M ** N)))
        dm = build_lut_dm(a, N, k)
        addr = np.arange(2 ** k)
        assert np.array_equal(dm.decode(dm.encode(addr)), addr)
        ref = min_energy_codebook(a.levels, N, 2 ** k)
        assert [tuple(int(x) for x in r) for r in dm.encode_table] == ref
        for kk in range(k + 1):
            sub = dm.restrict(kk).encode_table
            e_max = max(energy(r) for r in sub)
            rest = [energy(r) for r in ref[2 ** kk:]]
            assert not rest or min(rest) >= e_max
        checked += 2 ** k
    # ESS: exhaustive bijection for N <= 8, energies within the sphere
    for M, N, k in [(2, 8, 7), (4, 4, 5), (4, 6, 9), (4, 8, 12), (8, 3, 7)]:
        dm = EssDm(AmplitudeAlphabet.from_count(M), N, k)
        cw = [dm.encode(i) for i in range(2 ** k)]
        assert len(set(cw)) == 2 ** k and all(energy(s) <= dm.e_max for s in cw)
        assert [dm.decode(s) for s in cw] == list(range(2 ** k))
        checked += 2 ** k
    # CCDM: exhaustive bijection for N <= 8
    for comp in [(4, 2, 1, 1), (3, 3, 2, 0), (2, 2, 2, 2), (5, 2, 1, 0)]:
        dm = CcdmDm(AmplitudeAlphabet((1, 3, 5, 7)), comp)
        cw = [dm.encode(i) for i in range(2 ** dm.k)]
        assert len(set(cw)) == 2 ** dm.k
        assert [dm.decode(s) for s in cw] == list(range(2 ** dm.k))
        checked += 2 ** dm.k
    # ESS / LUT energy multisets for N=4, k=5 on 4 levels and other cases where
    # the sphere at the LUT's maximum energy holds exactly 2^k sequences
    for M, N, k in [(4, 4, 5), (4, 2, 3), (4, 5, 4), (8, 4, 5), (8, 2, 3)]:
        a = AmplitudeAlphabet.from_count(M)
        lut = build_lut_dm(a, N, k)
        ess = EssDm(a, N, k, e_max=lut.max_energy)
        e_ess = sorted(energy(ess.encode(i)) for i in range(2 ** k))
        assert e_ess == sorted(energy(r) for r in lut.encode_table)
    dt = time.perf_counter() - t0
    report(10, dt < 120, f"{checked} codewords checked exhaustively, {dt:.1f} s")


# ---------------------------------------------------------------- 11

def test_criterion_11_complexity():
    v = nlpc_complexity(2)
    report(11, v == 11, f"nlpc_complexity(2) = {v:g} RM/2D")
