import json
import math

import numpy as np
import pytest

from oracles import entropy_bits, gauss_hermite_bitwise_gmi
from uplinknl.metrics import (EVM_FLOOR_DB, MetricsRecord, complex_gain, evm, gmi_estimate,
                              occupied_bandwidth)
from uplinknl.shaping import QamConstellation, ShapingScheme
from uplinknl.sigkit import PulseShape, SymbolFrame, modulate


def awgn(order, n, snr_db, seed, kind="uniform", rate=None):
    rng = np.random.default_rng(seed)
    tx = ShapingScheme(kind, order, rate).draw_frame(n // 2, rng).symbols.reshape(-1)
    es = np.mean(np.abs(tx) ** 2)
    sigma = math.sqrt(es / 10 ** (snr_db / 10) / 2)
    rx = tx + sigma * (rng.standard_normal(tx.size) + 1j * rng.standard_normal(tx.size))
    return tx, rx


def test_oracle_itself_at_limits():
    assert gauss_hermite_bitwise_gmi(16, 40) == pytest.approx(4.0, abs=1e-6)
    assert gauss_hermite_bitwise_gmi(4, -30) == pytest.approx(0.0, abs=2e-3)
    # QPSK bit-wise GMI is twice the BPSK capacity at half the SNR
    assert gauss_hermite_bitwise_gmi(4, 10) == pytest.approx(1.99, abs=0.01)


@pytest.mark.parametrize("order", [4, 16])
@pytest.mark.parametrize("snr_db", [5, 10, 15])
def test_gmi_matches_gauss_hermite(order, snr_db):
    tx, rx = awgn(order, 1 << 16, snr_db, seed=order + snr_db)
    est = gmi_estimate(tx, rx, QamConstellation(order), priors=np.full(order, 1 / order))
    assert est.gmi_bits_per_2d == pytest.approx(gauss_hermite_bitwise_gmi(order, snr_db), abs=0.02)


def test_gmi_monotone_in_snr():
    c = QamConstellation(16)
    rng = np.random.default_rng(1)
    tx = ShapingScheme("uniform", 16).draw_frame(1 << 13, rng).symbols.reshape(-1)
    w = (rng.standard_normal(tx.size) + 1j * rng.standard_normal(tx.size)) / math.sqrt(2)
    vals = []
    for snr_db in np.linspace(0, 20, 20):
        sigma = math.sqrt(10 ** (-snr_db / 10))
        e = gmi_estimate(tx, tx + sigma * w, c)
        vals.append((e.gmi_bits_per_2d, e.confidence_half_width))
    for (a, ha), (b, hb) in zip(vals, vals[1:]):
        assert b >= a - (ha + hb)


def test_gmi_bounds_and_entropy():
    c = QamConstellation(64)
    tx, rx = awgn(64, 1 << 14, 30, 2, kind="mb", rate=4.5)
    est = gmi_estimate(tx, rx, c)
    idx = c.index_of(tx / np.min(np.abs(np.concatenate([tx.real, tx.imag]))))
    realized = entropy_bits(np.bincount(idx, minlength=64) / idx.size)
    assert est.entropy_bits_per_2d == pytest.approx(realized, abs=1e-9)
    assert 0 <= est.gmi_bits_per_2d <= est.entropy_bits_per_2d <= 6
    assert est.gmi_bits_per_2d > est.entropy_bits_per_2d - 0.01
    noise = np.random.default_rng(3).standard_normal(tx.size) * 100
    assert gmi_estimate(tx, noise + 0j, c).gmi_bits_per_2d >= 0


def test_confidence_shrinks_with_root_n():
    c = QamConstellation(16)
    widths = []
    for n in (1 << 14, 1 << 16):
        ws = [gmi_estimate(*awgn(16, n, 8, s), c).confidence_half_width for s in range(6)]
        widths.append(np.mean(ws))
    # quadrupling the count halves the width
    assert widths[0] / widths[1] == pytest.approx(2.0, rel=0.2)


def test_rotation_invariance():
    c = QamConstellation(16)
    tx, rx = awgn(16, 1 << 14, 12, 4)
    a = gmi_estimate(tx, rx, c)
    b = gmi_estimate(tx, rx * np.exp(0.7j) * 1.3, c)
    assert b.gmi_bits_per_2d == pytest.approx(a.gmi_bits_per_2d, abs=1e-9)


def test_gmi_input_checks():
    c = QamConstellation(4)
    tx, rx = awgn(4, 2000, 10, 5)
    with pytest.raises(ValueError):
        gmi_estimate(tx, rx[:-1], c)
    with pytest.raises(ValueError):
        gmi_estimate(tx, rx, c, priors=np.full(4, 0.3))
    with pytest.warns(UserWarning):
        gmi_estimate(tx[:200], rx[:200], c)


def test_evm_and_gain():
    rng = np.random.default_rng(6)
    tx = rng.standard_normal(1000) + 1j * rng.standard_normal(1000)
    assert complex_gain(tx, (2 - 1j) * tx) == pytest.approx(2 - 1j)
    assert evm(tx, 0.5j * tx) == EVM_FLOOR_DB
    e = 0.01 * (rng.standard_normal(1000) + 1j * rng.standard_normal(1000))
    assert evm(tx, tx + e) == pytest.approx(-40.0, abs=0.5)
    with pytest.raises(ValueError):
        evm([], [])
    with pytest.raises(ValueError):
        complex_gain(np.zeros(3), np.ones(3))


def test_occupied_bandwidth_of_rrc():
    rng = np.random.default_rng(7)
    pulse = PulseShape(0.05, 1e-11)
    sym = (rng.choice([-1, 1], (2, 8192)) + 1j * rng.choice([-1, 1], (2, 8192))) / 2
    sig = modulate(SymbolFrame(sym), pulse, 8)
    obw = occupied_bandwidth(sig, 20.0, 1024)
    # the window main lobe spreads the edge by about two bins per side
    assert 100e9 <= obw <= 105e9 + 2 * 3 * 8e11 / 1024


def test_metrics_record_json():
    rec = MetricsRecord(3.1, 12.0, -20.0, 1e11, [1, 2], "abc")
    d = json.loads(rec.to_json())
    assert {"gmi_bits_2d", "snr_db", "evm_db", "obw_hz", "seeds", "config_hash"} <= set(d)
    assert rec.to_json() == MetricsRecord(3.1, 12.0, -20.0, 1e11, [1, 2], "abc").to_json()
