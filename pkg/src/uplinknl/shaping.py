"""Probabilistic amplitude shaping: distribution matchers and PAS framing.

Three matchers map ``k`` bits to ``N`` amplitudes from ``{1, 3, ..., 2M-1}``:

* :class:`LutDm` stores the ``2**k`` lowest-energy sequences (sphere shaping
  with a single look-up table);
* :class:`EssDm` indexes the sequences inside an energy sphere
  lexicographically through a trellis of exact integer counts;
* :class:`CcdmDm` ranks the permutations of one fixed composition.

All of them share ``encode``/``decode`` on integer addresses, so other
matchers (shell mapping, hierarchical LUTs) can be added behind the same
interface.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sigkit import SymbolFrame


class UncodedSequenceError(KeyError):
    """Raised when decoding a sequence that no address maps to."""


class InfeasibleOperatingPoint(ValueError):
    pass


@dataclass(frozen=True)
class AmplitudeAlphabet:
    levels: tuple

    def __post_init__(self):
        lv = tuple(int(a) for a in self.levels)
        if not lv or any(a <= 0 or a % 2 == 0 for a in lv):
            raise ValueError("levels must be positive odd integers")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError("levels must be strictly increasing")
        if len(lv) & (len(lv) - 1):
            raise ValueError("number of levels must be a power of two")
        object.__setattr__(self, "levels", lv)

    @classmethod
    def from_count(cls, count: int) -> "AmplitudeAlphabet":
        return cls(tuple(range(1, 2 * count, 2)))

    @classmethod
    def for_qam(cls, order: int) -> "AmplitudeAlphabet":
        side = math.isqrt(order)
        if side * side != order or side < 2:
            raise ValueError("QAM order must be a square power of four")
        return cls.from_count(side // 2)

    @property
    def M_a(self) -> int:
        return len(self.levels)

    @property
    def m(self) -> int:
        """Bits per real dimension (amplitude bits plus the sign bit)."""
        return int(math.log2(self.M_a)) + 1

    def energies(self) -> np.ndarray:
        return np.array(self.levels, dtype=float) ** 2


# --------------------------------------------------------------------- LUT


@dataclass(frozen=True)
class LutDm:
    """Single-table sphere shaper.

    ``encode_table`` rows are in energy order (ties broken lexicographically on
    amplitude indices), so using only the first ``2**k'`` rows reduces the rate
    without rebuilding the table.
    """

    alphabet: AmplitudeAlphabet
    N: int
    k: int
    encode_table: np.ndarray
    decode_map: np.ndarray = field(repr=False)

    @property
    def rate(self) -> float:
        return self.k / self.N

    @property
    def max_energy(self) -> int:
        return int(np.max(np.sum(self.encode_table.astype(np.int64) ** 2, axis=1)))

    def encoder_memory_bits(self) -> int:
        return (2 ** self.k) * self.N * int(math.log2(self.alphabet.M_a))

    def decoder_memory_bits(self) -> int:
        return self.alphabet.M_a ** self.N * self.k

    def restrict(self, k: int) -> "LutDm":
        """Use only the first ``2**k`` rows (runtime rate adaptation)."""
        if not 0 <= k <= self.k:
            raise ValueError(f"k must be in [0, {self.k}]")
        table = self.encode_table[: 2 ** k]
        dmap = np.where(self.decode_map < 2 ** k, self.decode_map, -1)
        return LutDm(self.alphabet, self.N, k, table, dmap)

    def _seq_index(self, seq) -> np.ndarray:
        lut = {a: i for i, a in enumerate(self.alphabet.levels)}
        seq = np.asarray(seq).reshape(-1, self.N)
        idx = np.zeros(len(seq), dtype=np.int64)
        for col in range(self.N):
            try:
                digits = np.array([lut[int(a)] for a in seq[:, col]])
            except KeyError as exc:
                raise UncodedSequenceError(f"amplitude {exc} not in alphabet") from None
            idx = idx * self.alphabet.M_a + digits
        return idx

    def encode(self, words):
        """Amplitude block(s) for integer address(es) ``words``."""
        w = np.asarray(words, dtype=np.int64)
        if np.any(w < 0) or np.any(w >= 2 ** self.k):
            raise ValueError(f"address out of range for k={self.k}")
        return self.encode_table[w]

    def decode(self, seq):
        scalar = np.ndim(seq) == 1
        addr = self.decode_map[self._seq_index(seq)]
        if np.any(addr < 0):
            raise UncodedSequenceError("sequence is not in the encoding table")
        return int(addr[0]) if scalar else addr

    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["address"] + [f"a{i + 1}" for i in range(self.N)])
            for addr, row in enumerate(self.encode_table):
                w.writerow([addr] + [int(a) for a in row])
        meta = {"alphabet": list(self.alphabet.levels), "k": self.k, "N": self.N,
                "max_energy": self.max_energy, "rate_bits_per_amplitude": self.rate}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def from_csv(cls, path) -> "LutDm":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        rows = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
        alphabet = AmplitudeAlphabet(tuple(meta["alphabet"]))
        table = rows[np.argsort(rows[:, 0]), 1:]
        dm = cls(alphabet, int(meta["N"]), int(meta["k"]), table,
                 np.full(alphabet.M_a ** int(meta["N"]), -1, dtype=np.int64))
        dm.decode_map[dm._seq_index(table)] = np.arange(len(table))
        return dm


LUT_ENUMERATION_GUARD = 2 ** 24


def build_lut_dm(alphabet: AmplitudeAlphabet, N: int, k: int) -> LutDm:
    total = alphabet.M_a ** N
    if 2 ** k > total:
        raise ValueError(f"2^{k} exceeds the {total} available sequences")
    if total > LUT_ENUMERATION_GUARD:
        raise ValueError(
            f"{total} sequences exceed the enumeration guard; use EssDm for long blocks")
    lv = np.array(alphabet.levels, dtype=np.int64)
    # rows of itertools.product are already in lexicographic index order
    idx = np.array(list(itertools.product(range(alphabet.M_a), repeat=N)), dtype=np.int64)
    energy = np.sum(lv[idx] ** 2, axis=1)
    order = np.argsort(energy, kind="stable")[: 2 ** k]
    dmap = np.full(total, -1, dtype=np.int64)
    dmap[order] = np.arange(2 ** k)
    return LutDm(alphabet, N, k, lv[idx[order]], dmap)


# --------------------------------------------------------------------- ESS


def _reduced(a: int) -> int:
    # odd a => a^2 = 8 * T + 1 with integer T; work in units of 8 to keep trellises small
    return (a * a - 1) // 8


class EssDm:
    """Enumerative sphere shaping over ``{a : sum(a_i^2) <= e_max}``.

    ``trellis[i][e]`` counts the suffixes of length ``N - i`` whose reduced
    energy is at most ``e``; counts are Python integers so nothing overflows.
    """

    def __init__(self, alphabet: AmplitudeAlphabet, N: int, k: int, e_max: int | None = None):
        if N < 1:
            raise ValueError("N must be positive")
        self.alphabet = alphabet
        self.N = N
        self.k = k
        self._red = [_reduced(a) for a in alphabet.levels]
        if e_max is None:
            e_max = self._smallest_sphere(2 ** k)
        if (e_max - N) % 8:
            # energies of N odd amplitudes are all = N mod 8; round down to one
            e_max = N + 8 * ((e_max - N) // 8)
        self.e_max = int(e_max)
        self.trellis = self._build((self.e_max - N) // 8)
        if self.size < 2 ** k:
            raise ValueError(f"sphere of energy {self.e_max} holds {self.size} < 2^{k} sequences")

    def _build(self, budget: int):
        if budget < 0:
            return [[0]] * (self.N + 1)
        rows = [[1] * (budget + 1)]
        for _ in range(self.N):
            nxt = rows[0]
            cur = [sum(nxt[e - r] for r in self._red if r <= e) for e in range(budget + 1)]
            rows.insert(0, cur)
        return rows

    def _smallest_sphere(self, count: int) -> int:
        budget = 0
        while self._build(budget)[0][-1] < count:
            budget += 1
        return self.N + 8 * budget

    @property
    def size(self) -> int:
        return self.trellis[0][-1]

    @property
    def rate(self) -> float:
        return self.k / self.N

    def encode(self, index: int) -> tuple:
        index = int(index)
        if not 0 <= index < 2 ** self.k:
            raise ValueError(f"index out of range for k={self.k}")
        left = len(self.trellis[0]) - 1
        out = []
        for pos in range(self.N):
            nxt = self.trellis[pos + 1]
            for a, r in zip(self.alphabet.levels, self._red):
                if r > left:
                    raise AssertionError("trellis exhausted")
                c = nxt[left - r]
                if index < c:
                    out.append(a)
                    left -= r
                    break
                index -= c
        return tuple(out)

    def decode(self, seq) -> int:
        seq = tuple(int(a) for a in seq)
        if len(seq) != self.N:
            raise ValueError("wrong block length")
        left = len(self.trellis[0]) - 1
        index = 0
        for pos, a in enumerate(seq):
            nxt = self.trellis[pos + 1]
            for b, r in zip(self.alphabet.levels, self._red):
                if b == a:
                    break
                if r <= left:
                    index += nxt[left - r]
            else:
                raise UncodedSequenceError(f"amplitude {a} not in alphabet")
            left -= _reduced(a)
            if left < 0:
                raise UncodedSequenceError("sequence lies outside the energy sphere")
        if index >= 2 ** self.k:
            raise UncodedSequenceError("sequence is beyond the first 2^k sphere entries")
        return index


def ess_encode(dm: EssDm, bits: int) -> tuple:
    return dm.encode(bits)


def ess_decode(dm: EssDm, seq) -> int:
    return dm.decode(seq)


# -------------------------------------------------------------------- CCDM


def multinomial(counts) -> int:
    out, n = 1, 0
    for c in counts:
        n += c
        out *= math.comb(n, c)
    return out


class CcdmDm:
    """Constant-composition matcher by exact lexicographic permutation ranking."""

    def __init__(self, alphabet: AmplitudeAlphabet, composition):
        comp = tuple(int(c) for c in composition)
        if len(comp) != alphabet.M_a or any(c < 0 for c in comp) or sum(comp) == 0:
            raise ValueError("composition must give a nonnegative count per level")
        self.alphabet = alphabet
        self.composition = comp
        self.N = sum(comp)
        self.n_type = multinomial(comp)
        self.k = self.n_type.bit_length() - 1

    @property
    def rate(self) -> float:
        return self.k / self.N

    def composition_entropy(self) -> float:
        p = np.array(self.composition, dtype=float) / self.N
        p = p[p > 0]
        return float(-np.sum(p * np.log2(p)))

    def encode(self, index: int) -> tuple:
        index = int(index)
        if not 0 <= index < 2 ** self.k:
            raise ValueError(f"index out of range for k={self.k}")
        left = list(self.composition)
        remaining = self.N
        total = self.n_type
        out = []
        for _ in range(self.N):
            for i, a in enumerate(self.alphabet.levels):
                if not left[i]:
                    continue
                c = total * left[i] // remaining
                if index < c:
                    out.append(a)
                    left[i] -= 1
                    remaining -= 1
                    total = c
                    break
                index -= c
        return tuple(out)

    def decode(self, seq) -> int:
        seq = tuple(int(a) for a in seq)
        pos = {a: i for i, a in enumerate(self.alphabet.levels)}
        left = list(self.composition)
        remaining = self.N
        total = self.n_type
        index = 0
        if len(seq) != self.N:
            raise ValueError("wrong block length")
        for a in seq:
            if a not in pos or not left[pos[a]]:
                raise UncodedSequenceError("sequence violates the composition")
            for i in range(pos[a]):
                index += total * left[i] // remaining
            total = total * left[pos[a]] // remaining
            left[pos[a]] -= 1
            remaining -= 1
        if index >= 2 ** self.k:
            raise UncodedSequenceError("sequence is beyond the first 2^k permutations")
        return index


def ccdm_encode(dm: CcdmDm, bits: int) -> tuple:
    return dm.encode(bits)


def ccdm_decode(dm: CcdmDm, seq) -> int:
    return dm.decode(seq)


def ccdm_composition(alphabet: AmplitudeAlphabet, N: int, target_rate: float) -> tuple:
    """Largest-remainder quantization of the MB pmf at ``target_rate`` to ``N`` slots."""
    pmf, _ = mb_distribution(alphabet, target_rate)
    raw = pmf * N
    counts = np.floor(raw).astype(int)
    short = N - counts.sum()
    for i in np.argsort(-(raw - counts), kind="stable")[:short]:
        counts[i] += 1
    return tuple(int(c) for c in counts)


# ---------------------------------------------------------------------- MB


def _entropy_bits(p) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def _mb_pmf(alphabet: AmplitudeAlphabet, lam: float) -> np.ndarray:
    e = alphabet.energies()
    w = np.exp(-lam * (e - e[0]))
    return w / w.sum()


def mb_distribution(alphabet: AmplitudeAlphabet, target_rate: float, tol: float = 1e-12):
    """Maxwell-Boltzmann pmf ``P(a) ~ exp(-lam a^2)`` with entropy ``target_rate``.

    Returns ``(pmf, lam)``; ``lam`` is found by bisection.
    """
    h_max = math.log2(alphabet.M_a)
    if not 0 < target_rate <= h_max + 1e-12:
        raise ValueError(f"target rate must be in (0, {h_max}]")
    if target_rate >= h_max - 1e-12:
        return _mb_pmf(alphabet, 0.0), 0.0
    lo, hi = 0.0, 1.0
    while _entropy_bits(_mb_pmf(alphabet, hi)) > target_rate:
        hi *= 2
        if hi > 1e6:
            raise ValueError("target rate too close to zero")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _entropy_bits(_mb_pmf(alphabet, mid)) > target_rate:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(1.0, hi):
            break
    lam = 0.5 * (lo + hi)
    return _mb_pmf(alphabet, lam), lam


def mb_sampler(alphabet: AmplitudeAlphabet, target_rate: float, rng, size: int) -> np.ndarray:
    pmf, _ = mb_distribution(alphabet, target_rate)
    return rng.choice(np.array(alphabet.levels), size=size, p=pmf)


# --------------------------------------------------------------------- PAS


def pas_frame(amplitudes, sign_bits) -> SymbolFrame:
    """4D-serial mapping: each run of four amplitudes fills ``(I_x, Q_x, I_y, Q_y)``.

    Sign bit 0 is ``+``.  The frame is scaled so the realized mean of
    ``|a_x|^2 + |a_y|^2`` is exactly one.
    """
    amp = np.asarray(amplitudes, dtype=float).reshape(-1)
    sb = np.asarray(sign_bits).reshape(-1)
    if amp.size % 4:
        raise ValueError("amplitude count must be a multiple of 4")
    if sb.size != amp.size:
        raise ValueError("need one sign bit per amplitude")
    q = (amp * (1 - 2 * sb.astype(float))).reshape(-1, 4)
    sym = np.stack([q[:, 0] + 1j * q[:, 1], q[:, 2] + 1j * q[:, 3]])
    scale = math.sqrt(np.mean(np.sum(np.abs(sym) ** 2, axis=0)))
    return SymbolFrame(sym / scale)


def information_rate(r_dm: float, code_rate: float, m: int) -> float:
    """Net information rate in bits per real dimension for a PAS transmitter."""
    if not 0 < code_rate <= 1:
        raise ValueError("code rate must be in (0, 1]")
    ir = r_dm - (1 - code_rate) * m
    if ir <= 0:
        raise InfeasibleOperatingPoint(f"information rate {ir:.4g} is not positive")
    return ir


# ------------------------------------------------------------ constellation


def gray_code(n_bits: int) -> np.ndarray:
    """Binary reflected Gray labels, shape ``(2**n_bits, n_bits)``, MSB first."""
    v = np.arange(2 ** n_bits)
    g = v ^ (v >> 1)
    return ((g[:, None] >> np.arange(n_bits - 1, -1, -1)) & 1).astype(np.uint8)


@dataclass(frozen=True)
class QamConstellation:
    """Square QAM on the odd-integer grid with per-quadrature Gray labels."""

    order: int
    points: np.ndarray = field(init=False, repr=False)
    labels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        side = math.isqrt(self.order)
        if side * side != self.order or side < 2 or side & (side - 1):
            raise ValueError("order must be 4, 16, 64, 256, ...")
        bits = int(math.log2(side))
        pam = np.arange(-(side - 1), side, 2).astype(float)
        g = gray_code(bits)
        i_idx, q_idx = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
        pts = (pam[i_idx] + 1j * pam[q_idx]).reshape(-1)
        lab = np.concatenate([g[i_idx.reshape(-1)], g[q_idx.reshape(-1)]], axis=1)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)

    @property
    def bits(self) -> int:
        return int(math.log2(self.order))

    @property
    def side(self) -> int:
        return math.isqrt(self.order)

    @property
    def pam(self) -> np.ndarray:
        return np.arange(-(self.side - 1), self.side, 2).astype(float)

    @property
    def pam_labels(self) -> np.ndarray:
        return gray_code(self.bits // 2)

    def index_of(self, z) -> np.ndarray:
        """Index of the grid point nearest to each (unscaled) value."""
        side = math.isqrt(self.order)
        i = np.clip(np.round((np.real(z) + side - 1) / 2), 0, side - 1).astype(np.int64)
        q = np.clip(np.round((np.imag(z) + side - 1) / 2), 0, side - 1).astype(np.int64)
        return i * side + q


# ------------------------------------------------------------------ sources


@dataclass(frozen=True)
class ShapingScheme:
    """A transmit symbol source: uniform QAM, i.i.d. MB, or a DM-based PAS.

    ``kind`` is one of ``"uniform"``, ``"mb"``, ``"lut"``, ``"ess"``, ``"ccdm"``.
    ``rate`` is the shaping rate in bits/2D (ignored for uniform).
    """

    kind: str
    order: int
    rate: float | None = None
    block_length: int = 4

    def __post_init__(self):
        if self.kind not in ("uniform", "mb", "lut", "ess", "ccdm"):
            raise ValueError(f"unknown shaping kind {self.kind!r}")
        QamConstellation(self.order)
        if self.kind != "uniform" and self.rate is None:
            raise ValueError("shaped schemes need a rate in bits/2D")
        if self.kind != "uniform" and self.block_length % 4:
            raise ValueError("block length must be a multiple of 4 for 4D mapping")

    @property
    def alphabet(self) -> AmplitudeAlphabet:
        return AmplitudeAlphabet.for_qam(self.order)

    @property
    def amplitude_rate(self) -> float:
        """Target DM rate in bits per amplitude (the sign carries one more bit)."""
        if self.kind == "uniform":
            return math.log2(self.alphabet.M_a)
        return self.rate / 2 - 1

    def matcher(self):
        a, N = self.alphabet, self.block_length
        k = int(math.floor(self.amplitude_rate * N + 1e-9))
        if self.kind == "lut":
            return build_lut_dm(a, N, k)
        if self.kind == "ess":
            return EssDm(a, N, k)
        if self.kind == "ccdm":
            return CcdmDm(a, ccdm_composition(a, N, self.amplitude_rate))
        return None

    def draw_amplitudes(self, n_amp: int, rng, dm=None) -> np.ndarray:
        a = self.alphabet
        if self.kind == "uniform":
            return rng.choice(np.array(a.levels), size=n_amp)
        if self.kind == "mb":
            return mb_sampler(a, self.amplitude_rate, rng, n_amp)
        dm = dm if dm is not None else self.matcher()
        n_blk = -(-n_amp // dm.N)
        words = rng.integers(0, 2 ** dm.k, size=n_blk)
        if isinstance(dm, LutDm):
            blocks = dm.encode(words)
        else:
            blocks = np.array([dm.encode(int(w)) for w in words])
        return blocks.reshape(-1)[:n_amp]

    def draw_frame(self, n_symbols: int, rng, dm=None) -> SymbolFrame:
        """``n_symbols`` dual-polarization symbols (4 amplitudes each)."""
        amp = self.draw_amplitudes(4 * n_symbols, rng, dm)
        signs = rng.integers(0, 2, size=amp.size)
        return pas_frame(amp, signs)
