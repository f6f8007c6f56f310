"""Digital modulation schemes and bit-to-symbol mapping."""

from __future__ import annotations

import enum
from functools import lru_cache

import numpy as np

from ..errors import ConfigurationError


class Modulation(str, enum.Enum):
    BPSK = "BPSK"
    QPSK = "QPSK"
    PSK8 = "8PSK"
    DQPSK = "DQPSK"
    MSK = "MSK"
    PAM4 = "PAM4"
    CPFSK = "CPFSK"
    BFSK = "BFSK"
    QAM16 = "QAM16"
    QAM64 = "QAM64"
    QAM256 = "QAM256"

    @classmethod
    def parse(cls, name: str | "Modulation") -> "Modulation":
        if isinstance(name, Modulation):
            return name
        key = str(name).upper().replace("-", "")
        aliases = {"8PSK": cls.PSK8, "PSK8": cls.PSK8, "16QAM": cls.QAM16,
                   "64QAM": cls.QAM64, "256QAM": cls.QAM256}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(f"unsupported modulation {name!r}", field="classes") from None

    @property
    def bits_per_symbol(self) -> int:
        return _BITS[self]

    @property
    def is_continuous_phase(self) -> bool:
        return self in _MOD_INDEX

    @property
    def modulation_index(self) -> float:
        """Frequency-modulation index for continuous-phase schemes."""
        return _MOD_INDEX[self]


_BITS = {
    Modulation.BPSK: 1, Modulation.QPSK: 2, Modulation.PSK8: 3, Modulation.DQPSK: 2,
    Modulation.MSK: 1, Modulation.PAM4: 2, Modulation.CPFSK: 1, Modulation.BFSK: 1,
    Modulation.QAM16: 4, Modulation.QAM64: 6, Modulation.QAM256: 8,
}

# MSK is binary CPFSK at h=0.5; BFSK is the wide (h=1) binary case.
_MOD_INDEX = {Modulation.MSK: 0.5, Modulation.CPFSK: 0.5, Modulation.BFSK: 1.0}


def gray_code(n: np.ndarray | int) -> np.ndarray:
    n = np.asarray(n)
    return n ^ (n >> 1)


def _bits_to_ints(bits: np.ndarray, k: int) -> np.ndarray:
    weights = 1 << np.arange(k - 1, -1, -1)
    return bits.reshape(-1, k) @ weights


def _pam_levels(m: int) -> np.ndarray:
    # level index -> amplitude, unnormalized odd integers
    return 2.0 * np.arange(m) - (m - 1)


@lru_cache(maxsize=None)
def _constellation_cached(mod: Modulation) -> np.ndarray:
    k = mod.bits_per_symbol
    m = 1 << k
    if mod is Modulation.BPSK:
        return np.array([1.0 + 0j, -1.0 + 0j])
    if mod in (Modulation.QPSK, Modulation.DQPSK):
        # bit b0 picks the I sign, b1 the Q sign
        pts = np.empty(4, dtype=complex)
        for sym in range(4):
            b0, b1 = sym >> 1, sym & 1
            pts[sym] = ((1 - 2 * b0) + 1j * (1 - 2 * b1)) / np.sqrt(2)
        return pts
    if mod is Modulation.PSK8:
        pts = np.empty(8, dtype=complex)
        for pos in range(8):
            pts[gray_code(pos)] = np.exp(2j * np.pi * pos / 8)
        return pts
    if mod is Modulation.PAM4:
        levels = _pam_levels(4)
        pts = np.empty(4, dtype=complex)
        for pos in range(4):
            pts[gray_code(pos)] = levels[pos]
        return pts / np.sqrt(np.mean(levels ** 2))
    if mod in (Modulation.QAM16, Modulation.QAM64, Modulation.QAM256):
        side = 1 << (k // 2)
        levels = _pam_levels(side)
        pts = np.empty(m, dtype=complex)
        for ip in range(side):
            for qp in range(side):
                sym = (int(gray_code(ip)) << (k // 2)) | int(gray_code(qp))
                pts[sym] = levels[ip] + 1j * levels[qp]
        return pts / np.sqrt(2.0 * (m - 1) / 3.0)
    raise ConfigurationError(f"{mod.value} has no constellation table (continuous phase)")


def constellation(mod: Modulation | str) -> np.ndarray:
    """Unit-average-power constellation indexed by the symbol's bit pattern."""
    return _constellation_cached(Modulation.parse(mod)).copy()


def _pad_bits(bits: np.ndarray, k: int, rng: np.random.Generator | None) -> np.ndarray:
    extra = (-len(bits)) % k
    if extra:
        if rng is None:
            raise ConfigurationError(f"{len(bits)} bits not divisible by {k}; pass an rng to pad")
        bits = np.concatenate([bits, rng.integers(0, 2, extra)])
    return bits


def map_bits(mod: Modulation | str, bits, rng: np.random.Generator | None = None) -> np.ndarray:
    """Map a bit vector to complex symbols.

    PSK/QAM/PAM use Gray-coded tables. DQPSK encodes each dibit as a phase
    increment applied to the previous symbol. Continuous-phase schemes return
    the carrier phasor at the end of each symbol interval, where the phase
    advances by ``pi * h`` times the antipodal symbol value.
    """
    mod = Modulation.parse(mod)
    bits = np.asarray(bits, dtype=np.int64)
    k = mod.bits_per_symbol
    bits = _pad_bits(bits, k, rng)
    if mod.is_continuous_phase:
        a = 1.0 - 2.0 * bits
        phase = np.pi * mod.modulation_index * np.cumsum(a)
        return np.exp(1j * phase)
    ints = _bits_to_ints(bits, k)
    if mod is Modulation.DQPSK:
        # Gray dibit -> quarter-turn increment
        quarter = np.array([0, 1, 3, 2])[ints]
        phase = np.pi / 4 + np.pi / 2 * np.cumsum(quarter)
        return np.exp(1j * phase)
    return _constellation_cached(mod)[ints]


def cpfsk_waveform(mod: Modulation | str, bits, sps: int) -> np.ndarray:
    """Sample-rate baseband of a binary continuous-phase FSK scheme.

    The instantaneous frequency is held at ``h * a / (2 T)`` over each symbol,
    so phase advances linearly by ``pi * h * a`` per symbol.
    """
    mod = Modulation.parse(mod)
    if not mod.is_continuous_phase:
        raise ConfigurationError(f"{mod.value} is not a continuous-phase scheme")
    a = 1.0 - 2.0 * np.asarray(bits, dtype=float)
    step = np.repeat(np.pi * mod.modulation_index * a / sps, sps)
    phase = np.concatenate([[0.0], np.cumsum(step)[:-1]])
    return np.exp(1j * phase)
