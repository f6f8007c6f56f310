"""Channel impairments: tapped-delay-line fading, resampling offset, CFO, phase, AWGN."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigurationError, DataError

SOS_SINUSOIDS = 16


@dataclass(frozen=True)
class ChannelConfig:
    """One concrete channel realization.

    Tap delays are integers evenly spread over ``[0, delay_spread]`` samples
    (at least one sample apart). Tap powers follow ``exp(-delay / decay)``
    normalized to unit total. Gains are drawn as complex Gaussians from
    ``seed`` unless ``tap_gains`` fixes them. ``max_doppler`` and ``cfo`` are
    normalized frequencies in cycles per sample.
    """

    num_taps: int = 1
    delay_spread: float = 0.0
    decay: float = 2.0
    max_doppler: float = 0.0
    cfo: float = 0.0
    sro_ppm: float = 0.0
    phase: float = 0.0
    seed: int = 0
    tap_gains: tuple[complex, ...] | None = field(default=None)

    def __post_init__(self):
        if not 1 <= self.num_taps <= 5:
            raise ConfigurationError(f"tap count must lie in [1, 5], got {self.num_taps}", field="num_taps")
        if abs(self.cfo) >= 0.5:
            raise ConfigurationError(f"|cfo| must be < 0.5 cycles/sample, got {self.cfo}", field="cfo")
        if not 0.0 <= self.max_doppler < 0.5:
            raise ConfigurationError(f"max_doppler must lie in [0, 0.5), got {self.max_doppler}",
                                     field="max_doppler")
        if self.delay_spread < 0:
            raise ConfigurationError("delay_spread must be non-negative", field="delay_spread")
        if self.decay <= 0:
            raise ConfigurationError("decay must be positive", field="decay")
        if self.tap_gains is not None and len(self.tap_gains) != self.num_taps:
            raise ConfigurationError(
                f"{len(self.tap_gains)} tap gains given for {self.num_taps} taps", field="tap_gains"
            )

    @classmethod
    def identity(cls) -> "ChannelConfig":
        return cls(num_taps=1, tap_gains=(1.0 + 0j,))

    def delays(self) -> np.ndarray:
        if self.num_taps == 1:
            return np.zeros(1, dtype=int)
        spacing = max(self.delay_spread / (self.num_taps - 1), 1.0)
        return np.round(np.arange(self.num_taps) * spacing).astype(int)

    def power_profile(self) -> np.ndarray:
        p = np.exp(-self.delays() / self.decay)
        return p / p.sum()

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.tap_gains is not None:
            d["tap_gains"] = [[float(np.real(g)), float(np.imag(g))] for g in self.tap_gains]
        return d


def _tap_processes(cfg: ChannelConfig, n: int) -> np.ndarray:
    """Per-tap complex gain over time, shape ``(num_taps, n)``."""
    rng = np.random.default_rng(cfg.seed)
    power = cfg.power_profile()
    if cfg.tap_gains is not None:
        base = np.asarray(cfg.tap_gains, dtype=complex)
    else:
        base = np.sqrt(power / 2) * (rng.standard_normal(cfg.num_taps) + 1j * rng.standard_normal(cfg.num_taps))
    if cfg.max_doppler == 0.0:
        return np.repeat(base[:, None], n, axis=1)
    # sum-of-sinusoids Rayleigh process with unit mean power per tap
    t = np.arange(n)
    alpha = rng.uniform(0, 2 * np.pi, size=(cfg.num_taps, SOS_SINUSOIDS))
    phi = rng.uniform(0, 2 * np.pi, size=(cfg.num_taps, SOS_SINUSOIDS))
    freq = cfg.max_doppler * np.cos(alpha)
    arg = 2 * np.pi * freq[..., None] * t + phi[..., None]
    proc = np.exp(1j * arg).sum(axis=1) / np.sqrt(SOS_SINUSOIDS)
    if cfg.tap_gains is not None:
        return base[:, None] * proc
    return np.sqrt(power)[:, None] * proc


def apply_channel(x, cfg: ChannelConfig) -> np.ndarray:
    """Apply multipath, resampling offset, CFO and phase offset, in that order."""
    x = np.asarray(x, dtype=complex)
    n = len(x)
    if n == 0:
        raise DataError("cannot apply a channel to an empty frame")
    gains = _tap_processes(cfg, n)
    y = np.zeros(n, dtype=complex)
    for g, d in zip(gains, cfg.delays()):
        if d >= n:
            continue
        y[d:] += g[d:] * x[:n - d]
    if cfg.sro_ppm != 0.0:
        grid = np.arange(n, dtype=float)
        pos = grid * (1.0 + cfg.sro_ppm * 1e-6)
        y = np.interp(pos, grid, y.real) + 1j * np.interp(pos, grid, y.imag)
    if cfg.cfo != 0.0:
        y = y * np.exp(2j * np.pi * cfg.cfo * np.arange(n))
    if cfg.phase != 0.0:
        y = y * np.exp(1j * cfg.phase)
    return y


def add_awgn(x, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add complex white Gaussian noise at ``snr_db`` relative to the measured signal power."""
    x = np.asarray(x, dtype=complex)
    if np.isposinf(snr_db):
        return x.copy()
    power = float(np.mean(np.abs(x) ** 2))
    if power <= 0:
        raise DataError("signal power must be positive to calibrate SNR")
    sigma2 = power / 10.0 ** (snr_db / 10.0)
    noise = np.sqrt(sigma2 / 2.0) * (rng.standard_normal(len(x)) + 1j * rng.standard_normal(len(x)))
    return x + noise
