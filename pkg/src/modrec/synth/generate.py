"""Frame and dataset generation with per-frame deterministic seeding."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, NamedTuple

import numpy as np

from ..dataset import Dataset
from ..errors import ConfigurationError
from .channel import ChannelConfig, add_awgn, apply_channel
from .modulation import Modulation, cpfsk_waveform, map_bits
from .pulse import pulse_shape

RADIOML_SNR_GRID = tuple(float(s) for s in range(-20, 20, 2))
CSPB_SNR_MU = 0.71
CSPB_SNR_SIGMA = 8.81


@dataclass
class IQFrame:
    i: np.ndarray
    q: np.ndarray
    label: int
    snr_db: float
    frame_seed: int
    modulation: Modulation

    @property
    def n(self) -> int:
        return len(self.i)

    def as_array(self) -> np.ndarray:
        return np.stack([self.i, self.q])

    def complex(self) -> np.ndarray:
        return self.i + 1j * self.q


@dataclass(frozen=True)
class ChannelRanges:
    """Per-frame channel randomization bounds.

    Each frame draws a tap count in ``[1, max_taps]``, Doppler in
    ``[0, max_doppler]``, CFO in ``[-max_cfo, max_cfo]``, SRO in
    ``[-max_sro_ppm, max_sro_ppm]`` and, if ``random_phase``, a uniform phase.
    ``fading=False`` with ``max_taps == 1`` yields the identity channel.
    """

    max_taps: int = 1
    delay_spread: float = 0.0
    decay: float = 2.0
    max_doppler: float = 0.0
    max_cfo: float = 0.0
    max_sro_ppm: float = 0.0
    random_phase: bool = False
    fading: bool = False

    def __post_init__(self):
        if not 1 <= self.max_taps <= 5:
            raise ConfigurationError(f"max_taps must lie in [1, 5], got {self.max_taps}", field="channel.max_taps")
        if not 0 <= self.max_cfo < 0.5:
            raise ConfigurationError("max_cfo must lie in [0, 0.5)", field="channel.max_cfo")

    def sample(self, rng: np.random.Generator, seed: int) -> ChannelConfig:
        taps = int(rng.integers(1, self.max_taps + 1))
        doppler = float(rng.uniform(0, self.max_doppler)) if self.max_doppler > 0 else 0.0
        cfo = float(rng.uniform(-self.max_cfo, self.max_cfo)) if self.max_cfo > 0 else 0.0
        sro = float(rng.uniform(-self.max_sro_ppm, self.max_sro_ppm)) if self.max_sro_ppm > 0 else 0.0
        phase = float(rng.uniform(0, 2 * np.pi)) if self.random_phase else 0.0
        gains = None
        if not self.fading:
            if taps != 1:
                raise ConfigurationError("fading=False requires max_taps == 1", field="channel.fading")
            gains = (1.0 + 0j,)
        return ChannelConfig(num_taps=taps, delay_spread=self.delay_spread, decay=self.decay,
                             max_doppler=doppler, cfo=cfo, sro_ppm=sro, phase=phase,
                             seed=seed, tap_gains=gains)


@dataclass(frozen=True)
class DatasetSpec:
    n: int = 128
    classes: tuple[str, ...] = ("BPSK", "QPSK", "8PSK", "QAM16")
    frames: int = 8000
    snr_mode: str = "grid"
    snr_grid: tuple[float, ...] = RADIOML_SNR_GRID
    snr_mu: float = CSPB_SNR_MU
    snr_sigma: float = CSPB_SNR_SIGMA
    snr_min: float = -20.0
    snr_max: float = 40.0
    sps: int = 8
    rolloff: float = 0.35
    span: int = 8
    channel: ChannelRanges = field(default_factory=ChannelRanges)
    master_seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("n must be positive", field="n")
        if not self.classes:
            raise ConfigurationError("at least one class is required", field="classes")
        for c in self.classes:
            Modulation.parse(c)
        if len(set(self.classes)) != len(self.classes):
            raise ConfigurationError("class names must be unique", field="classes")
        if len(self.classes) > 256:
            raise ConfigurationError("at most 256 classes fit the 1-byte label", field="classes")
        if self.snr_mode not in ("grid", "lognormal"):
            raise ConfigurationError(f"snr_mode must be 'grid' or 'lognormal', got {self.snr_mode!r}",
                                     field="snr_mode")
        groups = len(self.classes) * (len(self.snr_grid) if self.snr_mode == "grid" else 1)
        if self.snr_mode == "grid" and not self.snr_grid:
            raise ConfigurationError("grid SNR mode needs a non-empty snr_grid", field="snr_grid")
        if self.frames < 1 or self.frames % groups:
            what = (f"{len(self.classes)} classes x {len(self.snr_grid)} SNR points"
                    if self.snr_mode == "grid" else f"{groups} classes")
            raise ConfigurationError(f"{self.frames} frames cannot be balanced over {what}", field="frames")
        if self.sps < 2:
            raise ConfigurationError("sps must be >= 2", field="sps")

    @property
    def modulations(self) -> list[Modulation]:
        return [Modulation.parse(c) for c in self.classes]

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["classes"] = list(self.classes)
        d["snr_grid"] = list(self.snr_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DatasetSpec":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown dataset spec fields: {sorted(unknown)}", field=sorted(unknown)[0])
        if "channel" in d and isinstance(d["channel"], dict):
            try:
                d["channel"] = ChannelRanges(**d["channel"])
            except TypeError as exc:
                raise ConfigurationError(str(exc), field="channel") from None
        for key in ("classes", "snr_grid"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def snr_header(self) -> dict[str, Any]:
        if self.snr_mode == "grid":
            return {"mode": "grid", "grid": list(self.snr_grid)}
        return {"mode": "lognormal", "mu_db": self.snr_mu, "sigma_db": self.snr_sigma,
                "min_db": self.snr_min, "max_db": self.snr_max}


def profile(name: str, frames: int | None = None, seed: int = 0) -> DatasetSpec:
    """Named dataset layouts.

    ``radioml``: 128-sample frames, RadioML digital pool, 2 dB SNR grid,
    light multipath with CFO/SRO. ``cspb``: 1024-sample frames, eight
    digital schemes, log-normal SNR, heavier fading. ``desk``: 128 samples,
    four schemes, AWGN only at 10..18 dB.
    """
    key = name.lower()
    if key == "radioml":
        classes = ("BPSK", "QPSK", "8PSK", "QAM16", "QAM64", "BFSK", "CPFSK", "PAM4")
        return DatasetSpec(
            n=128, classes=classes, frames=frames or 20 * len(classes) * 50, snr_mode="grid",
            snr_grid=RADIOML_SNR_GRID,
            channel=ChannelRanges(max_taps=4, delay_spread=4, decay=2.0, max_doppler=0.002,
                                  max_cfo=0.005, max_sro_ppm=100.0, random_phase=True, fading=True),
            master_seed=seed,
        )
    if key == "cspb":
        classes = ("BPSK", "QPSK", "8PSK", "DQPSK", "MSK", "QAM16", "QAM64", "QAM256")
        return DatasetSpec(
            n=1024, classes=classes, frames=frames or len(classes) * 500, snr_mode="lognormal",
            snr_mu=CSPB_SNR_MU, snr_sigma=CSPB_SNR_SIGMA, snr_min=-20.0, snr_max=40.0,
            channel=ChannelRanges(max_taps=5, delay_spread=8, decay=3.0, max_doppler=0.005,
                                  max_cfo=0.002, max_sro_ppm=50.0, random_phase=True, fading=True),
            master_seed=seed,
        )
    if key == "desk":
        return DatasetSpec(n=128, classes=("BPSK", "QPSK", "8PSK", "QAM16"), frames=frames or 8000,
                           snr_mode="grid", snr_grid=(10.0, 12.0, 14.0, 16.0, 18.0),
                           channel=ChannelRanges(), master_seed=seed)
    raise ConfigurationError(f"unknown dataset profile {name!r}", field="profile")


class FramePlan(NamedTuple):
    labels: np.ndarray
    snrs: np.ndarray
    frame_seeds: np.ndarray
    channel_seeds: np.ndarray


def frame_plan(spec: DatasetSpec) -> FramePlan:
    """Labels, SNRs and seeds of every frame, without synthesizing waveforms."""
    c = len(spec.classes)
    idx = np.arange(spec.frames)
    seeds = np.array([np.random.SeedSequence([spec.master_seed, i]).generate_state(3, dtype=np.uint64)
                      for i in idx], dtype=np.uint64).reshape(-1, 3)
    if spec.snr_mode == "grid":
        per = spec.frames // (c * len(spec.snr_grid))
        group = idx // per
        labels = group % c
        snrs = np.asarray(spec.snr_grid, dtype=float)[group // c]
    else:
        labels = idx % c
        snrs = np.empty(spec.frames)
        for i in idx:
            draw = np.random.default_rng(int(seeds[i, 2])).normal(spec.snr_mu, spec.snr_sigma)
            snrs[i] = float(np.clip(draw, spec.snr_min, spec.snr_max))
    return FramePlan(labels.astype(np.int64), snrs, seeds[:, 0], seeds[:, 1])


class FrameComponents(NamedTuple):
    clean: np.ndarray  # post-channel, pre-noise
    noisy: np.ndarray  # before power normalization


def frame_components(mod: Modulation | str, snr_db: float, cfg: ChannelConfig, n: int,
                     frame_seed: int, sps: int = 8, rolloff: float = 0.35,
                     span: int = 8) -> FrameComponents:
    mod = Modulation.parse(mod)
    rng = np.random.default_rng(frame_seed)
    margin = 32 + int(cfg.delays().max())
    total = n + 2 * margin
    k = mod.bits_per_symbol
    if mod.is_continuous_phase:
        nsym = math.ceil(total / sps) + 1
        wave = cpfsk_waveform(mod, rng.integers(0, 2, nsym), sps)
        start = int(rng.integers(0, sps))
    else:
        nsym = math.ceil(total / sps) + span + 1
        symbols = map_bits(mod, rng.integers(0, 2, nsym * k))
        wave = pulse_shape(symbols, sps, rolloff, span)
        start = span * sps + int(rng.integers(0, sps))
    x = wave[start:start + total]
    y = apply_channel(x, cfg)[margin:margin + n]
    return FrameComponents(y, add_awgn(y, snr_db, rng))


def generate_frame(mod: Modulation | str, snr_db: float, cfg: ChannelConfig, n: int, frame_seed: int,
                   sps: int = 8, rolloff: float = 0.35, span: int = 8,
                   label: int | None = None) -> IQFrame:
    """Synthesize one unit-power frame; a pure function of its arguments."""
    mod = Modulation.parse(mod)
    noisy = frame_components(mod, snr_db, cfg, n, frame_seed, sps, rolloff, span).noisy
    noisy = noisy / np.sqrt(np.mean(np.abs(noisy) ** 2))
    if label is None:
        label = list(Modulation).index(mod)
    return IQFrame(noisy.real.copy(), noisy.imag.copy(), int(label), float(snr_db), int(frame_seed), mod)


def generate_dataset(spec: DatasetSpec) -> Dataset:
    plan = frame_plan(spec)
    mods = spec.modulations
    iq = np.empty((spec.frames, 2, spec.n), dtype=np.float32)
    for i in range(spec.frames):
        crng = np.random.default_rng(int(plan.channel_seeds[i]))
        cfg = spec.channel.sample(crng, seed=int(crng.integers(0, 2**63)))
        frame = generate_frame(mods[plan.labels[i]], plan.snrs[i], cfg, spec.n, int(plan.frame_seeds[i]),
                               spec.sps, spec.rolloff, spec.span, label=int(plan.labels[i]))
        iq[i, 0] = frame.i
        iq[i, 1] = frame.q
    header = {
        "n": spec.n,
        "classes": list(spec.classes),
        "snr": spec.snr_header(),
        "master_seed": spec.master_seed,
        "spec": spec.to_dict(),
    }
    return Dataset(header=header, iq=iq, labels=plan.labels.astype(np.uint8),
                   snr=plan.snrs.astype(np.float32))
