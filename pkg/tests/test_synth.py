import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modrec.errors import ConfigurationError
from modrec.synth import (
    ChannelConfig,
    DatasetSpec,
    Modulation,
    add_awgn,
    apply_channel,
    constellation,
    cpfsk_waveform,
    frame_components,
    frame_plan,
    generate_dataset,
    generate_frame,
    map_bits,
    profile,
    pulse_shape,
    rrc_taps,
)
from modrec.synth.generate import CSPB_SNR_MU

TABLE_SCHEMES = [m for m in Modulation if not m.is_continuous_phase]


@pytest.mark.parametrize("mod", TABLE_SCHEMES, ids=lambda m: m.value)
def test_constellations_have_unit_power_and_full_size(mod):
    pts = constellation(mod)
    assert len(pts) == 2 ** mod.bits_per_symbol
    assert abs(np.mean(np.abs(pts) ** 2) - 1.0) < 1e-12
    assert len(np.unique(np.round(pts, 12))) == len(pts)


def test_bpsk_mapping():
    np.testing.assert_array_equal(map_bits("BPSK", [0, 1]), [1 + 0j, -1 + 0j])


def test_qam16_levels():
    pts = constellation("QAM16") * np.sqrt(10)
    assert set(np.round(pts.real, 12)) == {-3.0, -1.0, 1.0, 3.0}
    assert set(np.round(pts.imag, 12)) == {-3.0, -1.0, 1.0, 3.0}


def _nearest_neighbour_pairs(pts):
    d = np.abs(pts[:, None] - pts[None, :])
    np.fill_diagonal(d, np.inf)
    dmin = d.min()
    return [(a, b) for a, b in itertools.combinations(range(len(pts)), 2) if d[a, b] < dmin + 1e-9]


@pytest.mark.parametrize("mod", ["QPSK", "8PSK", "PAM4", "QAM16", "QAM64", "QAM256"])
def test_gray_adjacency_by_exhaustion(mod):
    pts = constellation(mod)
    pairs = _nearest_neighbour_pairs(pts)
    assert pairs
    for a, b in pairs:
        assert bin(a ^ b).count("1") == 1, f"{mod}: symbols {a} and {b} are adjacent"


def test_dqpsk_is_differential():
    bits = np.random.default_rng(0).integers(0, 2, 40)
    sym = map_bits("DQPSK", bits)
    ratio = sym[1:] / sym[:-1]
    # consecutive ratios are quarter turns determined by the dibit alone
    quarter = np.round(np.angle(ratio) / (np.pi / 2)) % 4
    dibits = bits.reshape(-1, 2)[1:] @ [2, 1]
    np.testing.assert_array_equal(quarter, np.array([0, 1, 3, 2])[dibits])
    np.testing.assert_allclose(np.abs(sym), 1.0)


def test_cpfsk_phase_is_continuous():
    bits = np.random.default_rng(1).integers(0, 2, 50)
    wave = cpfsk_waveform("MSK", bits, sps=8)
    steps = np.angle(wave[1:] / wave[:-1])
    np.testing.assert_allclose(np.abs(steps), np.pi * 0.5 / 8, atol=1e-12)


def test_map_bits_pads_with_rng_and_rejects_unknown():
    sym = map_bits("QAM16", [0, 1, 1], rng=np.random.default_rng(0))
    assert len(sym) == 1
    with pytest.raises(ConfigurationError):
        map_bits("OOK", [0, 1])
    with pytest.raises(ConfigurationError):
        map_bits("QPSK", [0, 1, 1])


# --- pulse shaping ---------------------------------------------------------------

def test_impulse_response_identity():
    taps = rrc_taps(0.35, 8, 8)
    out = pulse_shape([1.0], sps=8, rolloff=0.35, span=8, length=len(taps))
    np.testing.assert_allclose(out, taps, atol=0)


def test_zero_symbols_give_zero_output():
    assert not np.any(pulse_shape(np.zeros(20), sps=8))


def test_rrc_cascade_is_nyquist():
    # truncation ISI falls below 1e-3 once the span reaches ~24 symbols
    taps = rrc_taps(0.35, 24, 8)
    rc = np.convolve(taps, taps)
    centre = len(rc) // 2
    lags = rc[centre % 8::8]
    peak = np.argmax(np.abs(lags))
    assert lags[peak] == pytest.approx(1.0, abs=1e-12)
    assert np.abs(np.delete(lags, peak)).max() < 1e-3


@pytest.mark.parametrize("rolloff", [0.0, -0.1, 1.2])
def test_rolloff_out_of_range(rolloff):
    with pytest.raises(ConfigurationError):
        rrc_taps(rolloff, 8, 8)


def test_sps_below_two_rejected():
    with pytest.raises(ConfigurationError):
        pulse_shape([1.0], sps=1)


# --- channel ----------------------------------------------------------------------

def test_identity_channel_is_exact():
    x = np.random.default_rng(2).standard_normal(256) + 1j * np.random.default_rng(3).standard_normal(256)
    np.testing.assert_array_equal(apply_channel(x, ChannelConfig.identity()), x)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 1024), st.integers(0, 2**31))
def test_identity_channel_property(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    assert np.array_equal(apply_channel(x, ChannelConfig.identity()), x)


def test_cfo_quarter_cycle_rotates_ninety_degrees():
    cfg = ChannelConfig(num_taps=1, tap_gains=(1.0,), cfo=0.25)
    y = apply_channel(np.ones(12), cfg)
    np.testing.assert_allclose(y[1:] / y[:-1], 1j, atol=1e-12)


def test_static_three_tap_matches_naive_convolution():
    gains = (0.8 + 0.1j, -0.3 + 0.4j, 0.2 - 0.05j)
    cfg = ChannelConfig(num_taps=3, delay_spread=4, tap_gains=gains)
    rng = np.random.default_rng(4)
    x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    delays = [0, 2, 4]
    ref = np.zeros(64, dtype=complex)
    for t in range(64):
        for g, d in zip(gains, delays):
            if t - d >= 0:
                ref[t] += g * x[t - d]
    np.testing.assert_allclose(apply_channel(x, cfg), ref, atol=1e-12)


def test_random_static_taps_follow_power_profile():
    cfg = ChannelConfig(num_taps=3, delay_spread=4, decay=2.0, seed=0)
    p = cfg.power_profile()
    np.testing.assert_allclose(p.sum(), 1.0)
    assert p[0] > p[1] > p[2]


def test_doppler_makes_channel_time_varying():
    cfg = ChannelConfig(num_taps=1, max_doppler=0.01, seed=5)
    y = apply_channel(np.ones(512), cfg)
    assert np.std(np.abs(y)) > 1e-3
    static = apply_channel(np.ones(512), ChannelConfig(num_taps=1, seed=5))
    assert np.allclose(static, static[0])


def test_resampling_offset_changes_frame():
    x = np.exp(2j * np.pi * 0.01 * np.arange(256))
    y = apply_channel(x, ChannelConfig(num_taps=1, tap_gains=(1.0,), sro_ppm=500.0))
    assert not np.allclose(x, y)
    # a slow tone is well interpolated: the result is the tone resampled
    t = np.arange(256) * (1 + 500e-6)
    np.testing.assert_allclose(y[:-1], np.exp(2j * np.pi * 0.01 * t[:-1]), atol=1e-3)


def test_channel_config_validation():
    with pytest.raises(ConfigurationError):
        ChannelConfig(num_taps=6)
    with pytest.raises(ConfigurationError):
        ChannelConfig(num_taps=0)
    with pytest.raises(ConfigurationError):
        ChannelConfig(cfo=0.5)


# --- AWGN ----------------------------------------------------------------------------

def test_awgn_infinite_snr_is_identity():
    x = np.arange(5) + 1j
    np.testing.assert_array_equal(add_awgn(x, np.inf, np.random.default_rng(0)), x)


def test_awgn_zero_db_power_ratio():
    rng = np.random.default_rng(6)
    ratios = []
    for _ in range(10):
        x = np.exp(2j * np.pi * rng.random(1024))
        noise = add_awgn(x, 0.0, rng) - x
        ratios.append(10 * np.log10(np.mean(np.abs(x) ** 2) / np.mean(np.abs(noise) ** 2)))
    assert abs(np.mean(ratios)) < 0.5


def test_awgn_noise_moments():
    x = np.ones(100_000, dtype=complex)
    noise = add_awgn(x, 0.0, np.random.default_rng(7)) - x
    n = len(noise)
    # sigma^2 = 1 split evenly over I and Q
    for part in (noise.real, noise.imag):
        assert abs(part.mean()) < 3 * np.sqrt(0.5 / n)
        # var of the sample variance of a Gaussian is 2 sigma^4 / n
        assert abs(part.var() - 0.5) < 3 * np.sqrt(2 * 0.25 / n)


# --- frames and datasets --------------------------------------------------------------

@pytest.mark.parametrize("mod", list(Modulation), ids=lambda m: m.value)
def test_frames_are_unit_power(mod):
    cfg = ChannelConfig(num_taps=3, delay_spread=4, max_doppler=0.003, cfo=0.01, sro_ppm=50, phase=1.0, seed=9)
    for n in (128, 1024):
        frame = generate_frame(mod, 5.0, cfg, n, frame_seed=123)
        assert frame.i.shape == frame.q.shape == (n,)
        assert abs(np.mean(frame.i ** 2 + frame.q ** 2) - 1.0) < 1e-9


def test_generate_frame_is_deterministic():
    cfg = ChannelConfig(num_taps=2, delay_spread=3, seed=1)
    a = generate_frame("QAM64", 3.0, cfg, 128, frame_seed=42)
    b = generate_frame("QAM64", 3.0, cfg, 128, frame_seed=42)
    np.testing.assert_array_equal(a.as_array(), b.as_array())
    c = generate_frame("QAM64", 3.0, cfg, 128, frame_seed=43)
    assert not np.array_equal(a.as_array(), c.as_array())


@pytest.mark.parametrize("target", [-10.0, 0.0, 10.0, 20.0])
def test_realized_snr_matches_target(target):
    realized = []
    for seed in range(10):
        clean, noisy = frame_components("QPSK", target, ChannelConfig.identity(), 1024, frame_seed=seed)
        noise = noisy - clean
        realized.append(10 * np.log10(np.mean(np.abs(clean) ** 2) / np.mean(np.abs(noise) ** 2)))
    assert abs(np.mean(realized) - target) < 0.5


def test_radioml_profile_layout():
    spec = profile("radioml", frames=20 * 8 * 3)
    plan = frame_plan(spec)
    assert spec.n == 128
    assert len(np.unique(plan.snrs)) == 20
    # equal counts for every (SNR, class) pair
    pairs, counts = np.unique(np.stack([plan.snrs, plan.labels]), axis=1, return_counts=True)
    assert pairs.shape[1] == 160 and np.all(counts == 3)


def test_cspb_snr_mean():
    plan = frame_plan(profile("cspb", frames=10_000))
    assert abs(plan.snrs.mean() - CSPB_SNR_MU) < 1.0
    assert plan.snrs.min() >= -20 and plan.snrs.max() <= 40
    assert np.all(np.bincount(plan.labels) == 1250)


def test_impossible_balance_rejected():
    with pytest.raises(ConfigurationError, match="balanced"):
        DatasetSpec(classes=("BPSK", "QPSK", "8PSK"), frames=100, snr_mode="lognormal")
    with pytest.raises(ConfigurationError):
        DatasetSpec(classes=("BPSK", "QPSK"), frames=30, snr_grid=(0.0, 2.0, 4.0, 6.0))


def test_dataset_bytes_are_reproducible():
    spec = profile("radioml", frames=160, seed=11)
    a = generate_dataset(spec).to_bytes()
    b = generate_dataset(spec).to_bytes()
    assert a == b
    c = generate_dataset(profile("radioml", frames=160, seed=12)).to_bytes()
    assert a != c


def test_spec_dict_roundtrip():
    spec = profile("cspb", frames=16)
    assert DatasetSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ConfigurationError):
        DatasetSpec.from_dict({"frames": 8, "bogus": 1})
