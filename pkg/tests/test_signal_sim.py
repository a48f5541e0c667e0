import numpy as np
import pytest
from scipy import signal, stats

from oracles import sine_master, zero_crossing_period
from voltkey.signal_sim import (
    AdcConfig,
    DomainNoiseConfig,
    MasterSignal,
    SimulationError,
    apply_breaker_filter,
    observe,
    quantize,
    synth_master,
)

SILENT = dict(
    residual_fundamental_amp=0.0,
    harmonic_amps=(),
    background_noise_rms=0.0,
    impulse_rate=0.0,
    continuous_load_noise_rms=0.0,
)


def test_noiseless_config_is_a_pure_sinusoid():
    cfg = DomainNoiseConfig(**{**SILENT, "residual_fundamental_amp": 0.2})
    m = synth_master(cfg, 0.1)
    assert np.max(np.abs(m.samples)) == pytest.approx(0.2, abs=1e-6)
    # 60 Hz: one period is 1e6/60 master samples
    assert zero_crossing_period(m.samples, 1e6 / 60) == pytest.approx(1e6 / 60, rel=1e-4)


def test_master_is_deterministic_and_sized():
    cfg = DomainNoiseConfig(seed=42)
    a = synth_master(cfg, 0.05)
    b = synth_master(cfg, 0.05)
    assert a == b
    assert len(a) == round(a.rate * 0.05)
    assert synth_master(DomainNoiseConfig(seed=43), 0.05) != a


def test_master_samples_are_read_only():
    m = synth_master(DomainNoiseConfig(), 0.01)
    with pytest.raises(ValueError):
        m.samples[0] = 1.0


@pytest.mark.parametrize("duration", [0.0, -1.0])
def test_master_rejects_bad_duration(duration):
    with pytest.raises(SimulationError):
        synth_master(DomainNoiseConfig(), duration)


def test_master_rejects_zero_rate():
    with pytest.raises(SimulationError):
        synth_master(DomainNoiseConfig(master_rate=0.0), 0.1)


def test_negative_amplitude_rejected():
    with pytest.raises(SimulationError):
        DomainNoiseConfig(background_noise_rms=-0.1)


def test_noise_makes_consecutive_periods_differ():
    cfg = DomainNoiseConfig(**{**SILENT, "residual_fundamental_amp": 0.1,
                               "background_noise_rms": 0.01, "master_rate": 600_000.0})
    x = synth_master(cfg, 0.1).samples
    period = 10_000
    assert np.any(x[:period] != x[period : 2 * period])


def _count_events(x, threshold, min_gap):
    above = np.flatnonzero(np.abs(x) > threshold)
    if above.size == 0:
        return 0
    return 1 + int(np.sum(np.diff(above) > min_gap))


@pytest.mark.parametrize("seed", range(5))
def test_impulse_count_matches_poisson(seed):
    cfg = DomainNoiseConfig(**{**SILENT, "impulse_rate": 50.0,
                               "impulse_amp_range": (0.5, 1.0), "seed": seed})
    m = synth_master(cfg, 1.0)
    count = _count_events(m.samples, 0.1, min_gap=500)
    lo, hi = stats.poisson.ppf([0.005, 0.995], 50)
    assert lo <= count <= hi


def test_impulse_counts_follow_an_independent_poisson_sampler():
    counts = []
    for seed in range(40):
        cfg = DomainNoiseConfig(**{**SILENT, "impulse_rate": 50.0,
                                   "impulse_amp_range": (0.5, 1.0), "seed": 100 + seed,
                                   "master_rate": 200_000.0})
        counts.append(_count_events(synth_master(cfg, 1.0).samples, 0.1, min_gap=100))
    reference = np.random.default_rng(7).poisson(50, size=4000)
    # two-sample test of the simulated counts against the reference sampler
    assert stats.mannwhitneyu(counts, reference).pvalue > 0.001
    assert abs(np.mean(counts) - 50) < 4 * np.sqrt(50 / 40) + 1.5


def test_breaker_leaves_dc_alone():
    m = MasterSignal(np.full(10_000, 0.7), 1e6, 0.01)
    out = apply_breaker_filter(m, 1000.0)
    np.testing.assert_allclose(out.samples, 0.7, rtol=1e-12)


def test_breaker_passes_fundamental():
    m = sine_master(1e6 / 60, 1e6, 0.2)
    out = apply_breaker_filter(m, 600.0)
    steady = out.samples[len(out) // 2 :]
    assert (steady.max() - steady.min()) / 2 >= 0.99


def test_breaker_attenuates_high_band():
    rng = np.random.default_rng(3)
    m = MasterSignal(rng.standard_normal(500_000), 1e6, 0.5)
    out = apply_breaker_filter(m, 1000.0)
    f, p_in = signal.welch(m.samples, fs=1e6, nperseg=4096)
    _, p_out = signal.welch(out.samples, fs=1e6, nperseg=4096)
    band = f > 10_000
    ratio_db = 10 * np.log10(p_in[band].sum() / p_out[band].sum())
    assert ratio_db >= 20


@pytest.mark.parametrize("cutoff", [0.0, -5.0, 500_000.0, 700_000.0])
def test_breaker_cutoff_out_of_range(cutoff):
    with pytest.raises(SimulationError):
        apply_breaker_filter(MasterSignal(np.zeros(100), 1e6, 1e-4), cutoff)


def test_transparent_adc_quantizes_the_master():
    m = synth_master(DomainNoiseConfig(seed=5), 0.01)
    adc = AdcConfig(nominal_rate=1e6, local_noise_rms=0.0)
    t = observe(m, adc, 0.0, 5000, gain=1.0)
    expected = quantize(m.samples[:5000], adc, 1.0)
    np.testing.assert_array_equal(t.samples, expected)
    assert t.gain_used == 1.0


def test_rail_clipping():
    adc = AdcConfig(resolution_bits=12, full_scale=3.3)
    codes = quantize(np.array([10.0, -10.0, 0.0]), adc, 1.0)
    assert codes.tolist() == [4095, 0, 2048]


def test_agc_picks_smallest_sufficient_gain():
    m = sine_master(1e6 / 60, 1e6, 0.05, amp=0.2)  # 0.4 V peak-to-peak
    t = observe(m, AdcConfig(local_noise_rms=0.0), 0.0, 3000)
    # 0.4 * 4 = 1.6 V < 0.6 * 3.3; 0.4 * 8 = 3.2 V is the first to reach 60%
    assert t.gain_used == 8.0
    assert t.samples.min() >= 0 and t.samples.max() <= 4095


def test_agc_falls_back_to_largest_gain():
    m = sine_master(1e6 / 60, 1e6, 0.05, amp=1e-4)
    t = observe(m, AdcConfig(local_noise_rms=0.0), 0.0, 3000)
    assert t.gain_used == 16.0


def test_window_past_master_end_rejected():
    m = synth_master(DomainNoiseConfig(), 0.01)
    with pytest.raises(SimulationError):
        observe(m, AdcConfig(), 0.005, 1000)


@pytest.mark.parametrize("skew", [-170_001, 170_001])
def test_skew_bound(skew):
    with pytest.raises(SimulationError):
        AdcConfig(skew_ppm=skew)


@pytest.mark.parametrize("bits", [7, 17])
def test_resolution_bound(bits):
    with pytest.raises(SimulationError):
        AdcConfig(resolution_bits=bits)


def test_colocated_devices_correlate():
    cfg = DomainNoiseConfig(seed=11)
    m = synth_master(cfg, 0.2)
    local = 0.1 * cfg.background_noise_rms
    a = observe(m, AdcConfig(local_noise_rms=local, seed=1), 0.0, 15_000)
    b = observe(m, AdcConfig(local_noise_rms=local, seed=2), 0.0, 15_000)
    assert not np.array_equal(a.samples, b.samples)
    assert np.corrcoef(a.samples, b.samples)[0, 1] > 0.9


def test_correlation_falls_as_local_noise_grows():
    levels = [0.0, 0.02, 0.05, 0.1]
    means = []
    for local in levels:
        rs = []
        for seed in range(30):
            m = synth_master(DomainNoiseConfig(seed=seed, master_rate=200_000.0), 0.06)
            a = observe(m, AdcConfig(local_noise_rms=local, seed=2 * seed), 0.0, 4000, gain=4.0)
            b = observe(m, AdcConfig(local_noise_rms=local, seed=2 * seed + 1), 0.0, 4000, gain=4.0)
            rs.append(np.corrcoef(a.samples, b.samples)[0, 1])
        means.append(np.mean(rs))
    assert all(x >= y for x, y in zip(means, means[1:]))


def test_skew_fidelity_by_zero_crossings():
    rate = 85_400.0
    c_star = rate / 60
    m = sine_master(1e6 / 60, 1e6, 0.5)
    # actual rate = nominal * (1 + skew), so a period spans c* * 1.02 samples
    t = observe(m, AdcConfig(nominal_rate=rate, skew_ppm=20_000, local_noise_rms=0.0), 0.0, 30_000)
    period = zero_crossing_period(t.samples, c_star)
    assert abs(period - c_star * 1.02) <= 0.5


def test_observed_codes_stay_in_range():
    m = synth_master(DomainNoiseConfig(seed=2, impulse_amp_range=(1.0, 3.0)), 0.05)
    t = observe(m, AdcConfig(local_noise_rms=0.5, seed=4), 0.0, 4000)
    assert t.samples.min() >= 0 and t.samples.max() <= 4095
