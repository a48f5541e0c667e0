"""Software stand-in for the power line, the analog front-end and the ADC.

A :class:`MasterSignal` is a dense (1 MSPS by default) waveform shared by every
outlet of one electrical domain. Devices sample it through :func:`observe` with
their own skewed clock, local noise, gain control and quantizer.

The master is the sum of

* a mains-synchronous part: residual fundamental, harmonics and the waveform of
  continuously running appliances (shape fixed per domain by ``load_seed``),
* stochastic parts: band-limited background noise and Poisson impulses with an
  exponential decay envelope (fixed per capture window by ``seed``).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy import signal

__all__ = [
    "DomainNoiseConfig",
    "MasterSignal",
    "AdcConfig",
    "SignalTrace",
    "synth_master",
    "apply_breaker_filter",
    "observe",
    "SimulationError",
]

_PHASE_TABLE_SIZE = 8192


class SimulationError(ValueError):
    """Invalid simulation request (bad duration, window out of range, ...)."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DomainNoiseConfig:
    """Noise model of one electrical domain.

    ``seed`` selects the stochastic content of a capture window, ``load_seed``
    the deterministic appliance waveform and harmonic phases of the domain.
    When ``load_seed`` is None it is derived from ``seed``.
    """

    fundamental_hz: float = 60.0
    residual_fundamental_amp: float = 0.12
    harmonic_amps: tuple[tuple[int, float], ...] = ((3, 0.05), (5, 0.03), (7, 0.015))
    background_noise_rms: float = 0.03
    background_bandwidth_hz: float = 2500.0
    impulse_rate: float = 150.0
    impulse_amp_range: tuple[float, float] = (0.05, 0.25)
    impulse_decay: float = 3e-4
    continuous_load_noise_rms: float = 0.02
    load_jitter: float = 0.05
    master_rate: float = 1_000_000.0
    seed: int = 0
    load_seed: int | None = None

    def __post_init__(self):
        amps = [
            self.residual_fundamental_amp,
            self.background_noise_rms,
            self.continuous_load_noise_rms,
            self.load_jitter,
            *self.impulse_amp_range,
            *(a for _, a in self.harmonic_amps),
        ]
        if any(a < 0 for a in amps):
            raise SimulationError("noise amplitudes must be non-negative")
        if self.impulse_amp_range[0] > self.impulse_amp_range[1]:
            raise SimulationError("impulse_amp_range must be (low, high)")
        if self.impulse_rate < 0 or self.impulse_decay <= 0:
            raise SimulationError("impulse_rate must be >= 0 and impulse_decay > 0")
        if self.fundamental_hz <= 0:
            raise SimulationError("fundamental_hz must be positive")
        object.__setattr__(
            self, "harmonic_amps", tuple((int(h), float(a)) for h, a in self.harmonic_amps)
        )
        object.__setattr__(self, "impulse_amp_range", tuple(self.impulse_amp_range))

    @property
    def effective_load_seed(self) -> int:
        return self.seed if self.load_seed is None else self.load_seed


@dataclass(frozen=True, eq=False)
class MasterSignal:
    samples: np.ndarray
    rate: float
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "samples", _freeze(np.asarray(self.samples, dtype=float)))
        if len(self.samples) != round(self.rate * self.duration):
            raise SimulationError("master length must equal round(rate * duration)")

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, MasterSignal):
            return NotImplemented
        return (
            self.rate == other.rate
            and self.duration == other.duration
            and np.array_equal(self.samples, other.samples)
        )


@dataclass(frozen=True)
class AdcConfig:
    nominal_rate: float = 85_400.0
    skew_ppm: float = 0.0
    local_noise_rms: float = 0.002
    resolution_bits: int = 12
    full_scale: float = 3.3
    gain_levels: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)
    seed: int = 0

    def __post_init__(self):
        if abs(self.skew_ppm) > 170_000:
            raise SimulationError("|skew_ppm| must not exceed 170000")
        if not 8 <= self.resolution_bits <= 16:
            raise SimulationError("resolution_bits must lie in [8, 16]")
        if self.nominal_rate <= 0 or self.full_scale <= 0:
            raise SimulationError("nominal_rate and full_scale must be positive")
        if self.local_noise_rms < 0:
            raise SimulationError("local_noise_rms must be non-negative")
        levels = tuple(sorted(float(g) for g in self.gain_levels))
        if not levels or levels[0] <= 0:
            raise SimulationError("gain_levels must be a non-empty list of positive gains")
        object.__setattr__(self, "gain_levels", levels)

    @property
    def actual_rate(self) -> float:
        return self.nominal_rate * (1.0 + self.skew_ppm * 1e-6)


@dataclass(frozen=True, eq=False)
class SignalTrace:
    """One device capture.

    ``samples`` are integer ADC codes straight out of :func:`observe`; after
    rate matching they become real-valued codes on the same scale.
    """

    samples: np.ndarray
    nominal_rate: float
    actual_rate: float
    start_offset: float = 0.0
    gain_used: float = 1.0
    resolution_bits: int = 12

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.dtype.kind not in "iuf":
            raise SimulationError("trace samples must be numeric")
        if arr.size and (arr.min() < 0 or arr.max() > (1 << self.resolution_bits) - 1):
            raise SimulationError("trace sample outside ADC code range")
        object.__setattr__(self, "samples", _freeze(arr))

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, SignalTrace):
            return NotImplemented
        return (
            self.nominal_rate == other.nominal_rate
            and self.actual_rate == other.actual_rate
            and self.start_offset == other.start_offset
            and self.gain_used == other.gain_used
            and self.resolution_bits == other.resolution_bits
            and np.array_equal(self.samples, other.samples)
        )


@functools.lru_cache(maxsize=32)
def _bandlimit_sos(bandwidth_hz: float, rate: float):
    sos = signal.butter(2, bandwidth_hz, fs=rate, output="sos")
    # white-noise power gain, used to hit the requested output rms
    impulse = np.zeros(int(20 * rate / bandwidth_hz) + 64)
    impulse[0] = 1.0
    gain = float(np.sum(signal.sosfilt(sos, impulse) ** 2))
    return sos, gain


@functools.lru_cache(maxsize=64)
def _periodic_tables(
    fundamental_amp: float, harmonic_amps: tuple, load_rms: float, load_seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """One mains period of (fundamental + harmonics, appliance waveform) on a phase grid."""
    rng = np.random.default_rng([load_seed, 0x10AD])
    phase = np.arange(_PHASE_TABLE_SIZE + 1) / _PHASE_TABLE_SIZE
    mains = fundamental_amp * np.sin(2 * np.pi * phase)
    harmonic_phases = rng.uniform(0, 2 * np.pi, size=len(harmonic_amps))
    for (h, amp), ph in zip(harmonic_amps, harmonic_phases):
        mains += amp * np.sin(2 * np.pi * h * phase + ph)
    load = np.zeros(_PHASE_TABLE_SIZE + 1)
    if load_rms > 0:
        # random line spectrum over harmonics 2..50
        n_h = 50
        spectrum = np.zeros(_PHASE_TABLE_SIZE // 2 + 1, dtype=complex)
        spectrum[2 : n_h + 1] = rng.standard_normal(n_h - 1) + 1j * rng.standard_normal(n_h - 1)
        one = np.fft.irfft(spectrum, n=_PHASE_TABLE_SIZE)
        one *= load_rms / np.sqrt(np.mean(one**2))
        load = np.append(one, one[0])
    return _freeze(mains), _freeze(load)


def synth_master(config: DomainNoiseConfig, duration: float) -> MasterSignal:
    """Synthesize ``duration`` seconds of the domain's line waveform."""
    if not duration > 0:
        raise SimulationError("duration must be positive")
    if not config.master_rate > 0:
        raise SimulationError("master_rate must be positive")
    rate = float(config.master_rate)
    n = round(rate * duration)
    rng = np.random.default_rng([config.seed, 0x5EED])

    # mains phase at the start of the window is arbitrary
    start_phase = rng.uniform()
    cycles = start_phase + np.arange(n) * (config.fundamental_hz / rate)
    grid = (cycles % 1.0) * _PHASE_TABLE_SIZE
    mains, load = _periodic_tables(
        config.residual_fundamental_amp,
        config.harmonic_amps,
        config.continuous_load_noise_rms,
        config.effective_load_seed,
    )
    x = np.interp(grid, np.arange(_PHASE_TABLE_SIZE + 1), mains + load)

    if config.continuous_load_noise_rms > 0 and config.load_jitter > 0:
        # appliance draw wobbles slightly from one cycle to the next
        n_cycles = int(cycles[-1]) + 2
        knots = config.load_jitter * rng.standard_normal(n_cycles)
        x += load[grid.astype(np.int64)] * np.interp(cycles, np.arange(n_cycles), knots)

    stochastic = np.zeros(n)
    sos, power_gain = _bandlimit_sos(config.background_bandwidth_hz, rate)
    if config.background_noise_rms > 0:
        stochastic += rng.standard_normal(n) * (config.background_noise_rms / np.sqrt(power_gain))

    n_impulses = rng.poisson(config.impulse_rate * duration) if config.impulse_rate > 0 else 0
    if n_impulses and config.impulse_amp_range[1] > 0:
        where = rng.integers(0, n, size=n_impulses)
        lo, hi = config.impulse_amp_range
        amps = rng.uniform(lo, hi, size=n_impulses) * rng.choice([-1.0, 1.0], size=n_impulses)
        train = np.zeros(n)
        np.add.at(train, where, amps)
        decay = np.exp(-1.0 / (config.impulse_decay * rate))
        stochastic += signal.lfilter([1.0], [1.0, -decay], train)

    if np.any(stochastic):
        x += signal.sosfilt(sos, stochastic)
    return MasterSignal(x, rate, n / rate)


def apply_breaker_filter(master: MasterSignal, cutoff_hz: float) -> MasterSignal:
    """Single-pole low-pass modelling a circuit breaker between outlets."""
    if not 0 < cutoff_hz < master.rate / 2:
        raise SimulationError("cutoff_hz must lie in (0, rate/2)")
    alpha = 1.0 - np.exp(-2 * np.pi * cutoff_hz / master.rate)
    b, a = [alpha], [1.0, alpha - 1.0]
    x = master.samples
    if len(x) == 0:
        return master
    zi = signal.lfilter_zi(b, a) * x[0]
    y, _ = signal.lfilter(b, a, x, zi=zi)
    return MasterSignal(y, master.rate, master.duration)


def _select_gain(peak_to_peak: float, adc: AdcConfig) -> float:
    target = 0.6 * adc.full_scale
    for g in adc.gain_levels:
        if g * peak_to_peak >= target:
            return g
    return adc.gain_levels[-1]


def quantize(volts: np.ndarray, adc: AdcConfig, gain: float) -> np.ndarray:
    """Offset to mid-scale, amplify, clip at the rails and quantize."""
    top = (1 << adc.resolution_bits) - 1
    analog = gain * volts + adc.full_scale / 2
    codes = np.rint(analog / adc.full_scale * (1 << adc.resolution_bits))
    return np.clip(codes, 0, top).astype(np.int64)


def observe(
    master: MasterSignal,
    adc: AdcConfig,
    start_offset: float,
    n_samples: int,
    gain: float | None = None,
) -> SignalTrace:
    """Sample ``master`` the way a device with clock/ADC ``adc`` would.

    Samples are taken at ``start_offset + k / actual_rate`` by linear
    interpolation of the master. ``gain`` overrides the automatic gain choice.
    """
    if n_samples <= 0:
        raise SimulationError("n_samples must be positive")
    if start_offset < 0:
        raise SimulationError("start_offset must be non-negative")
    rate = adc.actual_rate
    pos = (start_offset + np.arange(n_samples) / rate) * master.rate
    if pos[-1] > len(master) - 1 + 1e-9:
        raise SimulationError(
            f"window [{start_offset:.6f}s, +{n_samples} samples] exceeds master "
            f"duration {master.duration:.6f}s"
        )
    v = np.interp(pos, np.arange(len(master)), master.samples)
    if adc.local_noise_rms > 0:
        rng = np.random.default_rng([adc.seed, 0xADC])
        v = v + rng.normal(0.0, adc.local_noise_rms, size=n_samples)
    if gain is None:
        gain = _select_gain(float(v.max() - v.min()), adc)
    return SignalTrace(
        samples=quantize(v, adc, gain),
        nominal_rate=adc.nominal_rate,
        actual_rate=rate,
        start_offset=start_offset,
        gain_used=float(gain),
        resolution_bits=adc.resolution_bits,
    )
