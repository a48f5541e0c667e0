"""Simulated deployments: where the devices sit and what each one measures.

Every capture window gets its own stochastic master (fresh noise seed) while the
appliance waveform of a domain stays fixed. Device B starts capturing at t=0
and device A a random latency later, so A's preamble shows up at a positive
offset inside B's capture.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .. import alignment, bitext
from ..protocol.session import SessionParams
from ..signal_sim import (
    AdcConfig,
    DomainNoiseConfig,
    SignalTrace,
    apply_breaker_filter,
    observe,
    synth_master,
)

__all__ = [
    "Deployment",
    "PairSources",
    "derive_seed",
    "capture_duration",
    "aligned_noise_periods",
]

_SEED_SPACE = 2**63


def derive_seed(*path: int) -> int:
    """Independent 63-bit seed for a position in the (seed, trial, attempt, ...) tree."""
    return int(np.random.default_rng([int(p) for p in path]).integers(_SEED_SPACE))


@dataclass(frozen=True)
class Deployment:
    """Two devices on one domain.

    ``skew_range_ppm`` bounds the clock error drawn per device pair;
    ``breaker_hz`` puts a low-pass between the outlets (B sees the filtered
    line). ``local_noise_rms`` stands in for the distance between outlets.
    """

    noise: DomainNoiseConfig = field(default_factory=DomainNoiseConfig)
    skew_range_ppm: float = 20_000.0
    local_noise_rms: float = 0.002
    breaker_hz: float | None = None
    max_latency: float = 0.004

    @property
    def load_seed(self) -> int:
        return self.noise.effective_load_seed


def capture_duration(params: SessionParams, deployment: Deployment) -> float:
    slowest = params.nominal_rate * (1 - deployment.skew_range_ppm * 1e-6)
    return deployment.max_latency + params.capture_samples / slowest + 0.002


class PairSources:
    """Per-attempt captures for devices A and B of one pairing trial.

    ``source_a`` / ``source_b`` are the trace sources handed to the session
    endpoints. Both sides of an attempt come from the same master, synthesized
    once and cached, so the two endpoint threads may ask in either order.
    """

    def __init__(self, deployment: Deployment, params: SessionParams, seed: int):
        self.deployment = deployment
        self.params = params
        self.seed = int(seed)
        rng = np.random.default_rng([self.seed, 0xD0])
        r = deployment.skew_range_ppm
        skew_a, skew_b = rng.uniform(-r, r, size=2) if r > 0 else (0.0, 0.0)
        common = dict(
            nominal_rate=float(params.nominal_rate), local_noise_rms=deployment.local_noise_rms
        )
        self.adc_a = AdcConfig(skew_ppm=float(skew_a), **common)
        self.adc_b = AdcConfig(skew_ppm=float(skew_b), **common)
        self._cache: dict[int, tuple[SignalTrace, SignalTrace, float]] = {}
        self._lock = threading.Lock()

    def master_config(self, attempt: int) -> DomainNoiseConfig:
        return replace(
            self.deployment.noise,
            seed=derive_seed(self.seed, attempt, 0x5EED),
            load_seed=self.deployment.load_seed,
        )

    def latency(self, attempt: int) -> float:
        rng = np.random.default_rng([self.seed, attempt, 0x1A7])
        return float(rng.uniform(0.0, self.deployment.max_latency))

    def capture(self, attempt: int) -> tuple[SignalTrace, SignalTrace, float]:
        """(trace A, trace B, A's start latency in seconds)."""
        with self._lock:
            hit = self._cache.get(attempt)
            if hit is None:
                hit = self._cache[attempt] = self._synthesize(attempt)
            return hit

    def _synthesize(self, attempt: int):
        n = self.params.capture_samples
        master = synth_master(self.master_config(attempt), capture_duration(self.params, self.deployment))
        lat = self.latency(attempt)
        adc_a = replace(self.adc_a, seed=derive_seed(self.seed, attempt, 0xA))
        adc_b = replace(self.adc_b, seed=derive_seed(self.seed, attempt, 0xB))
        trace_a = observe(master, adc_a, lat, n)
        view_b = master
        if self.deployment.breaker_hz is not None:
            view_b = apply_breaker_filter(master, self.deployment.breaker_hz)
        trace_b = observe(view_b, adc_b, 0.0, n)
        return trace_a, trace_b, lat

    def source_a(self, attempt: int) -> SignalTrace:
        return self.capture(attempt)[0]

    def source_b(self, attempt: int) -> SignalTrace:
        return self.capture(attempt)[1]

    def true_offset(self, attempt: int, spp_b: int, c_l: int) -> float:
        """Where A's first sample lands in B's capture after rate matching."""
        lat = self.capture(attempt)[2]
        return lat * self.adc_b.actual_rate * c_l / spp_b

    def forget(self) -> None:
        with self._lock:
            self._cache.clear()


def aligned_noise_periods(
    trace_a: SignalTrace, trace_b: SignalTrace, params: SessionParams, n_periods: int
) -> tuple[np.ndarray, np.ndarray]:
    """Both devices' noise periods ``1..n_periods`` after rate matching and sync.

    Runs the same estimation, resampling and preamble search as a session and
    returns two ``(n_periods, c_l)`` arrays.
    """
    spp_a = alignment.estimate_spp(trace_a, params.nominal_rate, params.sweep_radius).spp
    spp_b = alignment.estimate_spp(trace_b, params.nominal_rate, params.sweep_radius).spp
    c_l = alignment.negotiate_rate(spp_a, spp_b)
    xa = alignment.resample(trace_a, spp_a, c_l).samples
    xb = alignment.resample(trace_b, spp_b, c_l).samples
    d = alignment.sync_offset(xa[:c_l], xb, params.search_periods * c_l).offset_samples
    pa = bitext.slice_periods(xa, c_l, n_periods + 2)
    pb = bitext.slice_periods(xb, c_l, n_periods + 2, start=d)
    na = np.stack([p.values for p in bitext.noise_periods(pa, n_periods)])
    nb = np.stack([p.values for p in bitext.noise_periods(pb, n_periods)])
    return na, nb
