"""Long bit streams from the initiator side of simulated sessions."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .. import alignment, bitext
from ..signal_sim import AdcConfig, DomainNoiseConfig, observe, synth_master
from .scenario import derive_seed

__all__ = ["key_stream"]


def key_stream(
    n_bits: int,
    seed: int = 0,
    n_b: int = 10,
    noise: DomainNoiseConfig | None = None,
    chunk_seconds: float = 10.0,
    nominal_rate: int = 85_400,
) -> np.ndarray:
    """Concatenated initiator key bits over consecutive capture windows.

    Each window is one long capture whose periods after the preamble are
    turned into ``n_b`` bits each, exactly as key bits are in a session. The
    master defaults to a 250 kHz grid here, which keeps a million bits within
    reach on one core while staying far above the 2.5 kHz noise band.
    """
    noise = noise or DomainNoiseConfig(master_rate=250_000.0)
    out: list[np.ndarray] = []
    have = 0
    chunk = 0
    while have < n_bits:
        cfg = replace(
            noise, seed=derive_seed(seed, chunk, 0x57), load_seed=noise.effective_load_seed
        )
        master = synth_master(cfg, chunk_seconds)
        adc = AdcConfig(
            nominal_rate=float(nominal_rate),
            skew_ppm=float(np.random.default_rng([seed, chunk]).uniform(-20_000, 20_000)),
            seed=derive_seed(seed, chunk, 0xA),
        )
        n = int((chunk_seconds - 0.01) * adc.actual_rate)
        trace = observe(master, adc, 0.0, n)
        spp = alignment.estimate_spp(trace).spp
        x = alignment.resample(trace, spp, spp).samples
        n_periods = len(x) // spp
        periods = bitext.slice_periods(x, spp, n_periods)
        n_p = n_periods - 2
        seq, _ = bitext.generate_sequence(periods, n_p, n_b, n_p * n_b)
        out.append(seq.bits)
        have += len(seq.bits)
        chunk += 1
    return np.concatenate(out)[:n_bits]
