"""Sampling-rate estimation, rate matching and preamble time sync.

All correlations are Pearson coefficients on de-meaned windows, so devices with
different gains or DC offsets compare cleanly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .signal_sim import SignalTrace

__all__ = [
    "AlignmentError",
    "SppEstimate",
    "SyncResult",
    "pearson",
    "estimate_spp",
    "resample",
    "negotiate_rate",
    "sync_offset",
    "MAINS_HZ",
    "N_AVERAGE",
    "DEFAULT_SWEEP_RADIUS",
]

MAINS_HZ = 60.0
N_AVERAGE = 20
DEFAULT_SWEEP_RADIUS = 30
TIE_TOLERANCE = 1e-12


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class SppEstimate:
    spp: int
    correlation: float
    sweep: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class SyncResult:
    offset_samples: int
    correlation: float


def pearson(x, y) -> float:
    """Pearson correlation of two equal-length sequences (0.0 if either is flat)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise AlignmentError("pearson needs equal-length inputs")
    x = x - x.mean()
    y = y - y.mean()
    denom = np.sqrt(np.dot(x, x) * np.dot(y, y))
    if denom == 0:
        return 0.0
    return float(np.dot(x, y) / denom)


def _first_max(values: np.ndarray) -> int:
    # smallest index among near-ties
    best = np.max(values)
    return int(np.flatnonzero(values >= best - TIE_TOLERANCE)[0])


def _samples(trace) -> np.ndarray:
    if isinstance(trace, SignalTrace):
        return np.asarray(trace.samples, dtype=float)
    return np.asarray(trace, dtype=float)


def estimate_spp(
    trace: SignalTrace | np.ndarray,
    nominal_rate: float | None = None,
    sweep_radius: int = DEFAULT_SWEEP_RADIUS,
    n_average: int = N_AVERAGE,
) -> SppEstimate:
    """Find the integer samples-per-mains-period of ``trace``.

    Every candidate ``c`` around ``round(nominal_rate / 60)`` slices the trace
    into length-``c`` chunks; the chunk-wise mean of chunks ``1..n_average`` is
    correlated against chunk 0 and the best-correlated ``c`` wins.
    """
    x = _samples(trace)
    if nominal_rate is None:
        if not isinstance(trace, SignalTrace):
            raise AlignmentError("nominal_rate is required for raw sample arrays")
        nominal_rate = trace.nominal_rate
    if sweep_radius < 0 or n_average < 1:
        raise AlignmentError("sweep_radius must be >= 0 and n_average >= 1")
    centre = round(nominal_rate / MAINS_HZ)
    candidates = range(max(2, centre - sweep_radius), centre + sweep_radius + 1)
    needed = (n_average + 1) * candidates[-1]
    if len(x) < needed:
        raise AlignmentError(
            f"trace of {len(x)} samples is too short for the sweep (need {needed})"
        )
    sweep = []
    for c in candidates:
        chunks = x[: (n_average + 1) * c].reshape(n_average + 1, c)
        sweep.append(pearson(chunks[0], chunks[1:].mean(axis=0)))
    corr = np.array(sweep)
    best = _first_max(corr)
    return SppEstimate(
        spp=candidates[best],
        correlation=float(corr[best]),
        sweep=tuple(zip(candidates, (float(v) for v in corr))),
    )


def resample(trace: SignalTrace | np.ndarray, from_spp: int, to_spp: int):
    """Linear-interpolation rate change by ``to_spp / from_spp``.

    Output sample ``j`` sits at input position ``j * from_spp / to_spp``; the
    output holds ``floor(len * to_spp / from_spp)`` samples. Traces come back as
    traces (real-valued codes), arrays as arrays.
    """
    if from_spp <= 0 or to_spp <= 0:
        raise AlignmentError("SPP values must be positive")
    x = _samples(trace)
    if from_spp == to_spp:
        out = x.copy()
    else:
        n_out = (len(x) * to_spp) // from_spp
        pos = np.arange(n_out) * (from_spp / to_spp)
        out = np.interp(pos, np.arange(len(x)), x)
    if isinstance(trace, SignalTrace):
        if from_spp == to_spp:
            return trace
        return SignalTrace(
            samples=out,
            nominal_rate=trace.nominal_rate,
            actual_rate=trace.actual_rate * to_spp / from_spp,
            start_offset=trace.start_offset,
            gain_used=trace.gain_used,
            resolution_bits=trace.resolution_bits,
        )
    return out


def negotiate_rate(c_a: int, c_b: int) -> int:
    """Common SPP both parties resample to: the lower of the two."""
    return min(int(c_a), int(c_b))


def sliding_pearson(preamble, x) -> np.ndarray:
    """Pearson correlation of ``preamble`` against every full window of ``x``."""
    p = np.asarray(preamble, dtype=float)
    x = np.asarray(x, dtype=float)
    m = len(p)
    if m == 0 or len(x) < m:
        raise AlignmentError("trace shorter than preamble")
    p = p - p.mean()
    x = x - x.mean()
    num = signal.correlate(x, p, mode="valid", method="auto")
    c1 = np.concatenate(([0.0], np.cumsum(x)))
    c2 = np.concatenate(([0.0], np.cumsum(x * x)))
    s1 = c1[m:] - c1[:-m]
    s2 = c2[m:] - c2[:-m]
    var = np.maximum(s2 - s1 * s1 / m, 0.0)
    denom = np.sqrt(var * np.dot(p, p))
    out = np.zeros_like(num)
    ok = denom > 1e-12 * max(1.0, float(np.max(denom, initial=0.0)))
    out[ok] = num[ok] / denom[ok]
    return np.clip(out, -1.0, 1.0)


def sync_offset(
    preamble, trace: SignalTrace | np.ndarray, search_span: int | None = None
) -> SyncResult:
    """Offset ``d`` in ``trace`` whose window best matches ``preamble``.

    ``search_span`` caps the largest offset tried (default: two preamble
    lengths, i.e. two mains periods). Ties resolve to the smallest offset.
    """
    p = np.asarray(preamble, dtype=float)
    x = _samples(trace)
    c = len(p)
    if len(x) < c or c == 0:
        raise AlignmentError("trace shorter than preamble")
    if search_span is None:
        search_span = 2 * c
    last = min(int(search_span), len(x) - c)
    corr = sliding_pearson(p, x[: last + c])
    d = _first_max(corr)
    return SyncResult(offset_samples=d, correlation=float(corr[d]))
