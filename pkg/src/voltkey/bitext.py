"""Turning synchronized mains periods into key bits.

Consecutive periods are subtracted to cancel the periodic mains waveform. Each
resulting noise period is cut into ``n_b`` equal bins; the indexer publishes the
position of the largest-magnitude sample of every bin, and both sides emit a 1
where the noise at that position is at or above the noise period's mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "BitExtractionError",
    "NoisePeriod",
    "IndexSchedule",
    "BitSequence",
    "Role",
    "slice_periods",
    "noise_periods",
    "select_indices",
    "extract_bits",
    "generate_sequence",
    "KEY_CONFIGS",
]

# (n_p, n_b) pairs yielding 128-bit sequences
KEY_CONFIGS = ((22, 6), (16, 8), (13, 10))


class BitExtractionError(ValueError):
    pass


class Role(str, Enum):
    INDEXER = "indexer"
    FOLLOWER = "follower"


@dataclass(frozen=True, eq=False)
class NoisePeriod:
    values: np.ndarray
    period_index: int

    def __post_init__(self):
        if self.period_index < 1:
            raise BitExtractionError("the preamble (p = 0) never yields a noise period")
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class IndexSchedule:
    """Per-period, per-bin sample positions, shape ``(n_p, n_b)``."""

    entries: np.ndarray
    period_length: int

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.int64)
        if entries.ndim != 2:
            raise BitExtractionError("index schedule must be 2-D (n_p, n_b)")
        if entries.size and (entries.min() < 0 or entries.max() >= self.period_length):
            raise BitExtractionError("index schedule entry outside the period")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def n_p(self) -> int:
        return self.entries.shape[0]

    @property
    def n_b(self) -> int:
        return self.entries.shape[1]

    def in_bins(self) -> bool:
        w = self.period_length // self.n_b
        lo = np.arange(self.n_b) * w
        return bool(np.all((self.entries >= lo) & (self.entries < lo + w)))

    def __eq__(self, other):
        if not isinstance(other, IndexSchedule):
            return NotImplemented
        return self.period_length == other.period_length and np.array_equal(
            self.entries, other.entries
        )


@dataclass(frozen=True, eq=False)
class BitSequence:
    """Bits with the (period, bin) each one came from. Periods count from 1."""

    bits: np.ndarray
    provenance: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.size and bits.max() > 1:
            raise BitExtractionError("bits must be 0/1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        if self.provenance and len(self.provenance) != len(bits):
            raise BitExtractionError("provenance length must match bit count")

    def __len__(self):
        return len(self.bits)

    def __eq__(self, other):
        if not isinstance(other, BitSequence):
            return NotImplemented
        return np.array_equal(self.bits, other.bits) and self.provenance == other.provenance

    def to_string(self) -> str:
        return "".join(map(str, self.bits.tolist()))


def slice_periods(samples, period_length: int, count: int, start: int = 0) -> np.ndarray:
    """Rows ``samples[start + p*c : start + (p+1)*c]`` for ``p < count``."""
    x = np.asarray(samples, dtype=float)
    end = start + count * period_length
    if start < 0 or end > len(x):
        raise BitExtractionError(
            f"need {end} samples for {count} periods from offset {start}, have {len(x)}"
        )
    return x[start:end].reshape(count, period_length)


def noise_periods(periods, n_p: int | None = None) -> list[NoisePeriod]:
    """Index-wise differences of consecutive periods, skipping the preamble.

    Row ``p`` (``p = 1..n_p``) of the result is ``periods[p] - periods[p + 1]``.
    """
    rows = np.asarray(periods, dtype=float)
    if rows.ndim != 2:
        raise BitExtractionError("periods must be a 2-D array of equal-length rows")
    if n_p is None:
        n_p = rows.shape[0] - 2
    if n_p < 1 or rows.shape[0] < n_p + 2:
        raise BitExtractionError(
            f"{rows.shape[0]} periods supplied, need n_p + 2 = {n_p + 2}"
        )
    diffs = rows[1 : n_p + 1] - rows[2 : n_p + 2]
    return [NoisePeriod(d, p) for p, d in enumerate(diffs, start=1)]


def select_indices(noise, n_b: int) -> np.ndarray:
    """Position of the largest |noise| in each of ``n_b`` bins (lowest index on ties)."""
    values = noise.values if isinstance(noise, NoisePeriod) else np.asarray(noise, dtype=float)
    c = len(values)
    if n_b < 1 or c < n_b:
        raise BitExtractionError("need 1 <= n_b <= period length")
    w = c // n_b
    bins = np.abs(values[: n_b * w]).reshape(n_b, w)
    return np.argmax(bins, axis=1) + np.arange(n_b) * w


def extract_bits(noise, indices) -> np.ndarray:
    values = noise.values if isinstance(noise, NoisePeriod) else np.asarray(noise, dtype=float)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= len(values)):
        raise BitExtractionError("index outside the noise period")
    return (values[idx] >= values.mean()).astype(np.uint8)


def generate_sequence(
    periods,
    n_p: int,
    n_b: int,
    key_len: int,
    role: Role | str = Role.INDEXER,
    indices: IndexSchedule | None = None,
) -> tuple[BitSequence, IndexSchedule]:
    """Bits of periods ``1..n_p`` in (period, bin) order, cut to ``key_len``.

    The indexer builds the schedule from its own noise; the follower must be
    handed the indexer's schedule. The follower thresholds against the mean of
    its own noise period.
    """
    role = Role(role)
    if n_p * n_b < key_len:
        raise BitExtractionError(f"n_p * n_b = {n_p * n_b} < key_len = {key_len}")
    noise = noise_periods(periods, n_p)
    c = len(noise[0])
    if role is Role.INDEXER:
        schedule = IndexSchedule(np.stack([select_indices(nz, n_b) for nz in noise]), c)
    else:
        if indices is None:
            raise BitExtractionError("follower needs the indexer's schedule")
        schedule = indices
        if schedule.entries.shape != (n_p, n_b):
            raise BitExtractionError(
                f"schedule shape {schedule.entries.shape} does not match ({n_p}, {n_b})"
            )
    bits = np.concatenate(
        [extract_bits(nz, row) for nz, row in zip(noise, schedule.entries)]
    )[:key_len]
    provenance = tuple((p, b) for p in range(1, n_p + 1) for b in range(1, n_b + 1))[:key_len]
    return BitSequence(bits, provenance), schedule
