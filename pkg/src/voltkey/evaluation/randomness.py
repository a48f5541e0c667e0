"""Six statistical tests from NIST SP 800-22.

Frequency, block frequency, cumulative sums, binary matrix rank,
non-overlapping template matching and linear complexity, each returning the
p-value defined by SP 800-22 rev. 1a.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc, gammaincc, ndtr

from ..bitext import BitSequence

__all__ = [
    "MIN_SUITE_BITS",
    "frequency",
    "block_frequency",
    "cumulative_sums",
    "binary_matrix_rank",
    "non_overlapping_template",
    "linear_complexity",
    "berlekamp_massey",
    "randomness_suite",
]

MIN_SUITE_BITS = 100_000
TEMPLATE = (0, 0, 0, 0, 0, 0, 0, 0, 1)


def _bits(seq) -> np.ndarray:
    b = np.asarray(seq.bits if isinstance(seq, BitSequence) else seq, dtype=np.uint8)
    if b.ndim != 1:
        raise ValueError("bit sequence must be one-dimensional")
    if b.size and b.max() > 1:
        raise ValueError("bit sequence must hold only 0/1")
    return b


def frequency(bits) -> float:
    x = _bits(bits)
    s = np.sum(2 * x.astype(np.int64) - 1)
    return float(erfc(abs(s) / math.sqrt(x.size) / math.sqrt(2)))


def block_frequency(bits, block_size: int = 128) -> float:
    x = _bits(bits)
    n_blocks = x.size // block_size
    if n_blocks < 1:
        raise ValueError("sequence shorter than one block")
    pi = x[: n_blocks * block_size].reshape(n_blocks, block_size).mean(axis=1)
    chi2 = 4 * block_size * np.sum((pi - 0.5) ** 2)
    return float(gammaincc(n_blocks / 2, chi2 / 2))


def _cusum_p(walk: np.ndarray) -> float:
    n = walk.size
    z = int(np.max(np.abs(walk)))
    if z == 0:
        return 1.0
    sq = math.sqrt(n)
    k1 = np.arange(int((-n / z + 1) / 4), int((n / z - 1) / 4) + 1)
    k2 = np.arange(int((-n / z - 3) / 4), int((n / z - 1) / 4) + 1)
    s1 = np.sum(ndtr((4 * k1 + 1) * z / sq) - ndtr((4 * k1 - 1) * z / sq))
    s2 = np.sum(ndtr((4 * k2 + 3) * z / sq) - ndtr((4 * k2 + 1) * z / sq))
    return float(1.0 - s1 + s2)


def cumulative_sums(bits) -> tuple[float, float]:
    """(forward, backward) p-values of the maximal random-walk excursion."""
    steps = 2 * _bits(bits).astype(np.int64) - 1
    return _cusum_p(np.cumsum(steps)), _cusum_p(np.cumsum(steps[::-1]))


def _gf2_ranks(mats: np.ndarray) -> np.ndarray:
    """Ranks of a stack of 0/1 matrices over GF(2), eliminated in parallel."""
    count, rows, cols = mats.shape
    packed = np.zeros((count, rows), dtype=np.uint64)
    for c in range(cols):
        packed |= mats[:, :, c].astype(np.uint64) << np.uint64(cols - 1 - c)
    used = np.zeros((count, rows), dtype=bool)
    rank = np.zeros(count, dtype=np.int64)
    every = np.arange(count)
    for c in range(cols):
        bit = np.uint64(1) << np.uint64(cols - 1 - c)
        has = (packed & bit) != 0
        cand = has & ~used
        found = cand.any(axis=1)
        pivot = np.argmax(cand, axis=1)
        prow = packed[every, pivot]
        clear = has & found[:, None]
        clear[every, pivot] = False
        packed = np.where(clear, packed ^ prow[:, None], packed)
        used[every[found], pivot[found]] = True
        rank += found
    return rank


def _rank_probability(r: int, m: int, q: int) -> float:
    prod = 1.0
    for i in range(r):
        prod *= (1 - 2.0 ** (i - q)) * (1 - 2.0 ** (i - m)) / (1 - 2.0 ** (i - r))
    return 2.0 ** (r * (q + m - r) - m * q) * prod


def binary_matrix_rank(bits, size: int = 32) -> float:
    x = _bits(bits)
    n_mats = x.size // (size * size)
    if n_mats < 1:
        raise ValueError(f"need at least {size * size} bits")
    ranks = _gf2_ranks(x[: n_mats * size * size].reshape(n_mats, size, size))
    p_full = _rank_probability(size, size, size)
    p_less1 = _rank_probability(size - 1, size, size)
    expected = n_mats * np.array([p_full, p_less1, 1 - p_full - p_less1])
    observed = np.array(
        [np.sum(ranks == size), np.sum(ranks == size - 1), np.sum(ranks < size - 1)]
    )
    chi2 = np.sum((observed - expected) ** 2 / expected)
    return float(np.exp(-chi2 / 2))


def _count_non_overlapping(block: np.ndarray, template: np.ndarray) -> int:
    m = template.size
    windows = np.lib.stride_tricks.sliding_window_view(block, m)
    hits = np.flatnonzero(np.all(windows == template, axis=1))
    count, free_from = 0, 0
    for h in hits:
        if h >= free_from:
            count += 1
            free_from = h + m
    return count


def non_overlapping_template(bits, template=TEMPLATE, n_blocks: int = 8) -> float:
    x = _bits(bits)
    t = np.asarray(template, dtype=np.uint8)
    m = t.size
    block = x.size // n_blocks
    if block < m:
        raise ValueError("blocks shorter than the template")
    counts = np.array(
        [_count_non_overlapping(x[j * block : (j + 1) * block], t) for j in range(n_blocks)]
    )
    mu = (block - m + 1) / 2**m
    var = block * (1 / 2**m - (2 * m - 1) / 2 ** (2 * m))
    chi2 = np.sum((counts - mu) ** 2) / var
    return float(gammaincc(n_blocks / 2, chi2 / 2))


def berlekamp_massey(blocks) -> np.ndarray:
    """Linear complexity of every row of a 2-D 0/1 array (rows run in parallel)."""
    s = np.atleast_2d(np.asarray(blocks, dtype=np.uint8))
    count, n = s.shape
    conn = np.zeros((count, n + 1), dtype=np.uint8)
    conn[:, 0] = 1
    # previous connection polynomial, already multiplied by x^(step - m)
    shifted = np.zeros((count, n + 1), dtype=np.uint8)
    shifted[:, 1] = 1
    length = np.zeros(count, dtype=np.int64)
    for step in range(n):
        window = s[:, step::-1]
        d = (np.sum(conn[:, : step + 1] & window, axis=1) & 1).astype(bool)
        grow = d & (2 * length <= step)
        old = conn[grow].copy()
        conn[d] ^= shifted[d]
        length[grow] = step + 1 - length[grow]
        shifted[grow] = old
        shifted[:, 1:] = shifted[:, :-1].copy()
        shifted[:, 0] = 0
    return length


_LC_PI = np.array([0.01047, 0.03125, 0.125, 0.5, 0.25, 0.0625, 0.020833])


def linear_complexity(bits, block_size: int = 500) -> float:
    x = _bits(bits)
    m = block_size
    n_blocks = x.size // m
    if n_blocks < 1:
        raise ValueError("sequence shorter than one block")
    lengths = berlekamp_massey(x[: n_blocks * m].reshape(n_blocks, m))
    sign = -1.0 if m % 2 else 1.0
    mu = m / 2 + (9 + (-1) ** (m + 1)) / 36 - (m / 3 + 2 / 9) / 2.0**m
    t = sign * (lengths - mu) + 2 / 9
    edges = np.array([-2.5, -1.5, -0.5, 0.5, 1.5, 2.5])
    counts = np.bincount(np.searchsorted(edges, t, side="left"), minlength=7)
    expected = n_blocks * _LC_PI
    chi2 = np.sum((counts - expected) ** 2 / expected)
    return float(gammaincc(3, chi2 / 2))


def randomness_suite(bits) -> dict[str, float]:
    """p-value of each of the six tests; cumulative sums reports the worse direction."""
    x = _bits(bits)
    if x.size < MIN_SUITE_BITS:
        raise ValueError(f"randomness suite needs at least {MIN_SUITE_BITS} bits, got {x.size}")
    return {
        "frequency": frequency(x),
        "block_frequency": block_frequency(x),
        "cumulative_sums": min(cumulative_sums(x)),
        "rank": binary_matrix_rank(x),
        "non_overlapping_template": non_overlapping_template(x),
        "linear_complexity": linear_complexity(x),
    }
