"""Code-offset key reconciliation with small Hamming codes.

The indexer publishes, per ``n``-bit block, the XOR between its block and the
nearest codeword. The follower XORs that helper word onto its own block, snaps
the result to the nearest codeword and XORs the helper back off, which recovers
the indexer's block whenever the two blocks differ in at most one bit.

Keys whose length is not a multiple of ``n`` lose their trailing partial block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_DOWN, Decimal
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .bitext import BitSequence

__all__ = [
    "ReconciliationError",
    "BlockCode",
    "HelperData",
    "build_code",
    "nearest_codeword",
    "helper_data",
    "reconcile",
    "entropy_accounting",
    "CODES",
    "TOKEN_TARGETS",
]

# parity part of the systematic Hamming(7,4) generator [I4 | P]
_H74_PARITY = np.array(
    [[1, 1, 0], [1, 0, 1], [0, 1, 1], [1, 1, 1]],
    dtype=np.uint8,
)

# short names used on the command line
CODES = {"h31": (3, 1), "h74": (7, 4)}
# minimum token entropy in bits
TOKEN_TARGETS = {"auth": 20, "crypto": 128}


class ReconciliationError(ValueError):
    pass


def _bits_to_int(bits) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def _int_to_bits(value: int, n: int) -> np.ndarray:
    return np.array([(value >> (n - 1 - i)) & 1 for i in range(n)], dtype=np.uint8)


@dataclass(frozen=True, eq=False)
class BlockCode:
    """An (n, k) binary linear block code with a full nearest-codeword table.

    Words are handled as integers, most significant bit first.
    """

    n: int
    k: int
    generator: np.ndarray
    codewords: tuple[int, ...]
    decode_table: tuple[int, ...]

    @property
    def name(self) -> str:
        return f"Hamming({self.n},{self.k})"

    def encode(self, data) -> np.ndarray:
        d = np.asarray(data, dtype=np.uint8)
        return (d @ self.generator % 2).astype(np.uint8)

    def min_distance(self) -> int:
        return min(
            bin(a ^ b).count("1")
            for i, a in enumerate(self.codewords)
            for b in self.codewords[i + 1 :]
        )


def _syndrome_table(n: int, parity: np.ndarray) -> tuple[int, ...]:
    """Nearest-codeword map for a systematic Hamming code via syndromes."""
    k = n - parity.shape[1]
    check = np.hstack([parity.T, np.eye(n - k, dtype=np.uint8)])
    # single-bit error position for every non-zero syndrome
    flip_for = {}
    for pos in range(n):
        e = np.zeros(n, dtype=np.uint8)
        e[pos] = 1
        flip_for[_bits_to_int(check @ e % 2)] = 1 << (n - 1 - pos)
    table = []
    for w in range(1 << n):
        s = _bits_to_int(check @ _int_to_bits(w, n) % 2)
        table.append(w ^ flip_for.get(s, 0))
    return tuple(table)


@lru_cache(maxsize=None)
def build_code(n: int, k: int) -> BlockCode:
    if (n, k) == (7, 4):
        generator = np.hstack([np.eye(4, dtype=np.uint8), _H74_PARITY])
        table = _syndrome_table(7, _H74_PARITY)
    elif (n, k) == (3, 1):
        generator = np.ones((1, 3), dtype=np.uint8)
        # repetition code: majority vote
        table = tuple(0b111 if bin(w).count("1") >= 2 else 0 for w in range(8))
    else:
        raise ReconciliationError(f"unsupported code ({n},{k}); use (3,1) or (7,4)")
    generator.setflags(write=False)
    codewords = tuple(
        sorted(_bits_to_int(_int_to_bits(d, k) @ generator % 2) for d in range(1 << k))
    )
    return BlockCode(n, k, generator, codewords, table)


def _as_code(code) -> BlockCode:
    if isinstance(code, BlockCode):
        return code
    if isinstance(code, str):
        return build_code(*CODES[code])
    return build_code(*code)


def nearest_codeword(code, word) -> np.ndarray:
    code = _as_code(code)
    w = np.asarray(word, dtype=np.uint8)
    if len(w) != code.n:
        raise ReconciliationError(f"word must have {code.n} bits")
    return _int_to_bits(code.decode_table[_bits_to_int(w)], code.n)


@dataclass(frozen=True, eq=False)
class HelperData:
    """Helper words ``R_b``, one ``n``-bit row per key block."""

    blocks: np.ndarray

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=np.uint8)
        if blocks.ndim != 2:
            raise ReconciliationError("helper data must be a 2-D array of blocks")
        blocks.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    def __len__(self):
        return self.blocks.shape[0]

    def __eq__(self, other):
        if not isinstance(other, HelperData):
            return NotImplemented
        return np.array_equal(self.blocks, other.blocks)

    def flat(self) -> np.ndarray:
        return self.blocks.reshape(-1)


def _blocks(bits, n: int) -> np.ndarray:
    b = np.asarray(bits.bits if isinstance(bits, BitSequence) else bits, dtype=np.uint8)
    m = len(b) // n
    return b[: m * n].reshape(m, n)


def _decode_rows(code: BlockCode, rows: np.ndarray) -> np.ndarray:
    weights = 1 << np.arange(code.n - 1, -1, -1)
    idx = rows.astype(np.int64) @ weights
    table = np.asarray(code.decode_table, dtype=np.int64)[idx]
    return ((table[:, None] >> np.arange(code.n - 1, -1, -1)) & 1).astype(np.uint8)


def helper_data(code, key_a) -> HelperData:
    """``R_b = K_b XOR f(K_b)`` for every full block of ``key_a``."""
    code = _as_code(code)
    rows = _blocks(key_a, code.n)
    return HelperData(rows ^ _decode_rows(code, rows))


def reconcile(code, key_b, helper: HelperData) -> BitSequence:
    """Follower side: ``f(K_b XOR R_b) XOR R_b`` for every block."""
    code = _as_code(code)
    rows = _blocks(key_b, code.n)
    if rows.shape != helper.blocks.shape:
        raise ReconciliationError(
            f"key has {rows.shape[0]} blocks of {code.n} bits, helper has "
            f"{helper.blocks.shape[0]} blocks of {helper.blocks.shape[1]}"
        )
    shifted = rows ^ helper.blocks
    out = (_decode_rows(code, shifted) ^ helper.blocks).reshape(-1)
    provenance = ()
    if isinstance(key_b, BitSequence) and key_b.provenance:
        provenance = key_b.provenance[: len(out)]
    return BitSequence(out, provenance)


def reconciled_length(code, key_len: int) -> int:
    code = _as_code(code)
    return (key_len // code.n) * code.n


def entropy_accounting(a_max: float, target_entropy_bits: int, code, n_b: int):
    """Raw bits and measurement time needed for a token of the given entropy.

    ``a_max`` is the best bit agreement an adversary reached; each extracted
    bit is worth ``1 - a_max`` bits (truncated to two decimals), and the code
    keeps ``k`` of every ``n`` bits. Returns ``(raw_bits, seconds)`` where
    seconds assumes ``n_b`` bits per 60 Hz period.
    """
    if not 0.5 <= a_max < 1:
        raise ReconciliationError("a_max must lie in [0.5, 1)")
    if target_entropy_bits <= 0 or n_b <= 0:
        raise ReconciliationError("target_entropy_bits and n_b must be positive")
    code = _as_code(code)
    per_bit = (Decimal(1) - Decimal(str(a_max))).quantize(
        Decimal("0.01"), rounding=ROUND_DOWN
    )
    if per_bit == 0:
        raise ReconciliationError("per-bit entropy rounds to zero")
    inflated = Fraction(target_entropy_bits * code.n, code.k)
    raw_bits = math.ceil(inflated / Fraction(per_bit))
    return raw_bits, raw_bits / (60 * n_b)
