"""Agreement, success and uniqueness figures."""

from __future__ import annotations

import numpy as np

from ..bitext import BitSequence, extract_bits, select_indices

__all__ = ["bit_agreement_rate", "pairing_success_rate", "uniqueness_matrix"]


def _bits(seq) -> np.ndarray:
    return np.asarray(seq.bits if isinstance(seq, BitSequence) else seq, dtype=np.uint8)


def bit_agreement_rate(a, b) -> float:
    """Fraction of positions where ``a`` and ``b`` hold the same bit."""
    x, y = _bits(a), _bits(b)
    if x.shape != y.shape:
        raise ValueError(f"sequences differ in length: {x.size} vs {y.size}")
    if x.size == 0:
        raise ValueError("agreement of empty sequences is undefined")
    return float(np.count_nonzero(x == y) / x.size)


def pairing_success_rate(outcomes) -> float:
    """Share of sessions that ended with identical keys on both sides."""
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("no pairing outcomes given")
    return sum(bool(getattr(o, "success", o)) for o in outcomes) / len(outcomes)


def uniqueness_matrix(dev_a_periods, dev_b_periods, n_b: int) -> np.ndarray:
    """Cross-period agreement of two devices' noise periods.

    Inputs hold noise periods shaped ``(n_p, c)``, ``(reps, n_p, c)``, or a
    sequence of ``(n_p, c_r)`` arrays whose period length may vary per
    repetition. Each device turns period ``p`` into bits at the positions A
    picked for ``p``, as in a session; entry ``(i, j)`` is the agreement of
    A's bits from period ``i`` with B's bits from period ``j``, averaged over
    repetitions.
    """
    reps_a, reps_b = _repetitions(dev_a_periods), _repetitions(dev_b_periods)
    if len(reps_a) != len(reps_b) or not reps_a:
        raise ValueError("both devices need the same, non-zero number of repetitions")
    n_p = reps_a[0].shape[0]
    out = np.zeros((n_p, n_p))
    for a, b in zip(reps_a, reps_b):
        if a.shape != b.shape or a.shape[0] != n_p:
            raise ValueError(f"period arrays must match in shape, got {a.shape} and {b.shape}")
        schedule = [select_indices(a[p], n_b) for p in range(n_p)]
        bits_a = np.array([extract_bits(a[p], t) for p, t in enumerate(schedule)])
        bits_b = np.array([extract_bits(b[p], t) for p, t in enumerate(schedule)])
        out += (bits_a[:, None, :] == bits_b[None, :, :]).mean(axis=2)
    return out / len(reps_a)


def _repetitions(periods) -> list[np.ndarray]:
    if isinstance(periods, np.ndarray) and periods.ndim == 2:
        return [periods.astype(float)]
    if isinstance(periods, np.ndarray) and periods.ndim == 3:
        return [r.astype(float) for r in periods]
    reps = [np.asarray(r, dtype=float) for r in periods]
    if reps and reps[0].ndim == 1:
        return [np.asarray(periods, dtype=float)]
    if any(r.ndim != 2 for r in reps):
        raise ValueError("each repetition must be a 2-D (n_p, c) array")
    return reps
