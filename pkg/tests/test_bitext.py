import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from voltkey import alignment
from voltkey.bitext import (
    KEY_CONFIGS,
    BitExtractionError,
    BitSequence,
    IndexSchedule,
    NoisePeriod,
    Role,
    extract_bits,
    generate_sequence,
    noise_periods,
    select_indices,
    slice_periods,
)
from voltkey.evaluation.metrics import bit_agreement_rate
from voltkey.protocol.session import SessionParams
from voltkey.evaluation.scenario import Deployment, PairSources


def test_equal_periods_give_zero_noise():
    rows = np.ones((3, 5))
    (nz,) = noise_periods(rows, 1)
    assert np.all(nz.values == 0)
    assert nz.period_index == 1


def test_hand_subtraction():
    (nz,) = noise_periods([[0, 0], [1, 2], [3, 1]], 1)
    assert nz.values.tolist() == [-2, 1]


def test_noise_is_linear():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 6, 40))
    lhs = [n.values for n in noise_periods(a + b)]
    rhs = [x.values + y.values for x, y in zip(noise_periods(a), noise_periods(b))]
    np.testing.assert_allclose(lhs, rhs)


def test_preamble_never_becomes_noise():
    rows = np.arange(5 * 4).reshape(5, 4).astype(float)
    rows[0] = 1e6
    assert all(n.period_index >= 1 for n in noise_periods(rows))
    assert all(np.all(np.abs(n.values) < 1e5) for n in noise_periods(rows))


def test_too_few_periods():
    with pytest.raises(BitExtractionError):
        noise_periods(np.zeros((3, 4)), 2)


def test_noise_period_index_must_be_positive():
    with pytest.raises(BitExtractionError):
        NoisePeriod(np.zeros(3), 0)


def test_hand_argmax():
    assert select_indices([0.1, -0.9, 0.2, 0.5, 0.4, -0.3], 2).tolist() == [1, 3]


def test_constant_noise_picks_first_of_each_bin():
    assert select_indices(np.full(12, 0.5), 3).tolist() == [0, 4, 8]


def test_remainder_samples_are_ignored():
    n = np.zeros(7)
    n[6] = 100.0
    assert select_indices(n, 2).tolist() == [0, 3]


def test_single_bin_is_global_max():
    x = np.random.default_rng(5).normal(size=101)
    assert select_indices(x, 1).tolist() == [int(np.argmax(np.abs(x)))]


def test_figure_pattern_n_b_7():
    # seven bins of three samples; the picked sample sits above the mean in
    # bins 1, 2, 5 and 7 and below it in 3, 4 and 6
    peaks = [5.0, 4.0, -6.0, -3.0, 7.0, -5.0, 2.0]
    n = np.zeros(21)
    n[1::3] = peaks
    idx = select_indices(n, 7)
    assert idx.tolist() == list(range(1, 21, 3))
    assert "".join(map(str, extract_bits(n, idx))) == "1100101"


def test_all_zero_noise_gives_ones():
    assert extract_bits(np.zeros(8), [0, 4]).tolist() == [1, 1]


def test_hand_threshold():
    assert extract_bits([3, -1, -1, -1], [0, 2]).tolist() == [1, 0]


def test_out_of_range_index():
    with pytest.raises(BitExtractionError):
        extract_bits(np.zeros(4), [4])


@pytest.mark.parametrize("n_p,n_b", KEY_CONFIGS)
def test_standard_configurations_give_128_bits(n_p, n_b):
    rows = np.random.default_rng(n_b).normal(size=(n_p + 2, 1419))
    seq, sched = generate_sequence(rows, n_p, n_b, 128)
    assert len(seq) == 128
    assert sched.entries.shape == (n_p, n_b)
    assert seq.provenance[0] == (1, 1)
    assert all(p >= 1 for p, _ in seq.provenance)


def test_truncation_keeps_first_bits():
    rows = np.random.default_rng(1).normal(size=(24, 1419))
    full, _ = generate_sequence(rows, 22, 6, 132)
    cut, _ = generate_sequence(rows, 22, 6, 128)
    assert cut.bits.tolist() == full.bits[:128].tolist()


def test_key_longer_than_material():
    with pytest.raises(BitExtractionError):
        generate_sequence(np.zeros((10, 100)), 8, 6, 128)


def test_follower_needs_schedule():
    with pytest.raises(BitExtractionError):
        generate_sequence(np.zeros((24, 100)), 22, 6, 128, Role.FOLLOWER)


def test_slice_periods_bounds():
    x = np.arange(10)
    assert slice_periods(x, 3, 3, start=1).tolist() == [[1, 2, 3], [4, 5, 6], [7, 8, 9]]
    with pytest.raises(BitExtractionError):
        slice_periods(x, 3, 4)


def test_bit_sequence_rejects_non_bits():
    with pytest.raises(BitExtractionError):
        BitSequence(np.array([0, 2]))


@settings(max_examples=30, deadline=None)
@given(
    config=st.sampled_from(KEY_CONFIGS),
    rows=hnp.arrays(np.float64, (24, 60), elements=st.floats(-1e3, 1e3)),
)
def test_self_agreement_and_bin_containment(config, rows):
    n_p, n_b = config
    rows = rows[: n_p + 2]
    key_len = min(128, n_p * n_b)
    a, sched = generate_sequence(rows, n_p, n_b, key_len, Role.INDEXER)
    b, _ = generate_sequence(rows, n_p, n_b, key_len, Role.FOLLOWER, sched)
    assert a == b
    assert sched.in_bins()
    w = 60 // n_b
    for b_idx in range(n_b):
        col = sched.entries[:, b_idx]
        assert np.all((col >= b_idx * w) & (col < (b_idx + 1) * w))


def test_unrelated_schedule_gives_coin_flips():
    rng = np.random.default_rng(8)
    agreements = []
    for _ in range(1000):
        own = rng.normal(size=(3, 600))
        other = rng.normal(size=(3, 600))
        a, _ = generate_sequence(own, 1, 6, 6)
        _, foreign = generate_sequence(other, 1, 6, 6)
        b, _ = generate_sequence(own + rng.normal(size=own.shape), 1, 6, 6, Role.FOLLOWER, foreign)
        agreements.append(bit_agreement_rate(a, b))
    assert abs(np.mean(agreements) - 0.5) <= 0.05


def test_one_sample_misalignment_changes_few_bits():
    params = SessionParams.for_bins(6)
    changed = []
    for seed in range(20):
        src = PairSources(Deployment(), params, seed)
        trace = src.source_a(0)
        c = alignment.estimate_spp(trace).spp
        x = alignment.resample(trace, c, c).samples
        rows = slice_periods(x, c, params.n_p + 2, start=1)
        a, sched = generate_sequence(rows, params.n_p, params.n_b, 128)
        shifted = slice_periods(x, c, params.n_p + 2, start=2)
        b, _ = generate_sequence(shifted, params.n_p, params.n_b, 128, Role.FOLLOWER, sched)
        changed.append(1 - bit_agreement_rate(a, b))
    assert np.mean(changed) < 0.10


def test_schedule_validation():
    with pytest.raises(BitExtractionError):
        IndexSchedule(np.array([[5]]), 4)
