import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import all_words, exhaustive_nearest
from voltkey.bitext import BitSequence
from voltkey.recon import (
    HelperData,
    ReconciliationError,
    build_code,
    entropy_accounting,
    helper_data,
    nearest_codeword,
    reconcile,
    reconciled_length,
)


def _bits(s):
    return np.array([int(c) for c in s], dtype=np.uint8)


def _codeword_arrays(code):
    return [np.array([(c >> (code.n - 1 - i)) & 1 for i in range(code.n)], dtype=np.uint8)
            for c in code.codewords]


def test_repetition_codewords():
    code = build_code(3, 1)
    assert code.codewords == (0b000, 0b111)


def test_h74_zero_word():
    assert build_code(7, 4).encode([0, 0, 0, 0]).tolist() == [0] * 7


def test_h74_generator_row():
    assert "".join(map(str, build_code(7, 4).encode([1, 0, 0, 0]))) == "1000110"


def test_h74_codewords_match_matrix_products():
    code = build_code(7, 4)
    g = code.generator.astype(int)
    products = sorted(
        int("".join(map(str, (np.array(d) @ g) % 2)), 2) for d in itertools.product((0, 1), repeat=4)
    )
    assert list(code.codewords) == products


@pytest.mark.parametrize("n,k", [(3, 1), (7, 4)])
def test_code_size_and_distance(n, k):
    code = build_code(n, k)
    assert len(code.codewords) == 2**k
    assert code.min_distance() == 3


def test_unsupported_code():
    with pytest.raises(ReconciliationError):
        build_code(15, 11)


@pytest.mark.parametrize("n,k", [(3, 1), (7, 4)])
def test_decoder_matches_exhaustive_search(n, k):
    code = build_code(n, k)
    words = _codeword_arrays(code)
    for w in all_words(n):
        got = nearest_codeword(code, w)
        want = exhaustive_nearest(words, w)
        assert np.sum(got != w) == np.sum(want != w)
        # perfect codes: the nearest codeword is unique
        assert got.tolist() == want.tolist()


def test_nearest_examples():
    assert "".join(map(str, nearest_codeword((7, 4), _bits("0000001")))) == "0000000"
    assert "".join(map(str, nearest_codeword((3, 1), _bits("011")))) == "111"
    for c in _codeword_arrays(build_code(7, 4)):
        assert nearest_codeword((7, 4), c).tolist() == c.tolist()


def test_helper_examples():
    assert helper_data((7, 4), _bits("0000001")).flat().tolist() == [0, 0, 0, 0, 0, 0, 1]
    assert helper_data((3, 1), _bits("011")).flat().tolist() == [1, 0, 0]
    assert helper_data((7, 4), _bits("1000110")).flat().tolist() == [0] * 7


@pytest.mark.parametrize("n,k", [(3, 1), (7, 4)])
def test_helper_weight_at_most_one(n, k):
    for w in all_words(n):
        assert helper_data((n, k), w).flat().sum() <= 1


def test_reconcile_examples():
    code = build_code(7, 4)
    ka = _bits("1010101")
    out = reconcile(code, _bits("1010100"), helper_data(code, ka))
    assert out.to_string() == "1010101"
    out = reconcile((3, 1), _bits("011"), helper_data((3, 1), _bits("010")))
    assert out.to_string() == "010"


def test_reconcile_identity():
    ka = np.random.default_rng(0).integers(0, 2, 126)
    assert reconcile((3, 1), ka, helper_data((3, 1), ka)).bits.tolist() == ka.tolist()


def test_length_mismatch():
    with pytest.raises(ReconciliationError):
        reconcile((3, 1), np.zeros(9), helper_data((3, 1), np.zeros(12)))


def test_partial_block_dropped():
    assert reconciled_length((3, 1), 128) == 126
    assert reconciled_length((7, 4), 128) == 126
    assert len(helper_data((3, 1), np.zeros(128))) == 42


def test_provenance_follows_kept_bits():
    seq = BitSequence(np.zeros(8, dtype=np.uint8), tuple((1, b) for b in range(1, 9)))
    out = reconcile((3, 1), seq, helper_data((3, 1), seq))
    assert out.provenance == seq.provenance[:6]


@pytest.mark.parametrize("n,k", [(3, 1), (7, 4)])
def test_distance_two_breaks_h74_only_sometimes(n, k):
    failures = 0
    for a in all_words(n):
        r = helper_data((n, k), a)
        for b in all_words(n):
            if np.sum(a != b) == 2:
                failures += reconcile((n, k), b, r).bits.tolist() != a.tolist()
    assert failures > 0


@given(st.lists(st.integers(0, 1), min_size=7, max_size=70), st.sampled_from([(3, 1), (7, 4)]))
def test_helper_is_deterministic(bits, code):
    assert helper_data(code, bits) == helper_data(code, bits)


def test_helper_data_must_be_2d():
    with pytest.raises(ReconciliationError):
        HelperData(np.zeros(3))


@pytest.mark.parametrize(
    "a_max,target,raw",
    [(0.859, 20, 429), (0.882, 20, 546), (0.859, 128, 2743), (0.882, 128, 3491)],
)
def test_entropy_accounting(a_max, target, raw):
    got, seconds = entropy_accounting(a_max, target, (3, 1), 6)
    assert got == raw
    assert seconds == pytest.approx(raw / 360)


def test_entropy_uses_code_rate():
    # (7,4) keeps 4 of 7 bits: 20 -> 35 bits of material
    raw, _ = entropy_accounting(0.859, 20, (7, 4), 6)
    assert raw == 250


@pytest.mark.parametrize("a_max", [0.49, 1.0, 1.2])
def test_entropy_rejects_bad_a_max(a_max):
    with pytest.raises(ReconciliationError):
        entropy_accounting(a_max, 20, (3, 1), 6)
