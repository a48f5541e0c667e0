import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voltkey.evaluation.attacks import AttackReport
from voltkey.signal_sim import SignalTrace
from voltkey.trace_io import (
    MAGIC,
    MalformedHeaderError,
    SampleRangeError,
    TraceFormatError,
    TruncatedPayloadError,
    dumps_report,
    read_report,
    read_trace,
    write_report,
    write_trace,
)


def _trace(samples, rate=85_400, bits=12):
    return SignalTrace(np.asarray(samples, dtype=np.int64), float(rate), float(rate), resolution_bits=bits)


def test_minimal_csv(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("# rate=85400\n0\n4095\n")
    t = read_trace(path)
    assert t.samples.tolist() == [0, 4095]
    assert t.nominal_rate == 85_400


def test_binary_round_trip(tmp_path):
    t = _trace([1, 2, 3, 4095, 0])
    write_trace(t, tmp_path / "t.vkt")
    assert read_trace(tmp_path / "t.vkt") == t


def test_binary_layout(tmp_path):
    write_trace(_trace([1, 258], rate=1000, bits=10), tmp_path / "t.bin")
    data = (tmp_path / "t.bin").read_bytes()
    assert data[:8] == MAGIC
    assert struct.unpack("<IBQ", data[8:21]) == (1000, 10, 2)
    assert data[21:] == bytes([1, 0, 2, 1])


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.vkt"
    path.write_bytes(struct.pack("<8sIBQ", MAGIC, 85_400, 12, 100) + b"\x00\x00" * 99)
    with pytest.raises(TruncatedPayloadError):
        read_trace(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "t.vkt"
    path.write_bytes(struct.pack("<8sIBQ", b"NOTTRACE", 85_400, 12, 0))
    with pytest.raises(MalformedHeaderError):
        read_trace(path)


def test_short_header(tmp_path):
    path = tmp_path / "t.vkt"
    path.write_bytes(MAGIC)
    with pytest.raises(MalformedHeaderError):
        read_trace(path)


def test_out_of_range_sample(tmp_path):
    path = tmp_path / "t.vkt"
    path.write_bytes(struct.pack("<8sIBQ", MAGIC, 85_400, 12, 1) + struct.pack("<H", 4096))
    with pytest.raises(SampleRangeError):
        read_trace(path)


def test_csv_errors_are_distinct(tmp_path):
    no_rate = tmp_path / "a.csv"
    no_rate.write_text("1\n2\n")
    with pytest.raises(MalformedHeaderError):
        read_trace(no_rate)
    too_big = tmp_path / "b.csv"
    too_big.write_text("# rate=100\n5000\n")
    with pytest.raises(SampleRangeError):
        read_trace(too_big)
    junk = tmp_path / "c.csv"
    junk.write_text("# rate=100\nabc\n")
    with pytest.raises(TraceFormatError):
        read_trace(junk)


def test_real_valued_samples_refused(tmp_path):
    t = SignalTrace(np.array([1.5, 2.0]), 100.0, 100.0)
    with pytest.raises(TraceFormatError):
        write_trace(t, tmp_path / "t.vkt")


@settings(max_examples=40, deadline=None)
@given(
    bits=st.integers(8, 16),
    rate=st.integers(1, 2**32 - 1),
    data=st.data(),
    fmt=st.sampled_from(["csv", "binary"]),
)
def test_round_trip_property(tmp_path_factory, bits, rate, data, fmt):
    samples = data.draw(st.lists(st.integers(0, 2**bits - 1), max_size=200))
    t = _trace(samples, rate=rate, bits=bits)
    path = tmp_path_factory.mktemp("rt") / ("t.csv" if fmt == "csv" else "t.vkt")
    write_trace(t, path)
    assert read_trace(path) == t


def test_empty_attack_report_serializes():
    parsed = json.loads(dumps_report(AttackReport("passive", np.array([]))))
    assert parsed["trials"] == 0
    assert parsed["agreements"] == []
    assert parsed["any_success"] is False


def test_report_round_trip_is_byte_identical(tmp_path):
    report = AttackReport("near_time", np.array([0.5, 0.95, 0.42857142857142855]))
    write_report(report, tmp_path / "r.json")
    first = (tmp_path / "r.json").read_bytes()
    again = dumps_report(read_report(tmp_path / "r.json")).encode()
    assert again == first


def test_float_precision():
    text = dumps_report({"agreement": 0.95, "other": 1 / 3})
    assert '"agreement": 0.9500000000' in text
    assert json.loads(text)["other"] == pytest.approx(1 / 3, rel=1e-9)


def test_field_order_is_stable():
    text = dumps_report({"b": 1, "a": 2})
    assert text.index('"b"') < text.index('"a"')


def test_nan_refused():
    with pytest.raises(ValueError):
        dumps_report({"x": float("nan")})
