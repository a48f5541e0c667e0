"""Trace files and JSON reports.

Binary traces are a 21-byte little-endian header (``b"VKTRACE1"``, rate as
u32, resolution as u8, sample count as u64) followed by u16 samples. CSV traces
carry a ``# rate=<int>`` comment and one sample per line.
"""

from __future__ import annotations

import json
import math
import os
import struct
from pathlib import Path

import numpy as np

from .signal_sim import SignalTrace

__all__ = [
    "TraceFormatError",
    "MalformedHeaderError",
    "SampleRangeError",
    "TruncatedPayloadError",
    "MAGIC",
    "read_trace",
    "write_trace",
    "dumps_report",
    "write_report",
    "read_report",
]

MAGIC = b"VKTRACE1"
_HEADER = struct.Struct("<8sIBQ")


class TraceFormatError(ValueError):
    pass


class MalformedHeaderError(TraceFormatError):
    pass


class SampleRangeError(TraceFormatError):
    pass


class TruncatedPayloadError(TraceFormatError):
    pass


def _infer_format(path, fmt):
    if fmt is not None:
        if fmt not in ("csv", "binary"):
            raise ValueError(f"unknown trace format {fmt!r}")
        return fmt
    return "csv" if str(path).lower().endswith(".csv") else "binary"


def _check_range(samples: np.ndarray, resolution_bits: int):
    top = (1 << resolution_bits) - 1
    bad = np.flatnonzero((samples < 0) | (samples > top))
    if bad.size:
        i = int(bad[0])
        raise SampleRangeError(
            f"sample {i} = {samples[i]} outside [0, {top}] for {resolution_bits}-bit ADC"
        )


def read_trace(path, format: str | None = None) -> SignalTrace:
    fmt = _infer_format(path, format)
    if fmt == "binary":
        return _read_binary(Path(path).read_bytes())
    return _read_csv(Path(path).read_text())


def _read_binary(data: bytes) -> SignalTrace:
    if len(data) < _HEADER.size:
        raise MalformedHeaderError(f"file holds {len(data)} bytes, header needs {_HEADER.size}")
    magic, rate, bits, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedHeaderError(f"bad magic {magic!r}")
    if not 1 <= bits <= 16:
        raise MalformedHeaderError(f"resolution_bits {bits} not in [1, 16]")
    if rate == 0:
        raise MalformedHeaderError("rate must be non-zero")
    payload = len(data) - _HEADER.size
    if payload < 2 * count:
        raise TruncatedPayloadError(f"header claims {count} samples, payload holds {payload // 2}")
    if payload > 2 * count:
        raise MalformedHeaderError(
            f"header claims {count} samples but payload has {payload} bytes"
        )
    samples = np.frombuffer(data, dtype="<u2", count=count, offset=_HEADER.size).astype(np.int64)
    _check_range(samples, bits)
    return SignalTrace(samples, float(rate), float(rate), resolution_bits=bits)


def _read_csv(text: str) -> SignalTrace:
    rate = None
    bits = 12
    values = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            key = key.strip()
            try:
                if key == "rate":
                    rate = int(value)
                elif key == "resolution_bits":
                    bits = int(value)
            except ValueError:
                raise MalformedHeaderError(f"line {lineno}: bad header value {line!r}") from None
            continue
        try:
            values.append(int(line))
        except ValueError:
            raise TraceFormatError(f"line {lineno}: not an integer sample: {line!r}") from None
    if rate is None or rate <= 0:
        raise MalformedHeaderError("missing or invalid '# rate=<int>' header")
    if not 1 <= bits <= 16:
        raise MalformedHeaderError(f"resolution_bits {bits} not in [1, 16]")
    samples = np.array(values, dtype=np.int64)
    _check_range(samples, bits)
    return SignalTrace(samples, float(rate), float(rate), resolution_bits=bits)


def write_trace(trace: SignalTrace, path, format: str | None = None) -> None:
    """Persist a capture. Only the nominal rate, resolution and codes are stored."""
    fmt = _infer_format(path, format)
    samples = np.asarray(trace.samples)
    if samples.dtype.kind == "f":
        if not np.all(samples == np.round(samples)):
            raise TraceFormatError("only integer ADC codes can be written")
        samples = samples.astype(np.int64)
    _check_range(samples, trace.resolution_bits)
    rate = int(round(trace.nominal_rate))
    if fmt == "binary":
        header = _HEADER.pack(MAGIC, rate, trace.resolution_bits, len(samples))
        data = header + samples.astype("<u2").tobytes()
        Path(path).write_bytes(data)
    else:
        lines = [f"# rate={rate}"]
        if trace.resolution_bits != 12:
            lines.append(f"# resolution_bits={trace.resolution_bits}")
        lines.extend(str(int(v)) for v in samples)
        Path(path).write_text("\n".join(lines) + "\n")


def _emit(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError("reports cannot hold NaN or infinity")
        # fixed 10 significant digits keeps re-serialization byte-stable
        return format(x, "#.10g")
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_emit(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [_emit(v, indent, level + 1) for v in obj]
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(items) + "]"
        return "[\n" + ",\n".join(pad + i for i in items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_report(report) -> str:
    """JSON text of a report object (anything with ``to_dict``) or a plain dict."""
    obj = report.to_dict() if hasattr(report, "to_dict") else report
    return _emit(obj, 2, 0) + "\n"


def write_report(report, path) -> None:
    text = dumps_report(report)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def read_report(path) -> dict:
    return json.loads(Path(path).read_text())
