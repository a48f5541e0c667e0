"""Two-party key establishment session.

Device A (initiator) publishes its rate, preamble, index schedule and helper
data; device B (responder) aligns to A and reconciles. Each attempt re-measures
the line. Message order is fixed::

    B->A INIT, A->B RATE, B->A RATE, A->B PREAMBLE, A->B INDICES,
    A->B HELPER, B->A CONFIRM, A->B RESULT

CONFIRM carries SHA-256 of B's reconciled key so both sides learn the outcome
without revealing the key.
"""

from __future__ import annotations

import hashlib
import struct
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import alignment, bitext, recon
from ..bitext import BitSequence, IndexSchedule, Role
from ..signal_sim import SignalTrace
from .channel import ChannelError, TcpChannel, channel_pair
from .wire import (
    Confirm,
    Helper,
    Indices,
    Init,
    Preamble,
    ProtocolError,
    Rate,
    Result,
    decode_message,
    encode_message,
)

__all__ = [
    "SessionParams",
    "PairingReport",
    "TranscriptEntry",
    "TraceSource",
    "run_initiator",
    "run_responder",
    "pair",
    "key_digest",
    "AttemptState",
]

TraceSource = Callable[[int], SignalTrace]

INITIATOR = "A"
RESPONDER = "B"


@dataclass(frozen=True)
class SessionParams:
    nominal_rate: int = 85_400
    n_p: int = 22
    n_b: int = 6
    key_len: int = 128
    code: tuple[int, int] = (3, 1)
    sweep_radius: int = alignment.DEFAULT_SWEEP_RADIUS
    max_attempts: int = 5
    search_periods: int = 2

    def __post_init__(self):
        if self.n_p * self.n_b < self.key_len:
            raise ValueError(f"n_p * n_b = {self.n_p * self.n_b} < key_len = {self.key_len}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        recon.build_code(*self.code)
        object.__setattr__(self, "code", tuple(self.code))

    @classmethod
    def for_bins(cls, n_b: int, **kw) -> "SessionParams":
        """Parameters for one of the 128-bit (n_p, n_b) configurations."""
        n_p = dict((b, p) for p, b in bitext.KEY_CONFIGS)[n_b]
        return cls(n_p=n_p, n_b=n_b, **kw)

    @property
    def nominal_spp(self) -> int:
        return round(self.nominal_rate / alignment.MAINS_HZ)

    @property
    def capture_periods(self) -> int:
        # preamble + n_p + 1 periods after the sync search window, plus one spare
        return max(alignment.N_AVERAGE + 1, self.n_p + 2 + self.search_periods + 1)

    @property
    def capture_samples(self) -> int:
        return self.capture_periods * (self.nominal_spp + self.sweep_radius)

    def init_message(self, attempt: int) -> Init:
        n, k = self.code
        return Init(
            self.nominal_rate, self.n_p, self.n_b, self.key_len, n, k,
            self.sweep_radius, self.max_attempts, attempt,
        )

    @classmethod
    def from_init(cls, msg: Init) -> "SessionParams":
        return cls(
            nominal_rate=msg.nominal_rate,
            n_p=msg.n_p,
            n_b=msg.n_b,
            key_len=msg.key_len,
            code=(msg.code_n, msg.code_k),
            sweep_radius=msg.sweep_radius,
            max_attempts=msg.max_attempts,
        )


@dataclass(frozen=True)
class TranscriptEntry:
    sender: str
    frame: bytes

    @property
    def message(self):
        return decode_message(self.frame)

    def to_dict(self) -> dict:
        return {
            "sender": self.sender,
            "type": self.message.type.name,
            "frame": self.frame.hex(),
        }


@dataclass
class AttemptState:
    """What one side learned during one attempt (kept out of serialized reports)."""

    spp_self: int | None = None
    spp_peer: int | None = None
    spp_common: int | None = None
    offset: int | None = None
    raw_bits: BitSequence | None = None
    key: BitSequence | None = None
    success: bool = False


@dataclass
class PairingReport:
    role: str
    params: SessionParams
    success: bool = False
    attempts_used: int = 0
    pre_reconciliation_agreement: float | None = None
    attempt_agreements: list[float] = field(default_factory=list)
    final_key: BitSequence | None = None
    transcript: list[TranscriptEntry] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=lambda: defaultdict(float))
    attempts: list[AttemptState] = field(default_factory=list)
    failure_reason: str | None = None
    # responder's preamble offset, known once both reports are merged
    peer_sync_offset: int | None = None

    def to_dict(self, include_timings: bool = False) -> dict:
        last = self.attempts[-1] if self.attempts else AttemptState()
        out = {
            "kind": "pairing",
            "role": self.role,
            "success": self.success,
            "attempts_used": self.attempts_used,
            "max_attempts": self.params.max_attempts,
            "params": {
                "nominal_rate": self.params.nominal_rate,
                "n_p": self.params.n_p,
                "n_b": self.params.n_b,
                "key_len": self.params.key_len,
                "code": list(self.params.code),
                "sweep_radius": self.params.sweep_radius,
            },
            "pre_reconciliation_agreement": self.pre_reconciliation_agreement,
            "attempt_agreements": list(self.attempt_agreements),
            "spp": {"self": last.spp_self, "peer": last.spp_peer, "common": last.spp_common},
            "sync_offset": last.offset if last.offset is not None else self.peer_sync_offset,
            "key_confirmation": "sha256 (added; not part of the original protocol)",
            "final_key_sha256": key_digest(self.final_key).hex() if self.final_key else None,
            "failure_reason": self.failure_reason,
            "transcript": [e.to_dict() for e in self.transcript],
        }
        if include_timings:
            out["timings"] = dict(self.timings)
        return out


def key_digest(key: BitSequence) -> bytes:
    bits = np.asarray(key.bits, dtype=np.uint8)
    return hashlib.sha256(struct.pack(">H", len(bits)) + np.packbits(bits).tobytes()).digest()


class _Endpoint:
    def __init__(self, channel, role: str, report: PairingReport):
        self.channel = channel
        self.role = role
        self.peer = RESPONDER if role == INITIATOR else INITIATOR
        self.report = report

    def send(self, msg) -> None:
        frame = encode_message(msg)
        self.report.transcript.append(TranscriptEntry(self.role, frame))
        self.channel.send(frame)

    def expect(self, cls):
        frame = self.channel.recv()
        self.report.transcript.append(TranscriptEntry(self.peer, frame))
        msg = decode_message(frame)
        if not isinstance(msg, cls):
            raise ProtocolError(f"expected {cls.type.name}, got {msg.type.name}")
        return msg

    def timed(self, step: str):
        return _Timer(self.report.timings, step)


class _Timer:
    def __init__(self, sink, step):
        self.sink, self.step = sink, step

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.sink[self.step] += time.perf_counter() - self.t0


def _measure(source: TraceSource, attempt: int, params: SessionParams) -> SignalTrace:
    trace = source(attempt)
    if len(trace) < params.capture_samples:
        raise alignment.AlignmentError(
            f"capture of {len(trace)} samples, session needs {params.capture_samples}"
        )
    return trace


def run_initiator(channel, trace_source: TraceSource, params: SessionParams) -> PairingReport:
    """Device A: publish rate, preamble, schedule and helper data; judge CONFIRM."""
    report = PairingReport(INITIATOR, params)
    ep = _Endpoint(channel, INITIATOR, report)
    code = recon.build_code(*params.code)
    for attempt in range(params.max_attempts):
        init = ep.expect(Init)
        if init != params.init_message(attempt):
            raise ProtocolError(f"INIT does not match local parameters/attempt: {init}")
        state = AttemptState()
        report.attempts.append(state)
        report.attempts_used = attempt + 1

        with ep.timed("measure"):
            trace = _measure(trace_source, attempt, params)
        with ep.timed("rate_estimation"):
            state.spp_self = alignment.estimate_spp(
                trace, params.nominal_rate, params.sweep_radius
            ).spp
        ep.send(Rate(state.spp_self))
        state.spp_peer = ep.expect(Rate).spp
        c_l = state.spp_common = alignment.negotiate_rate(state.spp_self, state.spp_peer)
        with ep.timed("rate_matching"):
            samples = alignment.resample(trace, state.spp_self, c_l).samples
        ep.send(Preamble(tuple(np.rint(samples[:c_l]).astype(int).tolist())))

        with ep.timed("bit_extraction"):
            periods = bitext.slice_periods(samples, c_l, params.n_p + 2)
            raw, schedule = bitext.generate_sequence(
                periods, params.n_p, params.n_b, params.key_len, Role.INDEXER
            )
        state.raw_bits = raw
        ep.send(Indices(tuple(schedule.entries.reshape(-1).tolist())))

        with ep.timed("reconciliation"):
            helper = recon.helper_data(code, raw)
            n_key = recon.reconciled_length(code, len(raw))
            key = BitSequence(raw.bits[:n_key], raw.provenance[:n_key])
        ep.send(Helper(tuple(helper.flat().tolist())))

        confirm = ep.expect(Confirm)
        ok = confirm.digest == key_digest(key)
        ep.send(Result(ok))
        state.key = key
        state.success = ok
        if ok:
            report.success = True
            report.final_key = key
            return report
    report.failure_reason = "attempts_exhausted"
    return report


def run_responder(channel, trace_source: TraceSource, params: SessionParams) -> PairingReport:
    """Device B: align to A's preamble, follow A's schedule, reconcile, confirm."""
    report = PairingReport(RESPONDER, params)
    ep = _Endpoint(channel, RESPONDER, report)
    code = recon.build_code(*params.code)
    for attempt in range(params.max_attempts):
        ep.send(params.init_message(attempt))
        state = AttemptState()
        report.attempts.append(state)
        report.attempts_used = attempt + 1

        with ep.timed("measure"):
            trace = _measure(trace_source, attempt, params)
        with ep.timed("rate_estimation"):
            state.spp_self = alignment.estimate_spp(
                trace, params.nominal_rate, params.sweep_radius
            ).spp
        state.spp_peer = ep.expect(Rate).spp
        ep.send(Rate(state.spp_self))
        c_l = state.spp_common = alignment.negotiate_rate(state.spp_self, state.spp_peer)
        with ep.timed("rate_matching"):
            samples = alignment.resample(trace, state.spp_self, c_l).samples

        preamble = ep.expect(Preamble).samples
        if len(preamble) != c_l:
            raise ProtocolError(f"PREAMBLE has {len(preamble)} samples, expected {c_l}")
        with ep.timed("time_sync"):
            sync = alignment.sync_offset(preamble, samples, params.search_periods * c_l)
        state.offset = sync.offset_samples

        entries = np.asarray(ep.expect(Indices).entries, dtype=np.int64)
        if entries.size != params.n_p * params.n_b:
            raise ProtocolError(
                f"INDICES has {entries.size} entries, expected {params.n_p * params.n_b}"
            )
        if entries.size and entries.max() >= c_l:
            raise ProtocolError("INDICES entry beyond the common period length")
        schedule = IndexSchedule(entries.reshape(params.n_p, params.n_b), c_l)
        with ep.timed("bit_extraction"):
            periods = bitext.slice_periods(samples, c_l, params.n_p + 2, start=state.offset)
            raw, _ = bitext.generate_sequence(
                periods, params.n_p, params.n_b, params.key_len, Role.FOLLOWER, schedule
            )
        state.raw_bits = raw

        helper_bits = np.asarray(ep.expect(Helper).bits, dtype=np.uint8)
        n_key = recon.reconciled_length(code, len(raw))
        if len(helper_bits) != n_key:
            raise ProtocolError(f"HELPER has {len(helper_bits)} bits, expected {n_key}")
        with ep.timed("reconciliation"):
            key = recon.reconcile(code, raw, recon.HelperData(helper_bits.reshape(-1, code.n)))
        ep.send(Confirm(key_digest(key)))
        ok = ep.expect(Result).success
        state.key = key
        state.success = ok
        if ok:
            report.success = True
            report.final_key = key
            return report
    report.failure_reason = "attempts_exhausted"
    return report


def _agreement(a: BitSequence, b: BitSequence) -> float:
    return float(np.mean(a.bits == b.bits))


def merge_reports(a: PairingReport, b: PairingReport) -> PairingReport:
    """Initiator's report enriched with agreement figures from both sides."""
    agreements = [
        _agreement(sa.raw_bits, sb.raw_bits)
        for sa, sb in zip(a.attempts, b.attempts)
        if sa.raw_bits is not None and sb.raw_bits is not None
    ]
    a.attempt_agreements = agreements
    a.pre_reconciliation_agreement = agreements[-1] if agreements else None
    if b.attempts:
        a.peer_sync_offset = b.attempts[-1].offset
    if a.success and (b.final_key is None or a.final_key != b.final_key):
        raise ProtocolError("success reported but keys differ")
    return a


def pair(
    source_a: TraceSource,
    source_b: TraceSource,
    params: SessionParams,
    transport: str = "inproc",
    host: str = "127.0.0.1",
    port: int = 0,
) -> tuple[PairingReport, PairingReport]:
    """Run both endpoints locally; returns (initiator report, responder report).

    The initiator report carries the pre-reconciliation agreement figures.
    """
    outcome: dict = {}

    if transport == "inproc":
        ch_a, ch_b = channel_pair()

        def run_a():
            try:
                outcome["a"] = run_initiator(ch_a, source_a, params)
            except BaseException as exc:  # surfaced in the caller's thread
                outcome["a_error"] = exc
                ch_a.close()

        thread = threading.Thread(target=run_a, name="voltkey-initiator", daemon=True)
        thread.start()
        try:
            rep_b = run_responder(ch_b, source_b, params)
        except BaseException:
            ch_b.close()
            thread.join()
            if "a_error" in outcome:
                # the initiator's failure is the root cause of the closed channel
                raise outcome["a_error"]
            raise
        thread.join()
    elif transport == "tcp":
        bound = threading.Event()
        port_box = {}

        def ready(p):
            port_box["port"] = p
            bound.set()

        def run_a():
            try:
                ch = TcpChannel.listen(host, port, ready=ready)
                try:
                    outcome["a"] = run_initiator(ch, source_a, params)
                finally:
                    ch.close()
            except BaseException as exc:
                outcome["a_error"] = exc
                bound.set()

        thread = threading.Thread(target=run_a, name="voltkey-initiator", daemon=True)
        thread.start()
        bound.wait(10)
        if "a_error" in outcome:
            raise outcome["a_error"]
        ch_b = TcpChannel.connect(host, port_box["port"])
        try:
            rep_b = run_responder(ch_b, source_b, params)
        finally:
            ch_b.close()
        thread.join()
    else:
        raise ValueError(f"unknown transport {transport!r}")

    if "a_error" in outcome:
        raise outcome["a_error"]
    rep_a = merge_reports(outcome["a"], rep_b)
    return rep_a, rep_b
