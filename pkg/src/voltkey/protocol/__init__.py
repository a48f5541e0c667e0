"""Session state machine, wire format and transports."""

from .channel import ChannelError, InProcessChannel, TcpChannel, channel_pair
from .session import (
    PairingReport,
    SessionParams,
    TranscriptEntry,
    key_digest,
    pair,
    run_initiator,
    run_responder,
)
from .wire import (
    Confirm,
    FramingError,
    Helper,
    Indices,
    Init,
    MessageType,
    Preamble,
    ProtocolError,
    Rate,
    Result,
    decode_message,
    encode_message,
)

__all__ = [
    "ChannelError",
    "InProcessChannel",
    "TcpChannel",
    "channel_pair",
    "PairingReport",
    "SessionParams",
    "TranscriptEntry",
    "key_digest",
    "pair",
    "run_initiator",
    "run_responder",
    "Confirm",
    "FramingError",
    "Helper",
    "Indices",
    "Init",
    "MessageType",
    "Preamble",
    "ProtocolError",
    "Rate",
    "Result",
    "decode_message",
    "encode_message",
]
