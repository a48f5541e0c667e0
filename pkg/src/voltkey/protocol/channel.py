"""Ordered, reliable frame transports: paired in-process queues and TCP."""

from __future__ import annotations

import queue
import socket
import time

from .wire import HEADER_SIZE, read_frame_length

__all__ = ["ChannelError", "InProcessChannel", "channel_pair", "TcpChannel"]

DEFAULT_TIMEOUT = 30.0


class ChannelError(Exception):
    pass


class InProcessChannel:
    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, timeout: float = DEFAULT_TIMEOUT):
        self._inbox = inbox
        self._outbox = outbox
        self.timeout = timeout
        self._closed = False

    def send(self, frame: bytes) -> None:
        if self._closed:
            raise ChannelError("channel closed")
        self._outbox.put(bytes(frame))

    def recv(self) -> bytes:
        try:
            frame = self._inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise ChannelError(f"no frame within {self.timeout}s") from None
        if frame is None:
            raise ChannelError("peer closed the channel")
        return frame

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(None)


def channel_pair(timeout: float = DEFAULT_TIMEOUT) -> tuple[InProcessChannel, InProcessChannel]:
    a_to_b: queue.Queue = queue.Queue()
    b_to_a: queue.Queue = queue.Queue()
    return (
        InProcessChannel(b_to_a, a_to_b, timeout),
        InProcessChannel(a_to_b, b_to_a, timeout),
    )


class TcpChannel:
    """Frames over one TCP connection; the frame header gives message bounds."""

    def __init__(self, sock: socket.socket, timeout: float = DEFAULT_TIMEOUT):
        self.sock = sock
        self.sock.settimeout(timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    @classmethod
    def listen(cls, host: str, port: int, timeout: float = DEFAULT_TIMEOUT, ready=None):
        """Accept a single peer on ``host:port``.

        ``ready`` is called with the bound port once listening (handy with port 0).
        """
        with socket.create_server((host, port)) as server:
            server.settimeout(timeout)
            if ready is not None:
                ready(server.getsockname()[1])
            try:
                conn, _ = server.accept()
            except OSError as exc:
                raise ChannelError(f"no peer connected: {exc}") from exc
        return cls(conn, timeout)

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = DEFAULT_TIMEOUT, retry_for: float = 5.0):
        deadline = time.monotonic() + retry_for
        while True:
            try:
                sock = socket.create_connection((host, port), timeout=timeout)
                return cls(sock, timeout)
            except OSError as exc:
                if time.monotonic() >= deadline:
                    raise ChannelError(f"cannot connect to {host}:{port}: {exc}") from exc
                time.sleep(0.05)

    def _read_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self.sock.recv(n - len(buf))
            except OSError as exc:
                raise ChannelError(f"receive failed: {exc}") from exc
            if not chunk:
                raise ChannelError("peer closed the connection")
            buf.extend(chunk)
        return bytes(buf)

    def send(self, frame: bytes) -> None:
        try:
            self.sock.sendall(frame)
        except OSError as exc:
            raise ChannelError(f"send failed: {exc}") from exc

    def recv(self) -> bytes:
        header = self._read_exact(HEADER_SIZE)
        return header + self._read_exact(read_frame_length(header))

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass
