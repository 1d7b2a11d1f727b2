"""Ordered, reliable, duplex message streams carrying JSON objects."""

from __future__ import annotations

import json
import queue
import socket
import threading
import time
from abc import ABC, abstractmethod
from typing import Any

from vbqc_aces.protocol.device import QubitState, StateRegistry


class ChannelError(RuntimeError):
    pass


def encode(msg: dict[str, Any]) -> str:
    return json.dumps(msg, sort_keys=True, separators=(",", ":"))


class Channel(ABC):
    @abstractmethod
    def send(self, msg: dict[str, Any]) -> None: ...

    @abstractmethod
    def recv(self) -> dict[str, Any]: ...

    def close(self) -> None:
        pass

    def __enter__(self) -> Channel:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class QueueChannel(Channel):
    """In-process binding. Messages are serialised exactly as on the wire."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, timeout: float | None = 60.0) -> None:
        self._inbox = inbox
        self._outbox = outbox
        self.timeout = timeout

    @classmethod
    def pair(cls, timeout: float | None = 60.0) -> tuple[QueueChannel, QueueChannel]:
        a, b = queue.Queue(), queue.Queue()
        return cls(a, b, timeout), cls(b, a, timeout)

    def send(self, msg: dict[str, Any]) -> None:
        self._outbox.put(encode(msg))

    def recv(self) -> dict[str, Any]:
        try:
            line = self._inbox.get(timeout=self.timeout)
        except queue.Empty as exc:
            raise ChannelError("timed out waiting for a message") from exc
        if line is None:
            raise ChannelError("peer closed the channel")
        return json.loads(line)

    def close(self) -> None:
        self._outbox.put(None)


class TcpChannel(Channel):
    """Newline-delimited JSON over a TCP socket."""

    def __init__(self, sock: socket.socket) -> None:
        self._sock = sock
        # small request/response messages: disable Nagle batching
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._reader = sock.makefile("r", encoding="utf-8", newline="\n")
        self._writer = sock.makefile("w", encoding="utf-8", newline="\n")

    def send(self, msg: dict[str, Any]) -> None:
        try:
            self._writer.write(encode(msg) + "\n")
            self._writer.flush()
        except OSError as exc:
            raise ChannelError(f"send failed: {exc}") from exc

    def recv(self) -> dict[str, Any]:
        try:
            line = self._reader.readline()
        except OSError as exc:
            raise ChannelError(f"receive failed: {exc}") from exc
        if not line:
            raise ChannelError("connection closed by peer")
        return json.loads(line)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        for f in (self._writer, self._reader):
            try:
                f.close()
            except OSError:
                pass
        self._sock.close()


def parse_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    return host or "127.0.0.1", int(port)


class Listener:
    """Bound listening socket; ``port=0`` picks a free port."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, timeout: float | None = 60.0) -> None:
        self._sock = socket.create_server((host, port))
        self._sock.settimeout(timeout)
        self.address = self._sock.getsockname()[:2]

    def accept(self) -> TcpChannel:
        try:
            conn, _ = self._sock.accept()
        except socket.timeout as exc:
            raise ChannelError("no peer connected") from exc
        conn.settimeout(None)
        return TcpChannel(conn)

    def close(self) -> None:
        self._sock.close()


def connect(host: str, port: int, attempts: int = 50, delay: float = 0.1) -> TcpChannel:
    last: OSError | None = None
    for _ in range(attempts):
        try:
            return TcpChannel(socket.create_connection((host, port)))
        except OSError as exc:
            last = exc
            time.sleep(delay)
    raise ChannelError(f"could not connect to {host}:{port}: {last}")


# --- state link for client and server in separate processes ------------------


class RegistryService:
    """Answers descriptor lookups from a remote device; stands in for the quantum link."""

    def __init__(self, registry: StateRegistry, channel: Channel) -> None:
        self.registry = registry
        self.channel = channel
        self._thread = threading.Thread(target=self._serve, daemon=True)

    def start(self) -> RegistryService:
        self._thread.start()
        return self

    def _serve(self) -> None:
        while True:
            try:
                msg = self.channel.recv()
            except ChannelError:
                return
            self.channel.send(self.registry.resolve(msg["descriptor"]).to_dict())

    def stop(self) -> None:
        self.channel.close()
        self._thread.join(5.0)


class RemoteResolver:
    def __init__(self, channel: Channel) -> None:
        self.channel = channel

    def __call__(self, descriptor: int) -> QubitState:
        self.channel.send({"descriptor": descriptor})
        data = self.channel.recv()
        return QubitState(data["kind"], int(data["value"]))
