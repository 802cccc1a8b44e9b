"""Client for external scoring models speaking the newline-delimited JSON protocol.

The adapter talks first: a single hello line declaring the protocol version
and its concurrency mode. After that the client sends score requests with
strictly increasing ids and reads one response line per request. Transport is
either a child process on stdio or a TCP connection; one JSON document per
line, UTF-8.
"""

from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass
from typing import Sequence

from .errors import (
    HandshakeError,
    MalformedResponseError,
    TransportError,
    VersionMismatchError,
)
from .seqdata import SequenceMatrix

PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class ProtocolConfig:
    protocol_version: int = PROTOCOL_VERSION
    connect_timeout: float = 10.0
    request_timeout: float = 120.0


class _LineChannel:
    """Background-reader line transport; recv enforces a timeout uniformly."""

    def __init__(self) -> None:
        self._lines: queue.Queue[str | None] = queue.Queue()

    def _start_reader(self, readline) -> None:
        def pump() -> None:
            while True:
                try:
                    line = readline()
                except (OSError, ValueError):
                    line = ""
                if not line:
                    self._lines.put(None)
                    return
                self._lines.put(line)

        thread = threading.Thread(target=pump, daemon=True)
        thread.start()

    def recv_line(self, timeout: float) -> str | None:
        """Next line without its terminator, or None on end-of-stream."""
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError from None
        return None if line is None else line.rstrip("\r\n")

    def send_line(self, line: str) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


class _ProcChannel(_LineChannel):
    def __init__(self, command: str) -> None:
        super().__init__()
        self._command = command
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise TransportError(f"cannot launch adapter {command!r}: {exc}") from None
        assert self._proc.stdout is not None
        self._start_reader(self._proc.stdout.readline)

    def send_line(self, line: str) -> None:
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise TransportError(f"adapter process is gone: {exc}") from None

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                if self._proc.stdin is not None:
                    self._proc.stdin.close()
                self._proc.terminate()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()

    def describe(self) -> str:
        return f"proc:{self._command}"


class _TcpChannel(_LineChannel):
    def __init__(self, host: str, port: int, connect_timeout: float) -> None:
        super().__init__()
        self._endpoint = f"{host}:{port}"
        try:
            self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {self._endpoint}: {exc}") from None
        self._sock.settimeout(None)
        self._reader = self._sock.makefile("r", encoding="utf-8", newline="\n")
        self._start_reader(self._reader.readline)

    def send_line(self, line: str) -> None:
        try:
            self._sock.sendall((line + "\n").encode("utf-8"))
        except OSError as exc:
            raise TransportError(f"connection to {self._endpoint} lost: {exc}") from None

    def close(self) -> None:
        # Never close the makefile object here: the reader thread may be
        # blocked inside readline and closing would deadlock on its lock.
        # Shutting the socket down unblocks that read with EOF instead.
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass

    def describe(self) -> str:
        return f"tcp:{self._endpoint}"


def _parse_line(line: str) -> dict:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError:
        raise MalformedResponseError(f"adapter sent a non-JSON line: {line!r}") from None
    if not isinstance(doc, dict):
        raise MalformedResponseError(f"adapter sent a non-object line: {line!r}")
    return doc


class WireModel:
    """Scorer forwarding batches over one protocol connection.

    Writes are serialized with a lock: exactly one request is in flight at a
    time, which is valid for both serial and concurrent adapters.
    """

    def __init__(self, channel: _LineChannel, config: ProtocolConfig) -> None:
        self._channel = channel
        self._config = config
        self._lock = threading.Lock()
        self._next_id = 0
        self.declared_concurrency = self._handshake()

    def _handshake(self) -> str:
        try:
            line = self._channel.recv_line(self._config.connect_timeout)
        except TimeoutError:
            self._channel.close()
            raise HandshakeError(
                f"adapter {self._channel.describe()} sent no hello within "
                f"{self._config.connect_timeout}s"
            ) from None
        if line is None:
            self._channel.close()
            raise HandshakeError(f"adapter {self._channel.describe()} closed before hello")
        try:
            hello = _parse_line(line)
        except MalformedResponseError:
            self._channel.close()
            raise HandshakeError(f"adapter hello is not valid JSON: {line!r}") from None
        if hello.get("type") != "hello":
            self._channel.close()
            raise HandshakeError(f"expected a hello line, got: {line!r}")
        version = hello.get("protocol")
        if version != self._config.protocol_version:
            self._channel.close()
            raise VersionMismatchError(
                f"adapter speaks protocol {version!r}, client requires "
                f"{self._config.protocol_version}"
            )
        concurrency = hello.get("concurrency", "serial")
        if concurrency not in ("serial", "concurrent"):
            self._channel.close()
            raise HandshakeError(f"adapter declared unknown concurrency {concurrency!r}")
        return concurrency

    def score_batch(self, batch: Sequence[SequenceMatrix]) -> list[float]:
        from .model import validate_batch

        validate_batch(batch)
        payload = [[list(map(float, seq.values[:, t])) for t in range(seq.l)] for seq in batch]
        with self._lock:
            request_id = self._next_id
            self._next_id += 1
            self._channel.send_line(
                json.dumps({"type": "score", "id": request_id, "batch": payload})
            )
            line = self._recv()
            doc = _parse_line(line)
            if doc.get("type") == "error":
                raise TransportError(
                    f"adapter reported an error for request {request_id}: "
                    f"{doc.get('message', '')}"
                )
            if doc.get("type") != "scores":
                raise MalformedResponseError(f"expected a scores line, got: {line!r}")
            if doc.get("id") != request_id:
                raise MalformedResponseError(
                    f"response id {doc.get('id')!r} does not match request id "
                    f"{request_id}: {line!r}"
                )
            scores = doc.get("scores")
            if not isinstance(scores, list) or len(scores) != len(batch):
                raise MalformedResponseError(
                    f"expected {len(batch)} scores, got: {line!r}"
                )
            try:
                return [float(s) for s in scores]
            except (TypeError, ValueError):
                raise MalformedResponseError(f"non-numeric score in: {line!r}") from None

    def _recv(self) -> str:
        try:
            line = self._channel.recv_line(self._config.request_timeout)
        except TimeoutError:
            raise TransportError(
                f"adapter {self._channel.describe()} sent no response within "
                f"{self._config.request_timeout}s"
            ) from None
        if line is None:
            raise TransportError(f"adapter {self._channel.describe()} closed the connection")
        return line

    def close(self) -> None:
        self._channel.close()

    def __enter__(self) -> "WireModel":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def connect_protocol_model(launch: str, config: ProtocolConfig | None = None) -> WireModel:
    """Connect to an external model: ``proc:<command>`` or ``tcp:<host:port>``.

    A bare string with no prefix is treated as a command line. Returns once
    the hello handshake has completed.
    """
    config = config or ProtocolConfig()
    if launch.startswith("tcp:"):
        endpoint = launch[len("tcp:"):]
        host, sep, port_text = endpoint.rpartition(":")
        if not sep or not host:
            raise TransportError(f"tcp endpoint must be host:port, got {endpoint!r}")
        try:
            port = int(port_text)
        except ValueError:
            raise TransportError(f"tcp endpoint has a non-numeric port: {endpoint!r}") from None
        channel: _LineChannel = _TcpChannel(host, port, config.connect_timeout)
    else:
        command = launch[len("proc:"):] if launch.startswith("proc:") else launch
        channel = _ProcChannel(command)
    return WireModel(channel, config)
