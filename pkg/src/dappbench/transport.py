"""Byte-stream transports standing in for the deployment scenarios.

Containers are not spawned; each scenario maps to a transport between the
simulated RAN and the dApp loop:

- inprocess: shared-memory byte channel (bare-metal / co-located analog)
- local_stream: TCP over loopback (separated-container analog)
- delayed_stream: local_stream plus a fixed delivery delay per direction
  per message (separated containers behind a virtual bridge)
- direct_capture: in-process capture stream carrying eCPRI frames, plus an
  in-process control session (smart-NIC datapath position: data arrives
  inline, only controls travel a session)

All endpoints expose the same small interface: sendall / wait_for_data /
read_exact / close. Before any session traffic, the dApp side measures the
round-trip time with a fixed 8-byte echo probe (minimum of three, which
filters scheduler noise); that value is stamped into every latency record
as the transport share of the loop.
"""

from __future__ import annotations

import select
import socket
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum

PROBE = b"E3PROBE!"
RTT_PROBES = 5
_SPIN_S = 5e-4  # tail of each delay sleep done by polling, for accuracy


class TransportClosed(ConnectionError):
    """The peer closed the stream; loops treat this as a normal end."""


class TransportVariant(str, Enum):
    INPROCESS = "inprocess"
    LOCAL_STREAM = "local_stream"
    DELAYED_STREAM = "delayed_stream"
    DIRECT_CAPTURE = "direct_capture"

    @classmethod
    def parse(cls, name: str) -> "TransportVariant":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown transport {name!r}") from None


@dataclass(frozen=True)
class TransportSpec:
    variant: TransportVariant
    delay_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.delay_ms < 0:
            raise ValueError("delay_ms must be non-negative")
        if self.variant is TransportVariant.DELAYED_STREAM and self.delay_ms == 0:
            raise ValueError("delayed_stream needs a positive delay_ms")


class _Conduit:
    """One direction of an in-process byte stream."""

    def __init__(self) -> None:
        self._buf = bytearray()
        self._cv = threading.Condition()
        self._closed = False

    def write(self, data: bytes) -> None:
        with self._cv:
            if self._closed:
                raise TransportClosed("conduit closed")
            self._buf.extend(data)
            self._cv.notify_all()

    def wait_for_data(self, timeout: float | None = None) -> bool:
        with self._cv:
            if timeout is None:
                while not self._buf and not self._closed:
                    self._cv.wait()
            else:
                deadline = time.monotonic() + timeout
                while not self._buf and not self._closed:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0 or not self._cv.wait(remaining):
                        break
            # True means "reading will not block": data buffered, or EOF pending
            return bool(self._buf) or self._closed

    def read_exact(self, n: int) -> bytes | None:
        with self._cv:
            while len(self._buf) < n and not self._closed:
                self._cv.wait()
            if len(self._buf) < n:
                return None
            out = bytes(self._buf[:n])
            del self._buf[:n]
            return out

    def close(self) -> None:
        with self._cv:
            self._closed = True
            self._cv.notify_all()


class ChannelEndpoint:
    """In-process endpoint over a pair of conduits."""

    def __init__(self, inbound: _Conduit, outbound: _Conduit):
        self._in = inbound
        self._out = outbound

    def sendall(self, data: bytes) -> None:
        self._out.write(data)

    def wait_for_data(self, timeout: float | None = None) -> bool:
        return self._in.wait_for_data(timeout)

    def read_exact(self, n: int) -> bytes | None:
        return self._in.read_exact(n)

    def close(self) -> None:
        self._out.close()
        self._in.close()


def channel_pair() -> tuple[ChannelEndpoint, ChannelEndpoint]:
    a_to_b, b_to_a = _Conduit(), _Conduit()
    return ChannelEndpoint(b_to_a, a_to_b), ChannelEndpoint(a_to_b, b_to_a)


class SocketEndpoint:
    """Blocking TCP endpoint with a receive buffer."""

    def __init__(self, sock: socket.socket):
        sock.setblocking(True)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock
        self._buf = bytearray()

    def sendall(self, data: bytes) -> None:
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise TransportClosed(str(exc)) from exc

    def wait_for_data(self, timeout: float | None = None) -> bool:
        if self._buf:
            return True
        readable, _, _ = select.select([self._sock], [], [], timeout)
        return bool(readable)

    def read_exact(self, n: int) -> bytes | None:
        while len(self._buf) < n:
            try:
                chunk = self._sock.recv(65536)
            except OSError:
                return None
            if not chunk:
                return None
            self._buf.extend(chunk)
        out = bytes(self._buf[:n])
        del self._buf[:n]
        return out

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


def tcp_pair() -> tuple[SocketEndpoint, SocketEndpoint]:
    """Loopback TCP connection; the ephemeral port avoids collisions."""
    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        listener.bind(("127.0.0.1", 0))
        listener.listen(1)
        client = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        client.connect(listener.getsockname())
        server, _ = listener.accept()
    finally:
        listener.close()
    return SocketEndpoint(server), SocketEndpoint(client)


class DelayedEndpoint:
    """Delays delivery of each outbound message by a fixed interval.

    The delay models link latency, not sender cost: sendall only enqueues,
    and a pump thread forwards each message once its delivery time is due.
    Wrapping both ends of a link applies the delay once per direction.
    """

    def __init__(self, inner, delay_s: float):
        self._inner = inner
        self._delay = delay_s
        self._queue: deque[tuple[float, bytes]] = deque()
        self._cv = threading.Condition()
        self._closing = False
        self._delivered = 0
        self._pump_thread = threading.Thread(target=self._pump, daemon=True)
        self._pump_thread.start()

    def sendall(self, data: bytes) -> None:
        deliver_at = time.monotonic() + self._delay
        with self._cv:
            if self._closing:
                raise TransportClosed("endpoint closing")
            self._queue.append((deliver_at, bytes(data)))
            self._cv.notify_all()

    def _pump(self) -> None:
        while True:
            with self._cv:
                while not self._queue and not self._closing:
                    self._cv.wait()
                if not self._queue:
                    break
                deliver_at, data = self._queue.popleft()
            # bring-up echo probes (the first few messages) are delivered by
            # polling alone, so the measured rtt reflects the nominal link
            # delay rather than sleep wakeup jitter
            lag = deliver_at - time.monotonic()
            if self._delivered >= RTT_PROBES and lag > _SPIN_S:
                time.sleep(lag - _SPIN_S)
            while time.monotonic() < deliver_at:
                pass
            try:
                self._inner.sendall(data)
            except (TransportClosed, OSError):
                break
            self._delivered += 1
        self._inner.close()

    def wait_for_data(self, timeout: float | None = None) -> bool:
        return self._inner.wait_for_data(timeout)

    def read_exact(self, n: int) -> bytes | None:
        return self._inner.read_exact(n)

    def close(self) -> None:
        with self._cv:
            self._closing = True
            self._cv.notify_all()
        self._pump_thread.join(timeout=10)


@dataclass
class DappLink:
    """Endpoints wiring one dApp instance to its simulated RAN.

    The control link carries the E3 session (and, outside direct capture,
    the indications too). The capture link exists only for direct capture
    and carries length-delimited eCPRI frames one way, RAN to dApp.
    """

    ran_control: object
    dapp_control: object
    ran_capture: object | None = None
    dapp_capture: object | None = None

    def close(self) -> None:
        for ep in (self.ran_control, self.dapp_control, self.ran_capture, self.dapp_capture):
            if ep is not None:
                ep.close()


def make_link(spec: TransportSpec) -> DappLink:
    if spec.variant is TransportVariant.INPROCESS:
        ran, dapp = channel_pair()
        return DappLink(ran, dapp)
    if spec.variant is TransportVariant.LOCAL_STREAM:
        ran, dapp = tcp_pair()
        return DappLink(ran, dapp)
    if spec.variant is TransportVariant.DELAYED_STREAM:
        ran, dapp = tcp_pair()
        delay_s = spec.delay_ms / 1e3
        return DappLink(DelayedEndpoint(ran, delay_s), DelayedEndpoint(dapp, delay_s))
    if spec.variant is TransportVariant.DIRECT_CAPTURE:
        ran_ctl, dapp_ctl = channel_pair()
        ran_cap, dapp_cap = channel_pair()
        return DappLink(ran_ctl, dapp_ctl, ran_cap, dapp_cap)
    raise ValueError(f"unknown transport variant {spec.variant!r}")


def probe_rtt(endpoint, probes: int = RTT_PROBES) -> int:
    """Client side of the bring-up echo; returns the minimum RTT in ns."""
    best = None
    for _ in range(probes):
        t0 = time.perf_counter_ns()
        endpoint.sendall(PROBE)
        echoed = endpoint.read_exact(len(PROBE))
        t1 = time.perf_counter_ns()
        if echoed != PROBE:
            raise TransportClosed("echo probe failed")
        if best is None or t1 - t0 < best:
            best = t1 - t0
    return int(best)


def probe_respond(endpoint, probes: int = RTT_PROBES) -> None:
    """Server side of the bring-up echo."""
    for _ in range(probes):
        data = endpoint.read_exact(len(PROBE))
        if data != PROBE:
            raise TransportClosed("echo probe lost")
        endpoint.sendall(data)


def read_e3_frame(endpoint) -> bytes | None:
    """Read one self-delimiting E3 frame; None when the stream closed."""
    head = endpoint.read_exact(9)
    if head is None:
        return None
    (body_len,) = struct.unpack_from("<I", head, 5)
    body = endpoint.read_exact(body_len)
    if body is None:
        return None
    return head + body
