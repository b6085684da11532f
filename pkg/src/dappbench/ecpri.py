"""eCPRI-style fronthaul frames and the direct-capture I/Q source.

A frame is an 8-byte header followed by the fixed-point I/Q payload:

    byte 0: version (high nibble, must be 1) and concatenation bit (bit 0)
    byte 1: message type (0 carries I/Q data; anything else is passed over)
    bytes 2-3: payload size, uint16 BE
    bytes 4-5: pc_id (flow id), uint16 BE
    bytes 6-7: seq_id, uint16 BE

On a byte stream, frames travel length-delimited: a uint16 BE length
prefix then the frame. ``capture_source`` replays such a stream as I/Q
buffers for one flow, the way an inline device taps traffic: frames it
does not understand (foreign flows, non-I/Q types, malformed bytes) are
counted and skipped, never fatal.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from time import perf_counter_ns
from typing import Iterator

from .iq import FixedPointIQ, IQBuffer, from_fixed_point

ECPRI_VERSION = 1
HEADER_LEN = 8
MAX_PAYLOAD = 65535
SEQ_MODULUS = 65536
MSG_TYPE_IQ = 0

_HEADER = struct.Struct(">BBHHH")


class EcpriError(ValueError):
    """Base for frame parse failures."""


class TruncatedFrame(EcpriError):
    pass


class UnsupportedVersion(EcpriError):
    pass


class PayloadSizeMismatch(EcpriError):
    pass


class NonIQType(EcpriError):
    """Frame is valid but carries a message type this tap does not process."""


class PayloadTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class EcpriFrame:
    version: int
    concat: int
    message_type: int
    payload_size: int
    pc_id: int
    seq_id: int
    payload: bytes

    def extract_iq(self) -> FixedPointIQ:
        if not self.payload or len(self.payload) % 4:
            raise PayloadSizeMismatch(f"payload of {len(self.payload)} bytes is not whole I/Q pairs")
        return FixedPointIQ(self.payload)


@dataclass
class CaptureStats:
    """Tap counters; frames_seen always equals frames_parsed + frames_skipped."""

    frames_seen: int = 0
    frames_parsed: int = 0
    frames_skipped: int = 0
    seq_gaps: int = 0


def build_frame(pc_id: int, seq_id: int, iq: FixedPointIQ | bytes) -> bytes:
    """Serialize one I/Q data frame; inverse of parse_frame."""
    payload = iq.data if isinstance(iq, FixedPointIQ) else bytes(iq)
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"{len(payload)} bytes exceeds the 65535-byte payload field")
    head = _HEADER.pack(ECPRI_VERSION << 4, MSG_TYPE_IQ, len(payload), pc_id, seq_id % SEQ_MODULUS)
    return head + payload


def parse_frame(data: bytes) -> EcpriFrame:
    """Parse one frame; total over arbitrary bytes."""
    if len(data) < HEADER_LEN:
        raise TruncatedFrame(f"header needs {HEADER_LEN} bytes, got {len(data)}")
    first, message_type, payload_size, pc_id, seq_id = _HEADER.unpack_from(data)
    version = first >> 4
    concat = first & 1
    if version != ECPRI_VERSION:
        raise UnsupportedVersion(f"version nibble {version}")
    payload = data[HEADER_LEN:]
    if message_type != MSG_TYPE_IQ:
        raise NonIQType(f"message type {message_type}")
    if payload_size != len(payload):
        raise PayloadSizeMismatch(f"declared {payload_size} bytes, frame carries {len(payload)}")
    if payload_size % 4:
        raise PayloadSizeMismatch(f"payload of {payload_size} bytes is not whole I/Q pairs")
    return EcpriFrame(version, concat, message_type, payload_size, pc_id, seq_id, payload)


def write_stream_frame(endpoint, frame: bytes) -> None:
    """Send one length-delimited frame over a byte-stream endpoint."""
    if len(frame) > 0xFFFF:
        raise PayloadTooLarge("frame exceeds the uint16 stream length prefix")
    endpoint.sendall(struct.pack(">H", len(frame)) + frame)


def capture_source(
    stream, flow: int, stats: CaptureStats | None = None
) -> Iterator[tuple[IQBuffer, int, int]]:
    """Yield (buffer, seq_id, arrival_timestamp_ns) for one flow of a
    length-delimited frame stream.

    The arrival timestamp is taken when the frame's first bytes become
    readable, so the consumer can separate waiting from parse work. Ends
    normally when the stream closes.
    """
    if stats is None:
        stats = CaptureStats()
    last_seq: int | None = None
    while True:
        if not stream.wait_for_data():
            return
        arrival_ns = perf_counter_ns()
        head = stream.read_exact(2)
        if head is None:
            return
        (frame_len,) = struct.unpack(">H", head)
        data = stream.read_exact(frame_len)
        if data is None:
            return
        stats.frames_seen += 1
        try:
            frame = parse_frame(data)
        except EcpriError:
            stats.frames_skipped += 1
            continue
        if frame.pc_id != flow:
            stats.frames_skipped += 1
            continue
        if last_seq is not None and frame.seq_id != (last_seq + 1) % SEQ_MODULUS:
            stats.seq_gaps += 1
        last_seq = frame.seq_id
        try:
            buf = from_fixed_point(frame.extract_iq())
        except (EcpriError, ValueError):
            stats.frames_skipped += 1
            continue
        stats.frames_parsed += 1
        yield buf, frame.seq_id, arrival_ns
