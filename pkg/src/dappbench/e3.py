"""E3 interface: binary codec and session state machine.

Frame layout: magic "E3v1", one type-tag byte (1=SetupRequest,
2=SetupResponse, 3=Indication, 4=Control), a uint32 LE body length, then
the body. Multi-byte integers are little-endian throughout.

Bodies:

- SetupRequest: dapp_id u32, auth token 16 bytes, subscription
  (kind u8, samples u32, period f64)
- SetupResponse: accepted u8, reason_code u8
- Indication: seq u32, origin timestamp u64, payload byte count u32,
  interleaved int16 I/Q payload
- Control: seq u32, verdict u8, action u8, target channel u8, score f64

The decoder is total: any byte string either decodes to the unique message
that encodes to it, or raises one of the declared decode errors. The
session machine accepts exactly one setup exchange followed by strictly
alternating Indication/Control pairs with sequence numbers that increase
by one; anything else is a protocol violation and closes the session.
A session serving the direct-capture variant carries Control messages
only (indications are replaced by frame capture), which the machine
models as ``adapted=True``.
"""

from __future__ import annotations

import hmac
import math
import struct
from dataclasses import dataclass, replace
from enum import Enum

from .iq import FixedPointIQ
from .workloads import ChannelChange, ControlDecision, DappKind, Verdict

MAGIC = b"E3v1"
HEADER_LEN = 9  # magic + tag + body length
AUTH_TOKEN_LEN = 16

TAG_SETUP_REQUEST = 1
TAG_SETUP_RESPONSE = 2
TAG_INDICATION = 3
TAG_CONTROL = 4

REASON_OK = 0
REASON_AUTH_FAILURE = 1
REASON_UNSUPPORTED_SUBSCRIPTION = 2

_SETUP_REQ = struct.Struct("<I16sBId")
_SETUP_RESP = struct.Struct("<BB")
_INDICATION_HEAD = struct.Struct("<IQI")
_CONTROL = struct.Struct("<IBBBd")


class E3DecodeError(ValueError):
    """Base for all declared decode failures."""


class BadMagic(E3DecodeError):
    pass


class UnknownType(E3DecodeError):
    pass


class Truncated(E3DecodeError):
    pass


class TrailingBytes(E3DecodeError):
    pass


class PayloadLengthMismatch(E3DecodeError):
    pass


class InvalidField(E3DecodeError):
    """A structurally sound frame carries a field value no valid message has."""


class ProtocolViolation(RuntimeError):
    """The peer sent a message that is illegal in the current session phase."""


@dataclass(frozen=True)
class SubscriptionSpec:
    dapp_kind: DappKind
    samples_per_indication: int = 1536
    period_ms: float = 10.0

    def __post_init__(self) -> None:
        if self.samples_per_indication < 1:
            raise ValueError("samples_per_indication must be at least 1")
        if not (self.period_ms > 0 and math.isfinite(self.period_ms)):
            raise ValueError("period_ms must be positive and finite")


@dataclass(frozen=True)
class SetupRequest:
    dapp_id: int
    auth_token: bytes
    subscription: SubscriptionSpec

    def __post_init__(self) -> None:
        if len(self.auth_token) != AUTH_TOKEN_LEN:
            raise ValueError("auth token must be 16 bytes")


@dataclass(frozen=True)
class SetupResponse:
    accepted: bool
    reason_code: int = REASON_OK


@dataclass(frozen=True)
class IndicationMessage:
    seq: int
    origin_timestamp_ns: int
    payload: FixedPointIQ


@dataclass(frozen=True)
class ControlMessage:
    seq: int
    decision: ControlDecision


E3Message = SetupRequest | SetupResponse | IndicationMessage | ControlMessage


def encode(msg: E3Message) -> bytes:
    """Encode a message into one self-delimiting frame."""
    if isinstance(msg, SetupRequest):
        tag = TAG_SETUP_REQUEST
        sub = msg.subscription
        body = _SETUP_REQ.pack(
            msg.dapp_id, msg.auth_token, int(sub.dapp_kind), sub.samples_per_indication, sub.period_ms
        )
    elif isinstance(msg, SetupResponse):
        tag = TAG_SETUP_RESPONSE
        body = _SETUP_RESP.pack(int(msg.accepted), msg.reason_code)
    elif isinstance(msg, IndicationMessage):
        tag = TAG_INDICATION
        body = _INDICATION_HEAD.pack(msg.seq, msg.origin_timestamp_ns, len(msg.payload.data))
        body += msg.payload.data
    elif isinstance(msg, ControlMessage):
        tag = TAG_CONTROL
        d = msg.decision
        target = d.action.target_channel if d.action is not None else 0
        body = _CONTROL.pack(msg.seq, int(d.verdict), 0 if d.action is None else 1, target, d.score)
    else:
        raise TypeError(f"not an E3 message: {type(msg).__name__}")
    return MAGIC + bytes([tag]) + struct.pack("<I", len(body)) + body


def decode(data: bytes) -> E3Message:
    """Decode exactly one frame; total over arbitrary input."""
    if len(data) < HEADER_LEN:
        raise Truncated(f"frame header needs {HEADER_LEN} bytes, got {len(data)}")
    if data[:4] != MAGIC:
        raise BadMagic(f"bad magic {data[:4]!r}")
    tag = data[4]
    (body_len,) = struct.unpack_from("<I", data, 5)
    body = data[HEADER_LEN:]
    if len(body) < body_len:
        raise Truncated(f"declared body {body_len} bytes, got {len(body)}")
    if len(body) > body_len:
        raise TrailingBytes(f"{len(body) - body_len} bytes after declared body")
    if tag == TAG_SETUP_REQUEST:
        return _decode_setup_request(body)
    if tag == TAG_SETUP_RESPONSE:
        return _decode_setup_response(body)
    if tag == TAG_INDICATION:
        return _decode_indication(body)
    if tag == TAG_CONTROL:
        return _decode_control(body)
    raise UnknownType(f"type tag {tag}")


def _body_struct(body: bytes, st: struct.Struct, what: str):
    if len(body) < st.size:
        raise Truncated(f"{what} body needs {st.size} bytes, got {len(body)}")
    if len(body) > st.size:
        raise TrailingBytes(f"{what} body has {len(body) - st.size} extra bytes")
    return st.unpack(body)


def _decode_setup_request(body: bytes) -> SetupRequest:
    dapp_id, token, kind, samples, period = _body_struct(body, _SETUP_REQ, "SetupRequest")
    try:
        kind_enum = DappKind(kind)
    except ValueError:
        raise InvalidField(f"dapp kind {kind}") from None
    if samples < 1:
        raise InvalidField("samples_per_indication must be at least 1")
    if not (period > 0 and math.isfinite(period)):
        raise InvalidField("period_ms must be positive and finite")
    return SetupRequest(dapp_id, token, SubscriptionSpec(kind_enum, samples, period))


def _decode_setup_response(body: bytes) -> SetupResponse:
    accepted, reason = _body_struct(body, _SETUP_RESP, "SetupResponse")
    if accepted > 1:
        raise InvalidField(f"accepted byte {accepted}")
    return SetupResponse(bool(accepted), reason)


def _decode_indication(body: bytes) -> IndicationMessage:
    if len(body) < _INDICATION_HEAD.size:
        raise Truncated(f"Indication body needs {_INDICATION_HEAD.size} bytes, got {len(body)}")
    seq, ts, payload_len = _INDICATION_HEAD.unpack_from(body)
    payload = body[_INDICATION_HEAD.size :]
    if payload_len > len(payload):
        raise Truncated(f"declared payload {payload_len} bytes, got {len(payload)}")
    if payload_len < len(payload):
        raise TrailingBytes(f"{len(payload) - payload_len} bytes after payload")
    if payload_len % 4:
        raise PayloadLengthMismatch(f"payload of {payload_len} bytes is not whole I/Q pairs")
    if payload_len == 0:
        raise InvalidField("empty I/Q payload")
    return IndicationMessage(seq, ts, FixedPointIQ(payload))


def _decode_control(body: bytes) -> ControlMessage:
    seq, verdict, action, target, score = _body_struct(body, _CONTROL, "Control")
    if verdict > 1:
        raise InvalidField(f"verdict byte {verdict}")
    if action > 1:
        raise InvalidField(f"action byte {action}")
    if action != verdict:
        raise InvalidField("verdict and action disagree")
    if action == 0 and target != 0:
        raise InvalidField("no-op with nonzero target channel")
    if not math.isfinite(score):
        raise InvalidField("score must be finite")
    decision = ControlDecision(
        Verdict(verdict), ChannelChange(target) if action else None, score
    )
    return ControlMessage(seq, decision)


def authenticate(token: bytes, expected: bytes) -> bool:
    """Constant-time token comparison."""
    return hmac.compare_digest(token, expected)


class Phase(Enum):
    IDLE = "idle"
    SETUP_SENT = "setup_sent"
    ESTABLISHED = "established"
    CLOSED = "closed"


@dataclass(frozen=True)
class SessionState:
    """One endpoint's view of a session; advance with every message that
    crosses the wire in either direction."""

    phase: Phase = Phase.IDLE
    negotiated: SubscriptionSpec | None = None
    pending: SubscriptionSpec | None = None
    next_seq: int = 0
    awaiting_control: bool = False
    adapted: bool = False  # direct-capture sessions carry controls only


def advance_session(state: SessionState, direction: str, msg: E3Message) -> SessionState:
    """Apply one sent/received message; raises ProtocolViolation (and the
    session is then closed) for anything outside the legal exchange."""
    if direction not in ("sent", "received"):
        raise ValueError("direction must be 'sent' or 'received'")

    def violation(reason: str) -> ProtocolViolation:
        exc = ProtocolViolation(f"{reason} (phase {state.phase.value}, {direction} {type(msg).__name__})")
        exc.closed_state = close_session(state)  # the session is dead either way
        return exc

    if state.phase is Phase.IDLE:
        if isinstance(msg, SetupRequest):
            return replace(state, phase=Phase.SETUP_SENT, pending=msg.subscription)
        raise violation("setup has not started")

    if state.phase is Phase.SETUP_SENT:
        if isinstance(msg, SetupResponse):
            if msg.accepted:
                return replace(state, phase=Phase.ESTABLISHED, negotiated=state.pending, pending=None)
            return replace(state, phase=Phase.CLOSED, pending=None)
        raise violation("awaiting setup response")

    if state.phase is Phase.ESTABLISHED:
        if isinstance(msg, IndicationMessage):
            if state.adapted:
                raise violation("indications are replaced by direct capture")
            if state.awaiting_control:
                raise violation("indication before the previous control")
            if msg.seq != state.next_seq:
                raise violation(f"indication seq {msg.seq}, expected {state.next_seq}")
            return replace(state, awaiting_control=True)
        if isinstance(msg, ControlMessage):
            if not state.adapted and not state.awaiting_control:
                raise violation("control without a pending indication")
            if msg.seq != state.next_seq:
                raise violation(f"control seq {msg.seq}, expected {state.next_seq}")
            return replace(state, awaiting_control=False, next_seq=state.next_seq + 1)
        raise violation("only indications and controls are legal when established")

    raise violation("session is closed")


def skip_missing_control(state: SessionState) -> SessionState:
    """Give up on the current exchange's control after a timeout.

    The session stays open and expects the next exchange; if the missing
    control arrives late its stale seq is a protocol violation.
    """
    return replace(state, awaiting_control=False, next_seq=state.next_seq + 1)


def close_session(state: SessionState) -> SessionState:
    return replace(state, phase=Phase.CLOSED)
