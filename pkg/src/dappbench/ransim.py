"""Simulated DU/RU counterpart for the dApp closed loop.

Generates I/Q slots (complex Gaussian noise plus an optional interferer
tone on one channel), serves them to a dApp either as E3 indications or
as eCPRI frames, applies the control decisions it gets back, and keeps a
ground-truth log for detection scoring.

Slot generation is keyed by (seed, slot_index) through a counter-based
generator, so any slot can be regenerated independently of order and the
whole run is a pure function of seed, config, and the decision sequence.
Emitted payloads are saturated to full scale before fixed-point encoding,
the way an ADC clips, since the tone plus noise can exceed 1.0.

The slot loop is lock-step: indication k (or frame k) goes out, then the
RAN waits up to ten periods for control k before moving on. A missed
control is logged and skipped, never fatal; a control that shows up late
after that carries a stale seq and closes the session as a protocol
violation.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import e3
from .ecpri import build_frame, write_stream_frame
from .iq import IQBuffer, to_fixed_point
from .transport import TransportClosed, probe_respond, read_e3_frame
from .workloads import ControlDecision

log = logging.getLogger(__name__)

DEFAULT_AUTH_TOKEN = b"dappbench-token!"  # 16 bytes
DEFAULT_PC_ID = 1
MAX_SAMPLES_PER_INDICATION = 16380  # keeps payloads inside the eCPRI size fields

_MASK64 = (1 << 64) - 1


class InvalidChannel(ValueError):
    """A channel-change target is outside [0, num_channels)."""


@dataclass(frozen=True)
class InterfererSpec:
    channel: int
    bin: int
    amplitude: float
    phase: float = 0.0

    def __post_init__(self) -> None:
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")


@dataclass
class ChannelState:
    """Serving-channel state plus the signal model parameters."""

    rng_seed: int
    noise_sigma: float = 0.01
    num_channels: int = 4
    current_channel: int = 0
    interferer: InterfererSpec | None = None

    def __post_init__(self) -> None:
        if not self.noise_sigma > 0:
            raise ValueError("noise_sigma must be positive")
        if not 0 <= self.current_channel < self.num_channels:
            raise InvalidChannel(f"channel {self.current_channel} of {self.num_channels}")

    @property
    def interferer_on_channel(self) -> int | None:
        return self.interferer.channel if self.interferer else None


@dataclass(frozen=True)
class GroundTruthEntry:
    slot_index: int
    channel: int
    occupied: bool
    decision: ControlDecision | None


@dataclass
class GroundTruthLog:
    """Append-only per-slot record of what the RAN generated and received."""

    entries: list[GroundTruthEntry] = field(default_factory=list)

    def append(self, entry: GroundTruthEntry) -> None:
        if self.entries and entry.slot_index <= self.entries[-1].slot_index:
            raise ValueError("slot_index must be strictly increasing")
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)


def generate_slot(state: ChannelState, slot_index: int, samples: int = 1536) -> tuple[IQBuffer, bool]:
    """One slot of noise, plus the interferer tone when it shares the channel.

    Deterministic in (rng_seed, slot_index) and the current state; the
    returned flag says whether the tone is present.
    """
    key = (state.rng_seed & _MASK64) | ((slot_index & _MASK64) << 64)
    rng = np.random.Generator(np.random.Philox(key=key))
    flat = rng.normal(0.0, state.noise_sigma, 2 * samples)
    z = flat[0::2] + 1j * flat[1::2]
    occupied = state.interferer is not None and state.current_channel == state.interferer.channel
    if occupied:
        tone = state.interferer
        n = np.arange(samples)
        z = z + tone.amplitude * np.exp(1j * (2.0 * np.pi * tone.bin * n / samples + tone.phase))
    return IQBuffer(z), occupied


def apply_control(state: ChannelState, decision: ControlDecision) -> ChannelState:
    """Apply a dApp decision: a channel change retunes, a no-op is a no-op."""
    if decision.action is not None:
        target = decision.action.target_channel
        if target >= state.num_channels:
            raise InvalidChannel(f"target {target} of {state.num_channels} channels")
        state.current_channel = target
    return state


def setup_decision(request: e3.SetupRequest, expected_token: bytes) -> e3.SetupResponse:
    """The RAN's verdict on a setup request: authentication, then whether
    the subscription is servable."""
    if not e3.authenticate(request.auth_token, expected_token):
        return e3.SetupResponse(False, e3.REASON_AUTH_FAILURE)
    if request.subscription.samples_per_indication > MAX_SAMPLES_PER_INDICATION:
        return e3.SetupResponse(False, e3.REASON_UNSUPPORTED_SUBSCRIPTION)
    return e3.SetupResponse(True, e3.REASON_OK)


def _handshake(endpoint, expected_token: bytes, adapted: bool) -> tuple[e3.SessionState, e3.SubscriptionSpec] | None:
    """Serve the E3AP setup on one endpoint; None when the session is refused
    or the peer goes away."""
    probe_respond(endpoint)
    session = e3.SessionState(adapted=adapted)
    raw = read_e3_frame(endpoint)
    if raw is None:
        return None
    try:
        request = e3.decode(raw)
    except e3.E3DecodeError as exc:
        raise e3.ProtocolViolation(f"undecodable setup frame: {exc}") from exc
    session = e3.advance_session(session, "received", request)
    response = setup_decision(request, expected_token)
    endpoint.sendall(e3.encode(response))
    session = e3.advance_session(session, "sent", response)
    if not response.accepted:
        endpoint.close()
        return None
    return session, request.subscription


def _pacing_phase_s(state: ChannelState, period_s: float) -> float:
    """Deterministic per-instance phase offset inside the slot period.

    Spreads concurrent instances across the period so their slots do not
    all fire at the same boundary (synchronized bursts would measure the
    scheduler, not the deployment).
    """
    return (state.rng_seed % 997) / 997.0 * period_s


def _await_control(endpoint, session: e3.SessionState, timeout_s: float):
    """Wait for the pending control; returns (session, decision|None).

    A control whose seq is below the expected one answers an exchange
    already abandoned by timeout; it is dropped, since the dApp's control
    sequence itself is still strictly increasing.
    """
    deadline = time.monotonic() + timeout_s
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0 or not endpoint.wait_for_data(remaining):
            log.warning("control timed out after %.1f ms", timeout_s * 1e3)
            return e3.skip_missing_control(session), None
        raw = read_e3_frame(endpoint)
        if raw is None:
            raise TransportClosed("peer closed while a control was pending")
        try:
            control = e3.decode(raw)
        except e3.E3DecodeError as exc:
            raise e3.ProtocolViolation(f"undecodable control frame: {exc}") from exc
        if isinstance(control, e3.ControlMessage) and control.seq < session.next_seq:
            log.info("dropped stale control seq %d", control.seq)
            continue
        session = e3.advance_session(session, "received", control)
        return session, control.decision


def serve_e3(
    endpoint,
    state: ChannelState,
    slots: int,
    *,
    expected_token: bytes = DEFAULT_AUTH_TOKEN,
) -> GroundTruthLog:
    """Serve one traditional E3 session: indications out, controls in."""
    truth = GroundTruthLog()
    try:
        setup = _handshake(endpoint, expected_token, adapted=False)
        if setup is None:
            return truth
        session, subscription = setup
        period_s = subscription.period_ms / 1e3
        next_at = time.monotonic() + _pacing_phase_s(state, period_s)
        for slot in range(slots):
            lag = next_at - time.monotonic()
            if lag > 0:
                time.sleep(lag)
            next_at = max(next_at + period_s, time.monotonic())
            channel = state.current_channel
            buf, occupied = generate_slot(state, slot, subscription.samples_per_indication)
            payload = to_fixed_point(buf.clipped())
            indication = e3.IndicationMessage(slot, time.perf_counter_ns(), payload)
            endpoint.sendall(e3.encode(indication))
            session = e3.advance_session(session, "sent", indication)
            session, decision = _await_control(endpoint, session, 10 * period_s)
            if decision is not None:
                apply_control(state, decision)
            truth.append(GroundTruthEntry(slot, channel, occupied, decision))
    except TransportClosed:
        log.warning("dApp went away after %d slots", len(truth))
    finally:
        endpoint.close()
    return truth


def emit_ecpri(
    stream,
    control_endpoint,
    state: ChannelState,
    slots: int,
    *,
    pc_id: int = DEFAULT_PC_ID,
    expected_token: bytes = DEFAULT_AUTH_TOKEN,
) -> GroundTruthLog:
    """Serve the direct-capture variant: eCPRI frames out, controls in.

    The control session (setup and ControlMessages) is unchanged from the
    traditional interface; only the indications are replaced by frames on
    the capture stream. Frame seq ids wrap at 65536.
    """
    truth = GroundTruthLog()
    try:
        setup = _handshake(control_endpoint, expected_token, adapted=True)
        if setup is None:
            return truth
        session, subscription = setup
        period_s = subscription.period_ms / 1e3
        next_at = time.monotonic() + _pacing_phase_s(state, period_s)
        for slot in range(slots):
            lag = next_at - time.monotonic()
            if lag > 0:
                time.sleep(lag)
            next_at = max(next_at + period_s, time.monotonic())
            channel = state.current_channel
            buf, occupied = generate_slot(state, slot, subscription.samples_per_indication)
            payload = to_fixed_point(buf.clipped())
            write_stream_frame(stream, build_frame(pc_id, slot, payload))
            session, decision = _await_control(control_endpoint, session, 10 * period_s)
            if decision is not None:
                apply_control(state, decision)
            truth.append(GroundTruthEntry(slot, channel, occupied, decision))
    except TransportClosed:
        log.warning("dApp went away after %d slots", len(truth))
    finally:
        stream.close()
        control_endpoint.close()
    return truth
