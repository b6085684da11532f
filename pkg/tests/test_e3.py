import random

import numpy as np
import pytest

from dappbench import e3
from dappbench.iq import FixedPointIQ
from dappbench.workloads import ChannelChange, ControlDecision, DappKind, Verdict


def make_decision(rng):
    if rng.random() < 0.5:
        return ControlDecision(Verdict.UNOCCUPIED, None, rng.uniform(-5, 5))
    return ControlDecision(Verdict.OCCUPIED, ChannelChange(rng.randrange(256)), rng.uniform(-5, 5))


def make_message(rng):
    pick = rng.randrange(4)
    if pick == 0:
        sub = e3.SubscriptionSpec(
            DappKind(rng.randrange(4)),
            rng.randrange(1, 4096),
            rng.uniform(0.1, 100.0),
        )
        return e3.SetupRequest(rng.getrandbits(32), rng.randbytes(16), sub)
    if pick == 1:
        return e3.SetupResponse(bool(rng.getrandbits(1)), rng.randrange(3))
    if pick == 2:
        n = rng.randrange(1, 64)
        payload = FixedPointIQ(rng.randbytes(4 * n))
        return e3.IndicationMessage(rng.getrandbits(32), rng.getrandbits(64), payload)
    return e3.ControlMessage(rng.getrandbits(32), make_decision(rng))


class TestCodec:
    def test_setup_response_exact_bytes(self):
        frame = e3.encode(e3.SetupResponse(True, 0))
        assert frame == b"E3v1\x02\x02\x00\x00\x00\x01\x00"
        assert len(frame) == 10 + 1  # magic(4) + tag(1) + len(4) + body(2)

    def test_round_trip_all_variants(self):
        rng = random.Random(42)
        for _ in range(500):
            msg = make_message(rng)
            assert e3.decode(e3.encode(msg)) == msg

    def test_indication_body_length_for_default_slot(self):
        payload = FixedPointIQ(b"\x00" * (4 * 1536))
        frame = e3.encode(e3.IndicationMessage(0, 0, payload))
        body_len = int.from_bytes(frame[5:9], "little")
        assert body_len == 4 + 8 + 4 + 4 * 1536 == 6160

    def test_empty_input_truncated(self):
        with pytest.raises(e3.Truncated):
            e3.decode(b"")

    def test_unknown_type(self):
        frame = bytearray(e3.encode(e3.SetupResponse(True, 0)))
        frame[4] = 9
        with pytest.raises(e3.UnknownType):
            e3.decode(bytes(frame))

    def test_bad_magic(self):
        with pytest.raises(e3.BadMagic):
            e3.decode(b"NOPE" + b"\x00" * 10)

    def test_trailing_bytes(self):
        frame = e3.encode(e3.SetupResponse(True, 0)) + b"x"
        with pytest.raises(e3.TrailingBytes):
            e3.decode(frame)

    def test_truncated_body(self):
        frame = e3.encode(e3.SetupResponse(True, 0))[:-1]
        with pytest.raises(e3.Truncated):
            e3.decode(frame)

    def test_payload_not_whole_pairs(self):
        good = e3.encode(e3.IndicationMessage(0, 0, FixedPointIQ(b"\x00" * 8)))
        # shrink payload by one byte and patch both length fields
        bad = bytearray(good[:-1])
        bad[5:9] = (len(bad) - 9).to_bytes(4, "little")
        bad[21:25] = (7).to_bytes(4, "little")
        with pytest.raises(e3.PayloadLengthMismatch):
            e3.decode(bytes(bad))

    def test_invalid_fields(self):
        ctl = bytearray(e3.encode(e3.ControlMessage(0, ControlDecision(Verdict.UNOCCUPIED, None, 0.0))))
        ctl[13] = 7  # verdict byte
        with pytest.raises(e3.InvalidField):
            e3.decode(bytes(ctl))
        req = bytearray(e3.encode(e3.SetupRequest(1, b"t" * 16, e3.SubscriptionSpec(DappKind.EBS))))
        req[29] = 9  # dapp kind byte
        with pytest.raises(e3.InvalidField):
            e3.decode(bytes(req))

    def test_fuzz_never_crashes(self):
        rng = random.Random(7)
        for _ in range(2000):
            blob = rng.randbytes(rng.randrange(0, 200))
            try:
                e3.decode(blob)
            except e3.E3DecodeError:
                pass
        # mutated valid frames
        for _ in range(2000):
            frame = bytearray(e3.encode(make_message(rng)))
            for _ in range(rng.randrange(1, 4)):
                frame[rng.randrange(len(frame))] = rng.randrange(256)
            try:
                e3.decode(bytes(frame))
            except e3.E3DecodeError:
                pass


def handshake(adapted=False):
    state = e3.SessionState(adapted=adapted)
    request = e3.SetupRequest(1, b"k" * 16, e3.SubscriptionSpec(DappKind.EBS))
    state = e3.advance_session(state, "sent", request)
    state = e3.advance_session(state, "received", e3.SetupResponse(True, 0))
    return state


def indication(seq):
    return e3.IndicationMessage(seq, 0, FixedPointIQ(b"\x00" * 8))


def control(seq):
    return e3.ControlMessage(seq, ControlDecision(Verdict.UNOCCUPIED, None, 0.0))


class TestSession:
    def test_indication_before_setup_is_violation(self):
        state = e3.SessionState()
        with pytest.raises(e3.ProtocolViolation) as err:
            e3.advance_session(state, "received", indication(0))
        assert err.value.closed_state.phase is e3.Phase.CLOSED

    def test_full_handshake_and_three_exchanges(self):
        state = handshake()
        assert state.phase is e3.Phase.ESTABLISHED
        assert state.negotiated is not None
        for seq in range(3):
            state = e3.advance_session(state, "received", indication(seq))
            state = e3.advance_session(state, "sent", control(seq))
        assert state.phase is e3.Phase.ESTABLISHED
        assert state.next_seq == 3

    def test_rejected_setup_closes(self):
        state = e3.SessionState()
        state = e3.advance_session(state, "sent", e3.SetupRequest(1, b"k" * 16, e3.SubscriptionSpec(DappKind.FFT)))
        state = e3.advance_session(state, "received", e3.SetupResponse(False, 1))
        assert state.phase is e3.Phase.CLOSED

    def test_seq_jump_is_violation(self):
        state = handshake()
        state = e3.advance_session(state, "received", indication(0))
        state = e3.advance_session(state, "sent", control(0))
        with pytest.raises(e3.ProtocolViolation):
            e3.advance_session(state, "received", indication(2))

    def test_control_without_indication_is_violation(self):
        state = handshake()
        with pytest.raises(e3.ProtocolViolation):
            e3.advance_session(state, "sent", control(0))

    def test_adapted_session_carries_controls_only(self):
        state = handshake(adapted=True)
        for seq in range(3):
            state = e3.advance_session(state, "sent", control(seq))
        with pytest.raises(e3.ProtocolViolation):
            e3.advance_session(state, "received", indication(3))

    def test_skip_missing_control_resyncs(self):
        state = handshake()
        state = e3.advance_session(state, "received", indication(0))
        state = e3.skip_missing_control(state)
        state = e3.advance_session(state, "received", indication(1))
        state = e3.advance_session(state, "sent", control(1))
        assert state.next_seq == 2

    def test_random_traces_accept_exactly_the_protocol_language(self):
        # legal traces: setup-req, setup-resp(ok), then (indication control)*
        rng = random.Random(99)
        for _ in range(200):
            state = e3.SessionState()
            legal = [("sent", e3.SetupRequest(1, b"k" * 16, e3.SubscriptionSpec(DappKind.EBS))),
                     ("received", e3.SetupResponse(True, 0))]
            for seq in range(rng.randrange(4)):
                legal += [("received", indication(seq)), ("sent", control(seq))]
            for direction, msg in legal:
                state = e3.advance_session(state, direction, msg)
            assert state.phase is e3.Phase.ESTABLISHED
            # one illegal continuation must violate
            bad = rng.choice([
                ("received", e3.SetupResponse(True, 0)),
                ("sent", e3.SetupRequest(1, b"k" * 16, e3.SubscriptionSpec(DappKind.EBS))),
                ("received", indication(state.next_seq + 1)),
                ("sent", control(state.next_seq)),
            ])
            with pytest.raises(e3.ProtocolViolation):
                e3.advance_session(state, *bad)


class TestAuthenticate:
    def test_equal_tokens_accept(self):
        token = bytes(range(16))
        assert e3.authenticate(token, token)

    def test_single_differing_byte_rejects(self):
        token = bytes(range(16))
        other = bytes([token[0] ^ 1]) + token[1:]
        assert not e3.authenticate(other, token)

    def test_randomized_mismatches_always_reject(self):
        rng = np.random.default_rng(5)
        expected = rng.bytes(16)
        for _ in range(200):
            candidate = rng.bytes(16)
            if candidate != expected:
                assert not e3.authenticate(candidate, expected)
