"""The dApp closed loop, instrumented, plus the multi-instance runner.

Each processed slot is timed in four phases on a monotonic clock:

    P1 collection: from data available to a float I/Q buffer in hand
       (E3 frame read + decode, or eCPRI frame parse under direct capture)
    P2 processing: preprocessing + the workload's decision
    P3 create control: wrapping the decision into an encoded E3 control
    P4 deliver control: the write into the control sink

Total latency is the phase sum plus the transport round-trip measured by
echo at session bring-up; a record is violated when the total exceeds the
instance deadline. Waiting between slots is never counted.

Fleets run one OS process per instance (workers share nothing mutable),
with optional best-effort core pinning, results funneled back over a
queue, and CPU utilization sampled from the parent at a fixed interval.
"""

from __future__ import annotations

import multiprocessing as mp
import os
import threading
import time
from dataclasses import dataclass, field, replace

import psutil

from . import e3
from .ecpri import CaptureStats, capture_source
from .iq import from_fixed_point
from .ransim import (
    DEFAULT_AUTH_TOKEN,
    DEFAULT_PC_ID,
    ChannelState,
    GroundTruthEntry,
    InterfererSpec,
    serve_e3,
)
from .transport import TransportClosed, TransportSpec, TransportVariant, make_link, probe_rtt, read_e3_frame
from .workloads import ChannelHint, DappKind, WorkloadParams, get_model, make_decider

DEFAULT_DEADLINE_NS = 10_000_000
DEFAULT_SLOTS = 300

_now = time.perf_counter_ns


@dataclass(frozen=True)
class PhaseLatencyRecord:
    """One loop iteration's timing; total_ns is always the exact phase sum."""

    instance_id: str
    seq: int
    p1_ns: int
    p2_ns: int
    p3_ns: int
    p4_ns: int
    rtt_ns: int
    total_ns: int
    deadline_ns: int
    violated: bool

    @classmethod
    def from_phases(
        cls, *, instance_id: str, seq: int, p1_ns: int, p2_ns: int, p3_ns: int, p4_ns: int,
        rtt_ns: int, deadline_ns: int,
    ) -> "PhaseLatencyRecord":
        total = p1_ns + p2_ns + p3_ns + p4_ns + rtt_ns
        return cls(
            instance_id, seq, p1_ns, p2_ns, p3_ns, p4_ns, rtt_ns,
            total_ns=total, deadline_ns=deadline_ns, violated=total > deadline_ns,
        )


@dataclass(frozen=True)
class InstanceSpec:
    """One dApp instance's wiring: workload, transport, cores, deadline."""

    instance_id: str
    kind: DappKind
    transport: TransportSpec
    pinned_cores: tuple[int, ...] | None = None
    deadline_ns: int = DEFAULT_DEADLINE_NS
    slots: int = DEFAULT_SLOTS
    period_ms: float = 10.0
    samples: int = 1536

    def __post_init__(self) -> None:
        if self.slots < 1:
            raise ValueError("slots must be at least 1")


@dataclass(frozen=True)
class SimSettings:
    """Signal model shared by an arm's simulators (seeds differ per instance)."""

    noise_sigma: float = 0.01
    num_channels: int = 4
    initial_channel: int = 0
    interferer: InterfererSpec | None = None


@dataclass(frozen=True)
class WorkerTask:
    spec: InstanceSpec
    sim: SimSettings
    seed: int
    workload: WorkloadParams


@dataclass(frozen=True)
class Dapp:
    kind: DappKind
    decide: object  # (IQBuffer, ChannelHint) -> ControlDecision


def make_dapp(kind: DappKind, params: WorkloadParams) -> Dapp:
    return Dapp(kind, make_decider(kind, params))


@dataclass
class LoopResult:
    records: list[PhaseLatencyRecord] = field(default_factory=list)
    skipped_slots: int = 0
    rtt_ns: int = 0
    notes: list[str] = field(default_factory=list)


@dataclass
class InstanceResult:
    instance_id: str
    records: list[PhaseLatencyRecord]
    truth: list[GroundTruthEntry]
    skipped_slots: int
    rtt_ns: int
    capture: CaptureStats | None
    pinned_cores: tuple[int, ...] | None
    notes: list[str]


def _setup_session(endpoint, dapp: Dapp, spec: InstanceSpec, *, dapp_id: int, auth_token: bytes,
                   adapted: bool) -> tuple[e3.SessionState, int] | str:
    """Echo probe plus E3AP handshake; returns (session, rtt_ns) or a refusal note."""
    rtt_ns = probe_rtt(endpoint)
    session = e3.SessionState(adapted=adapted)
    request = e3.SetupRequest(
        dapp_id, auth_token, e3.SubscriptionSpec(dapp.kind, spec.samples, spec.period_ms)
    )
    endpoint.sendall(e3.encode(request))
    session = e3.advance_session(session, "sent", request)
    raw = read_e3_frame(endpoint)
    if raw is None:
        return "stream closed during setup"
    response = e3.decode(raw)
    session = e3.advance_session(session, "received", response)
    if session.phase is not e3.Phase.ESTABLISHED:
        return f"setup rejected with reason {response.reason_code}"
    return session, rtt_ns


def run_closed_loop(
    source,
    dapp: Dapp,
    control_sink,
    spec: InstanceSpec,
    *,
    initial_hint: ChannelHint = ChannelHint(),
    dapp_id: int = 1,
    auth_token: bytes = DEFAULT_AUTH_TOKEN,
    pc_id: int = DEFAULT_PC_ID,
    capture_stats: CaptureStats | None = None,
) -> LoopResult:
    """Drive the closed loop until the RAN side closes the stream.

    Under direct capture ``source`` is the frame stream and the session on
    ``control_sink`` carries controls only; otherwise both name the one
    session endpoint. Undecodable indications are counted and skipped; a
    protocol violation ends the loop with a note.
    """
    result = LoopResult()
    direct = spec.transport.variant is TransportVariant.DIRECT_CAPTURE
    setup = _setup_session(
        control_sink, dapp, spec, dapp_id=dapp_id, auth_token=auth_token, adapted=direct
    )
    if isinstance(setup, str):
        result.notes.append(setup)
        return result
    session, result.rtt_ns = setup
    hint = initial_hint
    try:
        if direct:
            session = _capture_loop(source, control_sink, dapp, spec, session, hint, result,
                                    pc_id=pc_id, stats=capture_stats)
        else:
            session = _session_loop(source, dapp, spec, session, hint, result)
    except e3.ProtocolViolation as exc:
        result.notes.append(f"protocol violation: {exc}")
    except TransportClosed:
        pass
    return result


def _session_loop(endpoint, dapp, spec, session, hint, result):
    while True:
        if not endpoint.wait_for_data():
            return session
        t0 = _now()
        raw = read_e3_frame(endpoint)
        if raw is None:
            return session
        try:
            msg = e3.decode(raw)
        except e3.E3DecodeError:
            result.skipped_slots += 1
            continue
        session = e3.advance_session(session, "received", msg)
        buf = from_fixed_point(msg.payload)
        t1 = _now()
        decision = dapp.decide(buf, hint)
        t2 = _now()
        control = e3.ControlMessage(msg.seq, decision)
        wire = e3.encode(control)
        session = e3.advance_session(session, "sent", control)
        t3 = _now()
        endpoint.sendall(wire)
        t4 = _now()
        result.records.append(PhaseLatencyRecord.from_phases(
            instance_id=spec.instance_id, seq=msg.seq,
            p1_ns=t1 - t0, p2_ns=t2 - t1, p3_ns=t3 - t2, p4_ns=t4 - t3,
            rtt_ns=result.rtt_ns, deadline_ns=spec.deadline_ns,
        ))
        if decision.action is not None:
            hint = replace(hint, current_channel=decision.action.target_channel)


def _capture_loop(stream, control, dapp, spec, session, hint, result, *, pc_id, stats):
    slot = 0
    for buf, _seq_id, arrival_ns in capture_source(stream, pc_id, stats):
        t1 = _now()
        decision = dapp.decide(buf, hint)
        t2 = _now()
        message = e3.ControlMessage(slot, decision)
        wire = e3.encode(message)
        session = e3.advance_session(session, "sent", message)
        t3 = _now()
        control.sendall(wire)
        t4 = _now()
        result.records.append(PhaseLatencyRecord.from_phases(
            instance_id=spec.instance_id, seq=slot,
            p1_ns=t1 - arrival_ns, p2_ns=t2 - t1, p3_ns=t3 - t2, p4_ns=t4 - t3,
            rtt_ns=result.rtt_ns, deadline_ns=spec.deadline_ns,
        ))
        if decision.action is not None:
            hint = replace(hint, current_channel=decision.action.target_channel)
        slot += 1
    return session


def run_capture_instance(task: WorkerTask) -> InstanceResult:
    """Direct-capture instance as a single inline pipeline.

    On-NIC deployment processes frames where they arrive: no IPC hop
    separates the frame source from the dApp, so one thread plays both
    sides in lock step (frame out, capture + decide, control back). All
    endpoints are in-process buffered channels, which lets the bring-up
    echo and handshake run sequenced in the same thread.
    """
    import time as _time

    from .iq import to_fixed_point
    from .ransim import (
        GroundTruthEntry as _Entry,
        GroundTruthLog,
        _await_control,
        _pacing_phase_s,
        apply_control,
        generate_slot,
        setup_decision,
    )
    from .ecpri import build_frame, write_stream_frame
    from .transport import PROBE, RTT_PROBES, channel_pair

    spec = task.spec
    ctl_ran, ctl_dapp = channel_pair()
    cap_ran, cap_dapp = channel_pair()
    state = ChannelState(
        rng_seed=task.seed,
        noise_sigma=task.sim.noise_sigma,
        num_channels=task.sim.num_channels,
        current_channel=task.sim.initial_channel,
        interferer=task.sim.interferer,
    )
    dapp = make_dapp(spec.kind, task.workload)
    stats = CaptureStats()
    result = LoopResult()
    truth = GroundTruthLog()
    notes: list[str] = []

    # sequenced bring-up: echo probes, then the unchanged E3AP handshake
    rtts = []
    for _ in range(RTT_PROBES):
        t0 = _now()
        ctl_dapp.sendall(PROBE)
        ctl_ran.sendall(ctl_ran.read_exact(len(PROBE)))
        ctl_dapp.read_exact(len(PROBE))
        rtts.append(_now() - t0)
    result.rtt_ns = min(rtts)
    dapp_session = e3.SessionState(adapted=True)
    ran_session = e3.SessionState(adapted=True)
    request = e3.SetupRequest(
        1, DEFAULT_AUTH_TOKEN, e3.SubscriptionSpec(spec.kind, spec.samples, spec.period_ms)
    )
    ctl_dapp.sendall(e3.encode(request))
    dapp_session = e3.advance_session(dapp_session, "sent", request)
    ran_session = e3.advance_session(ran_session, "received", e3.decode(read_e3_frame(ctl_ran)))
    response = setup_decision(request, DEFAULT_AUTH_TOKEN)
    ctl_ran.sendall(e3.encode(response))
    ran_session = e3.advance_session(ran_session, "sent", response)
    dapp_session = e3.advance_session(dapp_session, "received", e3.decode(read_e3_frame(ctl_dapp)))

    hint = ChannelHint(task.sim.initial_channel, task.sim.num_channels)
    frames = capture_source(cap_dapp, DEFAULT_PC_ID, stats)
    period_s = spec.period_ms / 1e3
    next_at = _time.monotonic() + _pacing_phase_s(state, period_s)
    try:
        for slot in range(spec.slots):
            lag = next_at - _time.monotonic()
            if lag > 0:
                _time.sleep(lag)
            next_at = max(next_at + period_s, _time.monotonic())
            channel = state.current_channel
            buf, occupied = generate_slot(state, slot, spec.samples)
            write_stream_frame(cap_ran, build_frame(DEFAULT_PC_ID, slot, to_fixed_point(buf.clipped())))
            captured, _seq_id, arrival_ns = next(frames)
            t1 = _now()
            decision = dapp.decide(captured, hint)
            t2 = _now()
            control = e3.ControlMessage(slot, decision)
            wire = e3.encode(control)
            dapp_session = e3.advance_session(dapp_session, "sent", control)
            t3 = _now()
            ctl_dapp.sendall(wire)
            t4 = _now()
            result.records.append(PhaseLatencyRecord.from_phases(
                instance_id=spec.instance_id, seq=slot,
                p1_ns=t1 - arrival_ns, p2_ns=t2 - t1, p3_ns=t3 - t2, p4_ns=t4 - t3,
                rtt_ns=result.rtt_ns, deadline_ns=spec.deadline_ns,
            ))
            if decision.action is not None:
                hint = replace(hint, current_channel=decision.action.target_channel)
            ran_session, received = _await_control(ctl_ran, ran_session, 10 * period_s)
            if received is not None:
                apply_control(state, received)
            truth.append(_Entry(slot, channel, occupied, received))
    except e3.ProtocolViolation as exc:  # pragma: no cover - defensive
        notes.append(f"protocol violation: {exc}")
    finally:
        for ep in (ctl_ran, ctl_dapp, cap_ran, cap_dapp):
            ep.close()
    return InstanceResult(
        instance_id=spec.instance_id,
        records=result.records,
        truth=truth.entries,
        skipped_slots=result.skipped_slots,
        rtt_ns=result.rtt_ns,
        capture=stats,
        pinned_cores=spec.pinned_cores,
        notes=notes,
    )


def run_instance(task: WorkerTask) -> InstanceResult:
    """Run one instance end to end: simulator thread plus dApp loop.

    Direct-capture instances run the inline single-thread pipeline; the
    stream transports pair a simulator thread with the dApp loop thread.
    """
    spec = task.spec
    if spec.transport.variant is TransportVariant.DIRECT_CAPTURE:
        return run_capture_instance(task)
    link = make_link(spec.transport)
    state = ChannelState(
        rng_seed=task.seed,
        noise_sigma=task.sim.noise_sigma,
        num_channels=task.sim.num_channels,
        current_channel=task.sim.initial_channel,
        interferer=task.sim.interferer,
    )
    truth_box: list = []
    notes: list[str] = []

    def ran_side() -> None:
        try:
            truth_box.append(serve_e3(link.ran_control, state, spec.slots))
        except e3.ProtocolViolation as exc:
            notes.append(f"ran-side protocol violation: {exc}")
        except Exception as exc:  # endpoint already closed; surface the cause
            notes.append(f"ran-side failure: {type(exc).__name__}: {exc}")

    ran_thread = threading.Thread(target=ran_side, name=f"ran-{spec.instance_id}", daemon=True)
    ran_thread.start()
    dapp = make_dapp(spec.kind, task.workload)
    hint = ChannelHint(task.sim.initial_channel, task.sim.num_channels)
    loop = run_closed_loop(link.dapp_control, dapp, link.dapp_control, spec, initial_hint=hint)
    ran_thread.join(timeout=60)
    link.close()
    truth = truth_box[0].entries if truth_box else []
    return InstanceResult(
        instance_id=spec.instance_id,
        records=loop.records,
        truth=truth,
        skipped_slots=loop.skipped_slots,
        rtt_ns=loop.rtt_ns,
        capture=None,
        pinned_cores=spec.pinned_cores,
        notes=notes + loop.notes,
    )


def _worker_main(task: WorkerTask, queue: mp.Queue) -> None:
    pinned = task.spec.pinned_cores
    if pinned:
        try:
            os.sched_setaffinity(0, set(pinned))
        except (OSError, AttributeError):
            # affinity is best effort; record the downgrade and continue
            task = replace(task, spec=replace(task.spec, pinned_cores=None))
    result = run_instance(task)
    if pinned and task.spec.pinned_cores is None:
        result.notes.append("core pinning unsupported; ran unpinned")
    queue.put(result)


@dataclass(frozen=True)
class ResourceSample:
    """CPU utilization in cores: per instance and for the whole host."""

    timestamp_ns: int
    per_instance: dict[str, float]
    host_cpu: float


class ExperimentHandle:
    """Running fleet: one process per instance, results over a queue."""

    def __init__(self, tasks: list[WorkerTask], processes: list[mp.Process], queue: mp.Queue):
        self.tasks = tasks
        self.processes = processes
        self._queue = queue
        self._results: list[InstanceResult] | None = None

    def pids(self) -> dict[str, int]:
        return {
            task.spec.instance_id: proc.pid
            for task, proc in zip(self.tasks, self.processes)
            if proc.pid is not None
        }

    def running(self) -> bool:
        return any(proc.is_alive() for proc in self.processes)

    def collect(self, timeout_s: float = 600.0) -> list[InstanceResult]:
        """Drain all worker results, then reap the processes."""
        if self._results is not None:
            return self._results
        results: list[InstanceResult] = []
        deadline = time.monotonic() + timeout_s
        for _ in self.tasks:
            remaining = max(0.1, deadline - time.monotonic())
            results.append(self._queue.get(timeout=remaining))
        for proc in self.processes:
            proc.join(timeout=30)
            if proc.is_alive():  # pragma: no cover - defensive
                proc.terminate()
        results.sort(key=lambda r: r.instance_id)
        self._results = results
        return results


def spawn_instances(tasks: list[WorkerTask], *, start_stagger_s: float = 0.02) -> ExperimentHandle:
    """Fork one worker per instance; a small start stagger keeps the echo
    probes and handshakes out of each other's way."""
    if not tasks:
        raise ValueError("no instances to spawn")
    for task in tasks:  # build models pre-fork; children inherit them read-only
        if task.spec.kind in (DappKind.FCN, DappKind.XCEPTION_LITE):
            get_model(task.spec.kind, task.workload.model_seed)
    ctx = mp.get_context("fork")
    queue: mp.Queue = ctx.Queue()
    processes = []
    for task in tasks:
        proc = ctx.Process(target=_worker_main, args=(task, queue), name=task.spec.instance_id)
        proc.start()
        processes.append(proc)
        if start_stagger_s:
            time.sleep(start_stagger_s)
    return ExperimentHandle(tasks, processes, queue)


def sample_resources(handle: ExperimentHandle, interval_s: float = 1.0) -> list[ResourceSample]:
    """Sample per-instance and host CPU until the fleet finishes.

    Drains the fleet's results as a side effect (available afterwards via
    handle.collect()). Utilization is the CPU-time delta over the wall
    delta; a vanished process simply drops out of later samples.
    """
    samples: list[ResourceSample] = []
    procs: dict[str, psutil.Process] = {}
    for instance_id, pid in handle.pids().items():
        try:
            procs[instance_id] = psutil.Process(pid)
        except psutil.Error:
            pass
    stop = threading.Event()

    def loop() -> None:
        last_wall = time.monotonic()
        last_cpu = {iid: _cpu_seconds(p) for iid, p in procs.items()}
        last_host = _host_busy_seconds()
        while not stop.wait(interval_s):
            wall = time.monotonic()
            dt = wall - last_wall
            if dt <= 0:
                continue
            per_instance: dict[str, float] = {}
            for iid, proc in procs.items():
                cpu = _cpu_seconds(proc)
                if cpu is not None and last_cpu.get(iid) is not None:
                    per_instance[iid] = max(0.0, (cpu - last_cpu[iid]) / dt)
                last_cpu[iid] = cpu
            host = _host_busy_seconds()
            host_frac = max(0.0, min((host - last_host) / dt, float(os.cpu_count() or 1)))
            samples.append(ResourceSample(time.perf_counter_ns(), per_instance, host_frac))
            last_wall, last_host = wall, host

    sampler = threading.Thread(target=loop, name="resource-sampler", daemon=True)
    sampler.start()
    try:
        handle.collect()
    finally:
        stop.set()
        sampler.join(timeout=10)
    return samples


def _cpu_seconds(proc: psutil.Process) -> float | None:
    try:
        times = proc.cpu_times()
        return times.user + times.system
    except psutil.Error:
        return None


def _host_busy_seconds() -> float:
    t = psutil.cpu_times()
    idle = t.idle + getattr(t, "iowait", 0.0)
    return sum(t) - idle
