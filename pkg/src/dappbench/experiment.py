"""Scenario execution and result bundles.

Running an arm produces one bundle directory:

    records.csv       instance_id,seq,p1_ns,p2_ns,p3_ns,p4_ns,rtt_ns,total_ns,violated
    ground_truth.csv  instance_id,slot_index,channel,occupied,verdict,action
    resources.csv     timestamp_ns,scope,cpu_cores   (scope is an instance id or "host")
    meta.json         scenario echo, per-instance wiring, rtt, notes, host info

Deadline violations are data, never failures: a run that completes exits
cleanly whatever the violation rate. Verdict content (ground_truth.csv)
is a pure function of the scenario seed, so two runs of the same scenario
produce byte-identical ground-truth files; timing columns are not
reproducible and live in the other files.
"""

from __future__ import annotations

import json
import os
import time
from datetime import datetime, timezone
from pathlib import Path

from . import kernels
from .runtime import (
    InstanceResult,
    InstanceSpec,
    PhaseLatencyRecord,
    ResourceSample,
    WorkerTask,
    sample_resources,
    spawn_instances,
)
from .scenario import Arm, Scenario
from .workloads import Verdict

RECORDS_CSV = "records.csv"
TRUTH_CSV = "ground_truth.csv"
RESOURCES_CSV = "resources.csv"
META_JSON = "meta.json"

RECORDS_HEADER = "instance_id,seq,p1_ns,p2_ns,p3_ns,p4_ns,rtt_ns,total_ns,violated"
TRUTH_HEADER = "instance_id,slot_index,channel,occupied,verdict,action"
RESOURCES_HEADER = "timestamp_ns,scope,cpu_cores"

_SEED_STRIDE = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def instance_seed(scenario_seed: int, index: int) -> int:
    """Per-instance simulator seed; depends on the index, not the arm, so
    sibling arms replay identical I/Q content."""
    return (scenario_seed + (index + 1) * _SEED_STRIDE) & _MASK64


def expand_arm(scenario: Scenario, arm: Arm) -> list[WorkerTask]:
    tasks: list[WorkerTask] = []
    index = 0
    for group in arm.groups:
        for _ in range(group.count):
            spec = InstanceSpec(
                instance_id=f"i{index:02d}-{group.kind.name.lower()}",
                kind=group.kind,
                transport=group.transport,
                pinned_cores=group.pinned_cores,
                deadline_ns=group.deadline_ns,
                slots=group.slots,
                period_ms=group.period_ms,
                samples=group.samples,
            )
            tasks.append(WorkerTask(spec, scenario.sim, instance_seed(scenario.seed, index), scenario.workload))
            index += 1
    return tasks


def run_arm(
    scenario: Scenario,
    arm: Arm,
    out_root: Path,
    *,
    collect_resources: bool = True,
) -> Path:
    """Run one arm's fleet and write its bundle; returns the bundle path."""
    tasks = expand_arm(scenario, arm)
    started = datetime.now(timezone.utc)
    t0 = time.monotonic()
    handle = spawn_instances(tasks)
    samples: list[ResourceSample] = []
    if collect_resources:
        samples = sample_resources(handle, scenario.sample_interval_s)
    results = handle.collect()
    wall_s = time.monotonic() - t0

    bundle = out_root / scenario.name / arm.name
    bundle.mkdir(parents=True, exist_ok=True)
    (bundle / RECORDS_CSV).write_text(render_records_csv(results), encoding="utf-8")
    (bundle / TRUTH_CSV).write_text(render_truth_csv(results), encoding="utf-8")
    (bundle / RESOURCES_CSV).write_text(render_resources_csv(samples), encoding="utf-8")
    meta = {
        "scenario": scenario.name,
        "arm": arm.name,
        "x": arm.x,
        "seed": scenario.seed,
        "kernel_backend": kernels.BACKEND,
        "host_cpus": os.cpu_count(),
        "started_utc": started.isoformat(),
        "wall_s": round(wall_s, 3),
        "instances": [_instance_meta(task, result) for task, result in zip(tasks, results)],
    }
    (bundle / META_JSON).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return bundle


def _instance_meta(task: WorkerTask, result: InstanceResult) -> dict:
    capture = result.capture
    return {
        "instance_id": result.instance_id,
        "kind": task.spec.kind.name,
        "transport": task.spec.transport.variant.value,
        "delay_ms": task.spec.transport.delay_ms,
        "pinned_cores_requested": list(task.spec.pinned_cores or ()),
        "pinned_cores_actual": list(result.pinned_cores or ()),
        "deadline_ns": task.spec.deadline_ns,
        "slots": task.spec.slots,
        "period_ms": task.spec.period_ms,
        "samples": task.spec.samples,
        "seed": task.seed,
        "rtt_ns": result.rtt_ns,
        "records": len(result.records),
        "skipped_slots": result.skipped_slots,
        "capture": None if capture is None else {
            "frames_seen": capture.frames_seen,
            "frames_parsed": capture.frames_parsed,
            "frames_skipped": capture.frames_skipped,
            "seq_gaps": capture.seq_gaps,
        },
        "notes": result.notes,
    }


def run_experiment(scenario: Scenario, out_root: Path, *, collect_resources: bool = True) -> list[Path]:
    """Run every arm in order; returns the bundle paths."""
    return [run_arm(scenario, arm, out_root, collect_resources=collect_resources) for arm in scenario.arms]


# --- CSV rendering and loading ---


def render_records_csv(results: list[InstanceResult]) -> str:
    lines = [RECORDS_HEADER]
    for result in results:
        for r in result.records:
            lines.append(
                f"{r.instance_id},{r.seq},{r.p1_ns},{r.p2_ns},{r.p3_ns},{r.p4_ns},"
                f"{r.rtt_ns},{r.total_ns},{int(r.violated)}"
            )
    return "\n".join(lines) + "\n"


def render_truth_csv(results: list[InstanceResult]) -> str:
    lines = [TRUTH_HEADER]
    for result in results:
        for entry in result.truth:
            decision = entry.decision
            if decision is None:
                verdict = action = ""
            else:
                verdict = "occupied" if decision.verdict is Verdict.OCCUPIED else "unoccupied"
                action = "noop" if decision.action is None else f"change:{decision.action.target_channel}"
            lines.append(
                f"{result.instance_id},{entry.slot_index},{entry.channel},{int(entry.occupied)},{verdict},{action}"
            )
    return "\n".join(lines) + "\n"


def render_resources_csv(samples: list[ResourceSample]) -> str:
    lines = [RESOURCES_HEADER]
    for sample in samples:
        lines.append(f"{sample.timestamp_ns},host,{sample.host_cpu:.4f}")
        for instance_id in sorted(sample.per_instance):
            lines.append(f"{sample.timestamp_ns},{instance_id},{sample.per_instance[instance_id]:.4f}")
    return "\n".join(lines) + "\n"


def load_records(path) -> list[PhaseLatencyRecord]:
    """Read a records.csv back into records.

    The file does not carry the deadline; the stored violated flag is
    authoritative and the phase sum is re-checked against total_ns.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != RECORDS_HEADER:
        raise ValueError(f"{path} is not a records CSV")
    records = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 9:
            raise ValueError(f"{path}:{ln}: expected 9 columns")
        instance_id = fields[0]
        seq, p1, p2, p3, p4, rtt, total, violated = (int(v) for v in fields[1:])
        if p1 + p2 + p3 + p4 + rtt != total:
            raise ValueError(f"{path}:{ln}: total_ns does not equal the phase sum")
        records.append(PhaseLatencyRecord(
            instance_id=instance_id, seq=seq, p1_ns=p1, p2_ns=p2, p3_ns=p3, p4_ns=p4,
            rtt_ns=rtt, total_ns=total, deadline_ns=0, violated=bool(violated),
        ))
    return records


def load_bundle_records(bundle: Path) -> list[PhaseLatencyRecord]:
    return load_records(Path(bundle) / RECORDS_CSV)


def load_meta(bundle: Path) -> dict:
    return json.loads((Path(bundle) / META_JSON).read_text(encoding="utf-8"))
