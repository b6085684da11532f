"""Scenario files: the JSON schema driving every experiment run.

A scenario names a seed, the simulator's signal model, workload
parameters, and one or more arms, each holding instance groups (kind,
count, transport, cores, deadline, slots). Loading resolves all defaults,
so a loaded scenario is fully concrete; serializing and re-loading it
yields an equal value.

Missing-field defaults: deadline 10 ms, 300 slots, 1536 samples per slot,
10 ms indication period.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

from .ransim import InterfererSpec
from .runtime import DEFAULT_DEADLINE_NS, DEFAULT_SLOTS, SimSettings
from .transport import TransportSpec, TransportVariant
from .workloads import DappKind, WorkloadParams

DEFAULT_SAMPLES = 1536
DEFAULT_PERIOD_MS = 10.0


class ParseError(ValueError):
    """The file is not well-formed JSON or a field has the wrong shape."""


class ValidationError(ValueError):
    """The file parsed but violates a scenario invariant."""


@dataclass(frozen=True)
class InstanceGroup:
    kind: DappKind
    count: int
    transport: TransportSpec
    pinned_cores: tuple[int, ...] | None
    deadline_ns: int
    slots: int
    period_ms: float
    samples: int


@dataclass(frozen=True)
class Arm:
    name: str
    x: float
    groups: tuple[InstanceGroup, ...]


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    sim: SimSettings
    workload: WorkloadParams
    arms: tuple[Arm, ...]
    sample_interval_s: float = 1.0
    out_dir: str | None = None


def load_scenario(path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    return parse_scenario(text, source=str(path))


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{source}: scenario must be a JSON object")
    return _build(doc, source)


def _field(doc: dict, name: str, kind, default=None, required: bool = False, source: str = ""):
    if name not in doc or doc[name] is None:
        if required:
            raise ParseError(f"{source}: missing field {name!r}")
        return default
    value = doc[name]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ParseError(f"{source}: field {name!r} must be {getattr(kind, '__name__', kind)}")
    return value


def _build(doc: dict, source: str) -> Scenario:
    name = _field(doc, "name", str, required=True, source=source)
    seed = _field(doc, "seed", int, required=True, source=source)
    if seed < 0:
        raise ValidationError("seed must be non-negative")

    sim_doc = _field(doc, "sim", dict, default={}, source=source)
    interferer = None
    if sim_doc.get("interferer") is not None:
        idoc = _field(sim_doc, "interferer", dict, source=source)
        try:
            interferer = InterfererSpec(
                channel=_field(idoc, "channel", int, required=True, source=source),
                bin=_field(idoc, "bin", int, required=True, source=source),
                amplitude=_field(idoc, "amplitude", float, required=True, source=source),
                phase=_field(idoc, "phase", float, default=0.0, source=source),
            )
        except ParseError:
            raise
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
    sim = SimSettings(
        noise_sigma=_field(sim_doc, "noise_sigma", float, default=0.01, source=source),
        num_channels=_field(sim_doc, "num_channels", int, default=4, source=source),
        initial_channel=_field(sim_doc, "initial_channel", int, default=0, source=source),
        interferer=interferer,
    )

    wdoc = _field(doc, "workload", dict, default={}, source=source)
    workload = WorkloadParams(
        ebs_threshold=_field(wdoc, "ebs_threshold", float, default=0.05, source=source),
        fft_bin_threshold=_field(wdoc, "fft_bin_threshold", float, default=0.05, source=source),
        model_seed=_field(wdoc, "model_seed", int, default=seed, source=source),
    )

    defaults_doc = _field(doc, "defaults", dict, default={}, source=source)
    defaults = {
        "deadline_ns": _field(defaults_doc, "deadline_ns", int, default=DEFAULT_DEADLINE_NS, source=source),
        "slots": _field(defaults_doc, "slots", int, default=DEFAULT_SLOTS, source=source),
        "samples": _field(defaults_doc, "samples", int, default=DEFAULT_SAMPLES, source=source),
        "period_ms": _field(
            defaults_doc, "period_ms",
            float, default=_field(sim_doc, "period_ms", float, default=DEFAULT_PERIOD_MS, source=source),
            source=source,
        ),
    }

    if "arms" in doc:
        arm_docs = _field(doc, "arms", list, source=source)
        if "instances" in doc:
            raise ParseError(f"{source}: give either 'arms' or 'instances', not both")
    else:
        arm_docs = [{"name": "main", "instances": _field(doc, "instances", list, required=True, source=source)}]
    if not arm_docs:
        raise ValidationError("a scenario needs at least one arm")

    arms = []
    for index, arm_doc in enumerate(arm_docs):
        if not isinstance(arm_doc, dict):
            raise ParseError(f"{source}: arm {index} must be an object")
        arm_name = _field(arm_doc, "name", str, default=f"arm{index}", source=source)
        x = _field(arm_doc, "x", float, default=float(index), source=source)
        group_docs = _field(arm_doc, "instances", list, required=True, source=source)
        groups = tuple(_build_group(g, defaults, source) for g in group_docs)
        if not groups:
            raise ValidationError(f"arm {arm_name!r} has no instances")
        arms.append(Arm(arm_name, x, groups))
    if len({a.name for a in arms}) != len(arms):
        raise ValidationError("arm names must be unique")

    scenario = Scenario(
        name=name,
        seed=seed,
        sim=sim,
        workload=workload,
        arms=tuple(arms),
        sample_interval_s=_field(doc, "sample_interval_s", float, default=1.0, source=source),
        out_dir=_field(doc, "out_dir", str, default=None, source=source),
    )
    _validate(scenario)
    return scenario


def _build_group(doc, defaults: dict, source: str) -> InstanceGroup:
    if not isinstance(doc, dict):
        raise ParseError(f"{source}: instance group must be an object")
    kind_name = _field(doc, "kind", str, required=True, source=source)
    try:
        kind = DappKind.parse(kind_name)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    variant_name = _field(doc, "transport", str, default="inprocess", source=source)
    try:
        variant = TransportVariant.parse(variant_name)
        transport = TransportSpec(variant, _field(doc, "delay_ms", float, default=0.0, source=source))
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    cores_doc = doc.get("pinned_cores")
    pinned = None
    if cores_doc is not None:
        if not isinstance(cores_doc, list) or not all(isinstance(c, int) and c >= 0 for c in cores_doc):
            raise ParseError(f"{source}: pinned_cores must be a list of non-negative ints")
        pinned = tuple(cores_doc)
    return InstanceGroup(
        kind=kind,
        count=_field(doc, "count", int, default=1, source=source),
        transport=transport,
        pinned_cores=pinned,
        deadline_ns=_field(doc, "deadline_ns", int, default=defaults["deadline_ns"], source=source),
        slots=_field(doc, "slots", int, default=defaults["slots"], source=source),
        period_ms=_field(doc, "period_ms", float, default=defaults["period_ms"], source=source),
        samples=_field(doc, "samples", int, default=defaults["samples"], source=source),
    )


def _validate(scenario: Scenario) -> None:
    def check(ok: bool, invariant: str) -> None:
        if not ok:
            raise ValidationError(invariant)

    sim = scenario.sim
    check(sim.noise_sigma > 0, "noise_sigma must be positive")
    check(sim.num_channels >= 1, "num_channels must be at least 1")
    check(0 <= sim.initial_channel < sim.num_channels, "initial_channel must be within [0, num_channels)")
    if sim.interferer is not None:
        check(0 <= sim.interferer.channel < sim.num_channels, "interferer channel must be within [0, num_channels)")
        check(sim.interferer.amplitude >= 0, "interferer amplitude must be non-negative")
        check(math.isfinite(sim.interferer.phase), "interferer phase must be finite")
    check(scenario.workload.ebs_threshold > 0, "ebs_threshold must be positive")
    check(scenario.workload.fft_bin_threshold > 0, "fft_bin_threshold must be positive")
    check(scenario.sample_interval_s > 0, "sample_interval_s must be positive")
    for arm in scenario.arms:
        for group in arm.groups:
            where = f"arm {arm.name!r}"
            check(group.count >= 1, f"{where}: count must be at least 1")
            check(group.slots >= 1, f"{where}: slots must be at least 1")
            check(group.deadline_ns > 0, f"{where}: deadline_ns must be positive")
            check(group.period_ms > 0, f"{where}: period_ms must be positive")
            check(group.samples >= 1, f"{where}: samples must be at least 1")
            if sim.interferer is not None:
                check(
                    sim.interferer.bin < group.samples,
                    f"{where}: interferer bin must be below the slot sample count",
                )
            check(sim.interferer is None or sim.interferer.bin >= 0, "interferer bin must be non-negative")


def serialize_scenario(scenario: Scenario) -> str:
    """Canonical JSON for a resolved scenario; parse_scenario inverts it."""
    doc = {
        "name": scenario.name,
        "seed": scenario.seed,
        "sim": {
            "noise_sigma": scenario.sim.noise_sigma,
            "num_channels": scenario.sim.num_channels,
            "initial_channel": scenario.sim.initial_channel,
            "interferer": asdict(scenario.sim.interferer) if scenario.sim.interferer else None,
        },
        "workload": asdict(scenario.workload),
        "sample_interval_s": scenario.sample_interval_s,
        "out_dir": scenario.out_dir,
        "arms": [
            {
                "name": arm.name,
                "x": arm.x,
                "instances": [
                    {
                        "kind": group.kind.name,
                        "count": group.count,
                        "transport": group.transport.variant.value,
                        "delay_ms": group.transport.delay_ms,
                        "pinned_cores": list(group.pinned_cores) if group.pinned_cores else None,
                        "deadline_ns": group.deadline_ns,
                        "slots": group.slots,
                        "period_ms": group.period_ms,
                        "samples": group.samples,
                    }
                    for group in arm.groups
                ],
            }
            for arm in scenario.arms
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"
