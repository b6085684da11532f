"""Latency statistics and plot-data emission.

Percentiles use the nearest-rank definition: the ceil(q*n)-th order
statistic of n sorted samples, 1-indexed. That choice is exactly
reproducible (no interpolation) and is what every shipped report uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .runtime import PhaseLatencyRecord


class EmptyInput(ValueError):
    pass


class UnknownKind(ValueError):
    pass


@dataclass(frozen=True)
class PhaseMeans:
    p1_ns: float
    p2_ns: float
    p3_ns: float
    p4_ns: float
    rtt_ns: float


@dataclass(frozen=True)
class SummaryStats:
    count: int
    mean_ns: float
    p50_ns: int
    p95_ns: int
    p99_ns: int
    max_ns: int
    violation_rate: float
    phase_means: PhaseMeans


def nearest_rank(sorted_values: Sequence, q: float):
    """The ceil(q*n)-th order statistic (1-indexed) of pre-sorted values."""
    if not sorted_values:
        raise EmptyInput("no values")
    rank = max(1, math.ceil(q * len(sorted_values)))
    return sorted_values[min(rank, len(sorted_values)) - 1]


def summarize(records: Iterable[PhaseLatencyRecord]) -> SummaryStats:
    """Condense records into the reported latency and violation figures."""
    records = list(records)
    if not records:
        raise EmptyInput("no records")
    totals = sorted(r.total_ns for r in records)
    n = len(records)
    violated = sum(1 for r in records if r.violated)
    return SummaryStats(
        count=n,
        mean_ns=sum(totals) / n,
        p50_ns=nearest_rank(totals, 0.50),
        p95_ns=nearest_rank(totals, 0.95),
        p99_ns=nearest_rank(totals, 0.99),
        max_ns=totals[-1],
        violation_rate=violated / n,
        phase_means=PhaseMeans(
            p1_ns=sum(r.p1_ns for r in records) / n,
            p2_ns=sum(r.p2_ns for r in records) / n,
            p3_ns=sum(r.p3_ns for r in records) / n,
            p4_ns=sum(r.p4_ns for r in records) / n,
            rtt_ns=sum(r.rtt_ns for r in records) / n,
        ),
    )


def cdf_points(records: Iterable[PhaseLatencyRecord]) -> list[tuple[int, float]]:
    """Empirical CDF of total latency: (value_ns, fraction <= value), one
    point per distinct value, ascending, ending at fraction 1.0."""
    totals = sorted(r.total_ns for r in records)
    if not totals:
        raise EmptyInput("no records")
    n = len(totals)
    points: list[tuple[int, float]] = []
    for idx, value in enumerate(totals, start=1):
        if idx == n or totals[idx] != value:
            points.append((value, idx / n))
    return points


@dataclass(frozen=True)
class CompareDeltas:
    """B relative to A: percent change for latency, percentage points for
    the violation rate."""

    mean_pct: float
    p95_pct: float
    max_pct: float
    violation_pp: float


def compare(records_a: Iterable[PhaseLatencyRecord], records_b: Iterable[PhaseLatencyRecord]) -> CompareDeltas:
    a, b = summarize(records_a), summarize(records_b)
    return CompareDeltas(
        mean_pct=_pct(a.mean_ns, b.mean_ns),
        p95_pct=_pct(a.p95_ns, b.p95_ns),
        max_pct=_pct(a.max_ns, b.max_ns),
        violation_pp=(b.violation_rate - a.violation_rate) * 100.0,
    )


def _pct(a: float, b: float) -> float:
    if a == 0:
        return 0.0 if b == 0 else math.inf
    return (b - a) / a * 100.0


MS = 1e6  # ns per millisecond


def emit_cdf_csv(records: Iterable[PhaseLatencyRecord]) -> str:
    lines = ["latency_ms,fraction"]
    for value_ns, fraction in cdf_points(records):
        lines.append(f"{value_ns / MS:.9f},{fraction:.9f}")
    return "\n".join(lines) + "\n"


def emit_phase_bars_csv(records: Iterable[PhaseLatencyRecord]) -> str:
    s = summarize(records)
    m = s.phase_means
    total = m.p1_ns + m.p2_ns + m.p3_ns + m.p4_ns + m.rtt_ns
    lines = [
        "p1_ms,p2_ms,p3_ms,p4_ms,rtt_ms,total_ms",
        ",".join(
            f"{v / MS:.9f}"
            for v in (m.p1_ns, m.p2_ns, m.p3_ns, m.p4_ns, m.rtt_ns, total)
        ),
    ]
    return "\n".join(lines) + "\n"


def emit_sweep_csv(arms: Iterable[tuple[str, float, list[PhaseLatencyRecord]]]) -> str:
    """One row per arm, ordered by the arm's independent variable."""
    lines = ["arm,x,count,mean_ms,p95_ms,max_ms,violation_rate"]
    for name, x, records in sorted(arms, key=lambda item: item[1]):
        s = summarize(records)
        lines.append(
            f"{name},{x:g},{s.count},{s.mean_ns / MS:.9f},{s.p95_ns / MS:.9f},"
            f"{s.max_ns / MS:.9f},{s.violation_rate:.9f}"
        )
    return "\n".join(lines) + "\n"


PLOT_KINDS = ("cdf", "phase-bars", "sweep")


def emit_plot_data(kind: str, *, records=None, arms=None) -> str:
    if kind == "cdf":
        return emit_cdf_csv(records)
    if kind == "phase-bars":
        return emit_phase_bars_csv(records)
    if kind == "sweep":
        return emit_sweep_csv(arms)
    raise UnknownKind(f"plot kind {kind!r} (expected one of {', '.join(PLOT_KINDS)})")
