"""Benchmark of the compiled kernel backend against the NumPy fallback.

Times each hot kernel on slot-sized inputs (1536 samples, 2048-point FFT,
the two reference models) and reports per-call microseconds for every
importable backend. Used to sanity-check that the selected backend is the
right one for a host before trusting latency numbers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .kernels import available_backends
from .workloads import FcnModel, XceptionLiteModel

SLOT = 1536
FFT_SIZE = 2048


@dataclass(frozen=True)
class BenchRow:
    kernel: str
    backend: str
    per_call_us: float
    calls: int


def _time_call(fn, repeats: int) -> float:
    fn()  # warm-up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1e6


def bench_backend(name: str, impl, *, scale: float = 1.0) -> list[BenchRow]:
    rng = np.random.default_rng(20240901)
    z = (rng.normal(0, 0.3, SLOT) + 1j * rng.normal(0, 0.3, SLOT)).astype(np.complex128)
    pairs = impl.complex_to_fixed(np.clip(z.real, -1, 1) + 1j * np.clip(z.imag, -1, 1))
    padded = np.zeros(FFT_SIZE, dtype=np.complex128)
    padded[:SLOT] = z
    fcn = FcnModel.from_seed(7)
    xc = XceptionLiteModel.from_seed(7)
    features = impl.normalize_interleaved(z)
    channels = np.ascontiguousarray(np.vstack((features[0::2], features[1::2])))

    def fcn_forward():
        x = features
        last = len(fcn.weights) - 1
        for idx, (w, b) in enumerate(zip(fcn.weights, fcn.biases)):
            x = impl.dense_forward(x, w, b, idx < last)
        return x

    def xc_forward():
        x = impl.conv1d_stride2_k3(channels, xc.entry_w, xc.entry_b)
        for dw_w, dw_b, pw_w, pw_b in xc.blocks:
            x = impl.depthwise_conv1d_k3(x, dw_w, dw_b)
            x = impl.pointwise_conv1d(x, pw_w, pw_b)
            x = impl.relu_inplace(x)
            x = impl.maxpool1d_2(x)
        return impl.dense_forward(impl.global_avg_pool(x), xc.head_w, xc.head_b, False)

    cases = [
        ("fixed_to_complex/1536", lambda: impl.fixed_to_complex(pairs), 2000),
        ("complex_to_fixed/1536", lambda: impl.complex_to_fixed(z * 0.5), 2000),
        ("mean_power/1536", lambda: impl.mean_power(z), 5000),
        ("fft_pow2/2048", lambda: impl.fft_pow2(padded), 200),
        ("normalize/1536", lambda: impl.normalize_interleaved(z), 2000),
        ("fcn_forward/3072", fcn_forward, 50),
        ("xception_forward/1536", xc_forward, 20),
    ]
    rows = []
    for kernel, fn, repeats in cases:
        calls = max(1, int(repeats * scale))
        rows.append(BenchRow(kernel, name, _time_call(fn, calls), calls))
    return rows


def run_benchmark(scale: float = 1.0) -> list[BenchRow]:
    rows: list[BenchRow] = []
    for name, impl in sorted(available_backends().items()):
        rows.extend(bench_backend(name, impl, scale=scale))
    return rows


def format_table(rows: list[BenchRow]) -> str:
    by_kernel: dict[str, dict[str, float]] = {}
    for row in rows:
        by_kernel.setdefault(row.kernel, {})[row.backend] = row.per_call_us
    backends = sorted({row.backend for row in rows})
    header = ["kernel".ljust(24)] + [b.rjust(14) for b in backends]
    if len(backends) == 2:
        header.append("speedup".rjust(10))
    lines = ["".join(header)]
    for kernel in by_kernel:
        cells = [kernel.ljust(24)]
        for backend in backends:
            us = by_kernel[kernel].get(backend)
            cells.append((f"{us:.1f} us" if us is not None else "-").rjust(14))
        if len(backends) == 2 and all(b in by_kernel[kernel] for b in backends):
            compiled, python = by_kernel[kernel].get("compiled"), by_kernel[kernel].get("python")
            if compiled and python:
                cells.append(f"{python / compiled:.2f}x".rjust(10))
        lines.append("".join(cells))
    return "\n".join(lines)


def format_csv(rows: list[BenchRow]) -> str:
    lines = ["kernel,backend,per_call_us,calls"]
    for row in rows:
        lines.append(f"{row.kernel},{row.backend},{row.per_call_us:.3f},{row.calls}")
    return "\n".join(lines) + "\n"
