"""Hot-kernel backend selection.

Two interchangeable backends implement the per-slot kernels: a compiled
Cython extension and a NumPy fallback. The compiled one is preferred when
importable; set DAPPBENCH_KERNELS=python or =compiled to force a choice
(forcing "compiled" raises if the extension is missing).

``dappbench kernels`` benchmarks one backend against the other.
"""

from __future__ import annotations

import os

from . import _pyfallback

_choice = os.environ.get("DAPPBENCH_KERNELS", "auto").strip().lower()

if _choice in ("auto", "", "compiled"):
    try:
        from . import _ckernels as _impl

        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise
        _impl = _pyfallback
        BACKEND = "python"
elif _choice == "python":
    _impl = _pyfallback
    BACKEND = "python"
else:
    raise ValueError(f"DAPPBENCH_KERNELS must be auto, compiled, or python, not {_choice!r}")

FIXED_SCALE = _pyfallback.FIXED_SCALE

fixed_to_complex = _impl.fixed_to_complex
complex_to_fixed = _impl.complex_to_fixed
mean_power = _impl.mean_power
fft_pow2 = _impl.fft_pow2
normalize_interleaved = _impl.normalize_interleaved
dense_forward = _impl.dense_forward
conv1d_stride2_k3 = _impl.conv1d_stride2_k3
depthwise_conv1d_k3 = _impl.depthwise_conv1d_k3
pointwise_conv1d = _impl.pointwise_conv1d
relu_inplace = _impl.relu_inplace
maxpool1d_2 = _impl.maxpool1d_2
global_avg_pool = _impl.global_avg_pool


def available_backends() -> dict[str, object]:
    """Importable backends by name; used by parity tests and the benchmark."""
    backends: dict[str, object] = {"python": _pyfallback}
    try:
        from . import _ckernels

        backends["compiled"] = _ckernels
    except ImportError:
        pass
    return backends
