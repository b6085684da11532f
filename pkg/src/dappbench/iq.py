"""Complex baseband sample buffers and their fixed-point wire form.

An IQBuffer holds double-precision I/Q pairs, nominal range [-1, 1]. On
the wire each sample is a signed 16-bit pair, little-endian, interleaved
(I then Q), scale 1/32768. Conversion to the wire rounds half away from
zero and saturates at the int16 limits; converting back is exact division,
so wire -> buffer -> wire is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

DEFAULT_SAMPLES = 1536  # slot size used by every shipped scenario
BYTES_PER_SAMPLE = 4


class OutOfRangeError(ValueError):
    """A component magnitude exceeded 1.0 on conversion to fixed point."""


@dataclass(frozen=True)
class FixedPointIQ:
    """Wire-format I/Q payload: interleaved int16 LE pairs as raw bytes."""

    data: bytes

    def __post_init__(self) -> None:
        if len(self.data) % BYTES_PER_SAMPLE:
            raise ValueError("fixed-point payload length must be a multiple of 4")
        if not self.data:
            raise ValueError("fixed-point payload must hold at least one sample")

    def __len__(self) -> int:
        return len(self.data) // BYTES_PER_SAMPLE

    def as_int16(self) -> np.ndarray:
        """Interleaved int16 view (i0, q0, i1, q1, ...)."""
        arr = np.frombuffer(self.data, dtype="<i2")
        return arr if arr.dtype.isnative else arr.astype(np.int16)


class IQBuffer:
    """A slot of complex baseband samples backed by a complex128 array."""

    __slots__ = ("z",)

    def __init__(self, z: np.ndarray):
        z = np.ascontiguousarray(z, dtype=np.complex128)
        if z.ndim != 1 or z.shape[0] < 1:
            raise ValueError("IQBuffer needs a 1-D array with at least one sample")
        self.z = z

    def __len__(self) -> int:
        return self.z.shape[0]

    @property
    def i(self) -> np.ndarray:
        return self.z.real

    @property
    def q(self) -> np.ndarray:
        return self.z.imag

    @classmethod
    def from_components(cls, i, q) -> "IQBuffer":
        return cls(np.asarray(i, dtype=np.float64) + 1j * np.asarray(q, dtype=np.float64))

    def clipped(self) -> "IQBuffer":
        """Saturate both components to [-1, 1] (ADC-style full-scale clip)."""
        return IQBuffer(np.clip(self.z.real, -1.0, 1.0) + 1j * np.clip(self.z.imag, -1.0, 1.0))


def from_fixed_point(raw: FixedPointIQ) -> IQBuffer:
    """Decode a wire payload; each int16 component is scaled by 1/32768."""
    return IQBuffer(kernels.fixed_to_complex(raw.as_int16()))


def to_fixed_point(buf: IQBuffer) -> FixedPointIQ:
    """Encode a buffer whose components all lie within [-1, 1].

    Raises OutOfRangeError otherwise; use IQBuffer.clipped() first when the
    signal may exceed full scale.
    """
    peak = max(
        float(np.max(np.abs(buf.z.real))),
        float(np.max(np.abs(buf.z.imag))),
    )
    if peak > 1.0:
        raise OutOfRangeError(f"component magnitude {peak} exceeds full scale")
    pairs = kernels.complex_to_fixed(buf.z)
    return FixedPointIQ(pairs.astype("<i2").tobytes())


def energy(buf: IQBuffer) -> float:
    """Mean power: (1/N) * sum(i**2 + q**2)."""
    return kernels.mean_power(buf.z)
