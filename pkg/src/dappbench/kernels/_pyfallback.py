"""NumPy implementations of the per-slot hot kernels.

This is the fallback backend used when the compiled extension is not
available. Both backends implement the same contracts:

- fixed-point I/Q uses signed int16 with scale 1/32768, interleaved (I, Q)
- conversion to int16 rounds half away from zero and saturates
- the FFT is an unnormalized forward radix-2 transform (power-of-two length)
- convolutions are 1-D cross-correlations with zero padding of one sample
  on each side (kernel width 3)
"""

from __future__ import annotations

import numpy as np

FIXED_SCALE = 32768.0
INT16_MIN = -32768
INT16_MAX = 32767


def fixed_to_complex(pairs: np.ndarray) -> np.ndarray:
    """Interleaved int16 (i0,q0,i1,q1,...) to complex128, scaled by 1/32768."""
    scaled = pairs.astype(np.float64) / FIXED_SCALE
    return scaled[0::2] + 1j * scaled[1::2]


def complex_to_fixed(z: np.ndarray) -> np.ndarray:
    """Complex128 to interleaved int16, round half away from zero, saturating."""
    flat = np.empty(2 * z.shape[0], dtype=np.float64)
    flat[0::2] = z.real
    flat[1::2] = z.imag
    scaled = flat * FIXED_SCALE
    rounded = np.trunc(scaled + np.copysign(0.5, scaled))
    return np.clip(rounded, INT16_MIN, INT16_MAX).astype(np.int16)


def mean_power(z: np.ndarray) -> float:
    """Mean of i**2 + q**2 over the buffer."""
    return float(np.mean(z.real * z.real + z.imag * z.imag))


def fft_pow2(z: np.ndarray) -> np.ndarray:
    """Iterative radix-2 FFT, unnormalized forward convention.

    Vectorized over butterfly groups: one pass per stage with precomputed
    twiddles. Input length must be a power of two.
    """
    n = z.shape[0]
    if n & (n - 1):
        raise ValueError("fft_pow2 requires a power-of-two length")
    x = z[_bit_reverse_indices(n)].astype(np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        x = x.reshape(-1, size)
        odd = x[:, half:] * tw
        even = x[:, :half].copy()
        x[:, :half] = even + odd
        x[:, half:] = even - odd
        x = x.reshape(-1)
        size *= 2
    return x


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def normalize_interleaved(z: np.ndarray) -> np.ndarray:
    """Zero-mean unit-variance interleaved (i0,q0,...) feature vector.

    Mean and standard deviation are taken jointly over all 2N real
    components; the divisor is floored at 1e-12 so constant buffers map
    to all zeros.
    """
    flat = np.empty(2 * z.shape[0], dtype=np.float64)
    flat[0::2] = z.real
    flat[1::2] = z.imag
    mu = flat.mean()
    sigma = flat.std()
    return (flat - mu) / max(sigma, 1e-12)


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, relu: bool) -> np.ndarray:
    """One dense layer: w @ x + b, optional ReLU. w is (out, in)."""
    out = w @ x + b
    if relu:
        np.maximum(out, 0.0, out=out)
    return out


def conv1d_stride2_k3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Width-3 convolution with stride 2 and one-sample zero padding.

    x is (c_in, length), w is (c_out, c_in, 3), output is (c_out, ceil(length/2)).
    """
    c_in, length = x.shape
    out_len = (length + 1) // 2
    padded = np.zeros((c_in, length + 2), dtype=np.float64)
    padded[:, 1:-1] = x
    out = np.broadcast_to(b[:, None], (w.shape[0], out_len)).copy()
    for k in range(3):
        taps = padded[:, k : k + 2 * out_len : 2]
        out += w[:, :, k] @ taps
    return out


def depthwise_conv1d_k3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-channel width-3 convolution, stride 1, one-sample zero padding.

    x is (channels, length), w is (channels, 3); output has the input shape.
    """
    channels, length = x.shape
    padded = np.zeros((channels, length + 2), dtype=np.float64)
    padded[:, 1:-1] = x
    out = np.broadcast_to(b[:, None], x.shape).copy()
    for k in range(3):
        out += w[:, k : k + 1] * padded[:, k : k + length]
    return out


def pointwise_conv1d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """1x1 convolution across channels: w @ x + b. w is (c_out, c_in)."""
    return w @ x + b[:, None]


def relu_inplace(x: np.ndarray) -> np.ndarray:
    np.maximum(x, 0.0, out=x)
    return x


def maxpool1d_2(x: np.ndarray) -> np.ndarray:
    """Max pooling with window 2 and stride 2; a trailing odd sample is dropped."""
    even = x.shape[1] - (x.shape[1] & 1)
    return np.maximum(x[:, 0:even:2], x[:, 1:even:2])


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Mean over the length axis of a (channels, length) activation."""
    return x.mean(axis=1)
