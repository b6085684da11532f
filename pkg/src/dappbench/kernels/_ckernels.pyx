# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the per-slot hot kernels.

Same contracts as the NumPy fallback backend (fixed-point scale 1/32768,
round half away from zero with saturation, unnormalized radix-2 FFT,
width-3 zero-padded convolutions). Kept dependency-light: plain C loops
over typed memoryviews, NumPy only for output allocation.
"""

import numpy as np

from libc.math cimport cos, sin, sqrt

DEF FIXED_SCALE = 32768.0
DEF INT16_MIN = -32768
DEF INT16_MAX = 32767


def fixed_to_complex(const short[::1] pairs):
    """Interleaved int16 (i0,q0,i1,q1,...) to complex128, scaled by 1/32768."""
    cdef Py_ssize_t n = pairs.shape[0] // 2
    out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] o = out
    cdef Py_ssize_t k
    for k in range(n):
        o[k] = pairs[2 * k] / FIXED_SCALE + 1j * (pairs[2 * k + 1] / FIXED_SCALE)
    return out


def complex_to_fixed(const double complex[::1] z):
    """Complex128 to interleaved int16, round half away from zero, saturating."""
    cdef Py_ssize_t n = z.shape[0]
    out = np.empty(2 * n, dtype=np.int16)
    cdef short[::1] o = out
    cdef Py_ssize_t k
    for k in range(n):
        o[2 * k] = _to_i16(z[k].real)
        o[2 * k + 1] = _to_i16(z[k].imag)
    return out


cdef inline short _to_i16(double v) noexcept:
    cdef double s = v * FIXED_SCALE
    s = s + 0.5 if s >= 0 else s - 0.5
    cdef long long t = <long long>s  # C cast truncates toward zero
    if t < INT16_MIN:
        t = INT16_MIN
    elif t > INT16_MAX:
        t = INT16_MAX
    return <short>t


def mean_power(const double complex[::1] z):
    """Mean of i**2 + q**2 over the buffer."""
    cdef double acc = 0.0
    cdef Py_ssize_t k
    for k in range(z.shape[0]):
        acc += z[k].real * z[k].real + z[k].imag * z[k].imag
    return acc / z.shape[0]


def fft_pow2(const double complex[::1] z):
    """Iterative radix-2 FFT, unnormalized forward convention.

    Classic bit-reversal plus butterfly passes; twiddles advance by
    recurrence within each group. Input length must be a power of two.
    """
    cdef Py_ssize_t n = z.shape[0]
    if n & (n - 1):
        raise ValueError("fft_pow2 requires a power-of-two length")
    out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] x = out
    cdef Py_ssize_t i, j, bit
    # bit-reversal copy
    j = 0
    for i in range(n):
        x[j] = z[i]
        bit = n >> 1
        while bit and (j & bit):
            j ^= bit
            bit >>= 1
        j |= bit
    cdef Py_ssize_t size = 2, half, k, p
    cdef double complex wm, w, t, u
    cdef double ang
    while size <= n:
        half = size >> 1
        ang = -2.0 * 3.14159265358979323846 / size
        wm = cos(ang) + 1j * sin(ang)
        for k in range(0, n, size):
            w = 1.0
            for p in range(half):
                t = w * x[k + p + half]
                u = x[k + p]
                x[k + p] = u + t
                x[k + p + half] = u - t
                w = w * wm
        size <<= 1
    return out


def normalize_interleaved(const double complex[::1] z):
    """Zero-mean unit-variance interleaved (i0,q0,...) feature vector.

    Statistics over all 2N real components; divisor floored at 1e-12.
    """
    cdef Py_ssize_t n = z.shape[0], k
    out = np.empty(2 * n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double acc = 0.0, acc2 = 0.0, v
    for k in range(n):
        acc += z[k].real + z[k].imag
        acc2 += z[k].real * z[k].real + z[k].imag * z[k].imag
    cdef double mu = acc / (2 * n)
    cdef double var = acc2 / (2 * n) - mu * mu
    if var < 0.0:
        var = 0.0
    cdef double sigma = sqrt(var)
    if sigma < 1e-12:
        sigma = 1e-12
    for k in range(n):
        o[2 * k] = (z[k].real - mu) / sigma
        o[2 * k + 1] = (z[k].imag - mu) / sigma
    return out


def dense_forward(const double[::1] x, const double[:, ::1] w, const double[::1] b, bint relu):
    """One dense layer: w @ x + b, optional ReLU. w is (out, in)."""
    cdef Py_ssize_t n_out = w.shape[0], n_in = w.shape[1]
    out = np.empty(n_out, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n_out):
        acc = b[i]
        for j in range(n_in):
            acc += w[i, j] * x[j]
        if relu and acc < 0.0:
            acc = 0.0
        o[i] = acc
    return out


def conv1d_stride2_k3(const double[:, ::1] x, const double[:, :, ::1] w, const double[::1] b):
    """Width-3 convolution with stride 2 and one-sample zero padding.

    x is (c_in, length), w is (c_out, c_in, 3), output is (c_out, ceil(length/2)).
    """
    cdef Py_ssize_t c_in = x.shape[0], length = x.shape[1]
    cdef Py_ssize_t c_out = w.shape[0]
    cdef Py_ssize_t out_len = (length + 1) // 2
    out = np.empty((c_out, out_len), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t co, ci, t, k, src
    cdef double acc
    for co in range(c_out):
        for t in range(out_len):
            acc = b[co]
            for ci in range(c_in):
                for k in range(3):
                    src = 2 * t + k - 1
                    if 0 <= src < length:
                        acc += w[co, ci, k] * x[ci, src]
            o[co, t] = acc
    return out


def depthwise_conv1d_k3(const double[:, ::1] x, const double[:, ::1] w, const double[::1] b):
    """Per-channel width-3 convolution, stride 1, one-sample zero padding."""
    cdef Py_ssize_t channels = x.shape[0], length = x.shape[1]
    out = np.empty((channels, length), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t c, t
    cdef double acc
    for c in range(channels):
        for t in range(length):
            acc = b[c] + w[c, 1] * x[c, t]
            if t > 0:
                acc += w[c, 0] * x[c, t - 1]
            if t + 1 < length:
                acc += w[c, 2] * x[c, t + 1]
            o[c, t] = acc
    return out


def pointwise_conv1d(const double[:, ::1] x, const double[:, ::1] w, const double[::1] b):
    """1x1 convolution across channels: w @ x + b. w is (c_out, c_in)."""
    cdef Py_ssize_t c_in = x.shape[0], length = x.shape[1]
    cdef Py_ssize_t c_out = w.shape[0]
    out = np.empty((c_out, length), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t co, ci, t
    cdef double acc
    for co in range(c_out):
        for t in range(length):
            o[co, t] = b[co]
        for ci in range(c_in):
            for t in range(length):
                o[co, t] += w[co, ci] * x[ci, t]
    return out


def relu_inplace(double[:, ::1] x):
    cdef Py_ssize_t i, j
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            if x[i, j] < 0.0:
                x[i, j] = 0.0
    return np.asarray(x)


def maxpool1d_2(const double[:, ::1] x):
    """Max pooling with window 2 and stride 2; a trailing odd sample is dropped."""
    cdef Py_ssize_t channels = x.shape[0]
    cdef Py_ssize_t out_len = x.shape[1] // 2
    out = np.empty((channels, out_len), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t c, t
    cdef double a, bb
    for c in range(channels):
        for t in range(out_len):
            a = x[c, 2 * t]
            bb = x[c, 2 * t + 1]
            o[c, t] = a if a >= bb else bb
    return out


def global_avg_pool(const double[:, ::1] x):
    """Mean over the length axis of a (channels, length) activation."""
    cdef Py_ssize_t channels = x.shape[0], length = x.shape[1]
    out = np.empty(channels, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t c, t
    cdef double acc
    for c in range(channels):
        acc = 0.0
        for t in range(length):
            acc += x[c, t]
        o[c] = acc / length
    return out
