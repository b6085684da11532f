"""The four reference dApps: each maps an I/Q slot to a control decision.

They span the compute spectrum seen in real-time RAN inference work:

- EBS: mean-power threshold (statistical, cheapest)
- FFT: radix-2 spectrum peak detection (signal transform)
- FCN: dense 3072-512-256-128-2 network (lightweight ML)
- Xception-lite: 1-D depthwise-separable CNN (heavy ML)

All deciders are pure: the same buffer, config, and seed always produce
the same decision. Model weights are regenerated from a stored seed, so a
model "file" is a 13-byte header instead of serialized tensors.

Decision coupling is structural: an Occupied verdict always carries a
channel-change action targeting (current + 1) mod num_channels, and an
Unoccupied verdict is always a no-op.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import kernels
from .iq import IQBuffer, energy

MODEL_MAGIC = b"DWM1"
FCN_INPUT_SAMPLES = 1536
FCN_LAYER_DIMS = (3072, 512, 256, 128, 2)

# Xception-lite stack: entry conv (stride 2) then four depthwise-separable
# blocks, each ReLU + stride-2 max pool, then global average pool + dense.
XC_ENTRY_CHANNELS = 16
XC_BLOCK_CHANNELS = (32, 64, 128, 128)
XC_KERNEL = 3


class DappKind(IntEnum):
    EBS = 0
    FFT = 1
    FCN = 2
    XCEPTION_LITE = 3

    @classmethod
    def parse(cls, name: str) -> "DappKind":
        try:
            return cls[name.strip().upper().replace("-", "_")]
        except KeyError:
            raise ValueError(f"unknown dApp kind {name!r}") from None


class Verdict(IntEnum):
    UNOCCUPIED = 0
    OCCUPIED = 1


class ShapeMismatchError(ValueError):
    """Input buffer length does not match the model's expected shape."""


@dataclass(frozen=True)
class ChannelChange:
    target_channel: int


@dataclass(frozen=True)
class ControlDecision:
    """Policy output: occupancy verdict, optional channel change, and the
    statistic that drove the verdict (energy, peak bin magnitude, or logit)."""

    verdict: Verdict
    action: ChannelChange | None
    score: float

    def __post_init__(self) -> None:
        if (self.verdict is Verdict.OCCUPIED) != (self.action is not None):
            raise ValueError("Occupied requires a channel change, Unoccupied a no-op")


@dataclass(frozen=True)
class ChannelHint:
    """The loop's view of the serving channel, used to pick a change target."""

    current_channel: int = 0
    num_channels: int = 4


def _decide(occupied: bool, score: float, hint: ChannelHint) -> ControlDecision:
    if occupied:
        target = (hint.current_channel + 1) % hint.num_channels
        return ControlDecision(Verdict.OCCUPIED, ChannelChange(target), score)
    return ControlDecision(Verdict.UNOCCUPIED, None, score)


# --- EBS ---


@dataclass(frozen=True)
class EbsConfig:
    threshold: float  # mean-power units

    def __post_init__(self) -> None:
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")


def ebs_decide(buf: IQBuffer, cfg: EbsConfig, hint: ChannelHint = ChannelHint()) -> ControlDecision:
    """Occupied iff mean power reaches the threshold (tie counts as occupied)."""
    level = energy(buf)
    return _decide(level >= cfg.threshold, level, hint)


# --- FFT ---


@dataclass(frozen=True)
class FftConfig:
    bin_threshold: float  # on |X[k]| / fft_size

    def __post_init__(self) -> None:
        if not self.bin_threshold > 0:
            raise ValueError("bin_threshold must be positive")


@dataclass(frozen=True)
class Spectrum:
    """Unnormalized forward DFT bins over the zero-padded slot."""

    bins: np.ndarray
    fft_size: int


def next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


def fft_transform(buf: IQBuffer) -> Spectrum:
    """Zero-pad to the next power of two and run the radix-2 FFT."""
    m = next_pow2(len(buf))
    if m == len(buf):
        padded = buf.z
    else:
        padded = np.zeros(m, dtype=np.complex128)
        padded[: len(buf)] = buf.z
    return Spectrum(kernels.fft_pow2(padded), m)


def fft_decide(buf: IQBuffer, cfg: FftConfig, hint: ChannelHint = ChannelHint()) -> ControlDecision:
    """Occupied iff the peak normalized bin magnitude reaches the threshold."""
    spec = fft_transform(buf)
    peak = float(np.max(np.abs(spec.bins))) / spec.fft_size
    return _decide(peak >= cfg.bin_threshold, peak, hint)


# --- preprocessing shared by the neural workloads ---


def preprocess(buf: IQBuffer) -> np.ndarray:
    """Normalize to zero mean, unit variance over all 2N real components.

    Returns the interleaved (i0, q0, i1, q1, ...) feature vector; the
    divisor is floored at 1e-12 so a constant buffer maps to zeros.
    """
    if len(buf) < 2:
        raise ShapeMismatchError("preprocess needs at least two samples")
    return kernels.normalize_interleaved(buf.z)


def to_channel_layout(features: np.ndarray) -> np.ndarray:
    """Interleaved features to the (2, N) channel layout [I row, Q row]."""
    return np.ascontiguousarray(np.vstack((features[0::2], features[1::2])))


# --- FCN ---


@dataclass(frozen=True)
class FcnModel:
    """Dense 3072-512-256-128-2 network, ReLU on hidden layers."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    seed: int = 0

    @classmethod
    def from_seed(cls, seed: int) -> "FcnModel":
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for n_in, n_out in zip(FCN_LAYER_DIMS[:-1], FCN_LAYER_DIMS[1:]):
            bound = 1.0 / np.sqrt(n_in)
            weights.append(rng.uniform(-bound, bound, (n_out, n_in)))
            biases.append(rng.uniform(-bound, bound, n_out))
        return cls(tuple(weights), tuple(biases), seed)

    def logits(self, features: np.ndarray) -> np.ndarray:
        x = features
        last = len(self.weights) - 1
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = kernels.dense_forward(x, w, b, idx < last)
        return x

    def mac_count(self) -> int:
        """Multiply-accumulate operations for one forward pass."""
        return sum(w.size for w in self.weights)


def fcn_infer(buf: IQBuffer, model: FcnModel, hint: ChannelHint = ChannelHint()) -> ControlDecision:
    """Dense forward pass; argmax verdict, ties resolve to Unoccupied."""
    if len(buf) != FCN_INPUT_SAMPLES:
        raise ShapeMismatchError(f"FCN expects {FCN_INPUT_SAMPLES} samples, got {len(buf)}")
    logits = model.logits(preprocess(buf))
    winner = int(np.argmax(logits))  # first max wins, so a tie is Unoccupied
    return _decide(winner == Verdict.OCCUPIED, float(logits[winner]), hint)


# --- Xception-lite ---


@dataclass(frozen=True)
class XceptionLiteModel:
    """Entry conv + four depthwise-separable blocks + global pool + dense head.

    Channel widths run 16 -> 32 -> 64 -> 128 -> 128; every block is
    followed by ReLU and stride-2 max pooling.
    """

    entry_w: np.ndarray  # (entry, 2, 3)
    entry_b: np.ndarray
    blocks: tuple[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray], ...]
    head_w: np.ndarray  # (2, last_channels)
    head_b: np.ndarray
    seed: int = 0

    @classmethod
    def from_seed(cls, seed: int) -> "XceptionLiteModel":
        rng = np.random.default_rng(seed)

        def uniform(fan_in: int, shape) -> np.ndarray:
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, shape)

        entry_w = uniform(2 * XC_KERNEL, (XC_ENTRY_CHANNELS, 2, XC_KERNEL))
        entry_b = uniform(2 * XC_KERNEL, XC_ENTRY_CHANNELS)
        blocks = []
        c_in = XC_ENTRY_CHANNELS
        for c_out in XC_BLOCK_CHANNELS:
            dw_w = uniform(XC_KERNEL, (c_in, XC_KERNEL))
            dw_b = uniform(XC_KERNEL, c_in)
            pw_w = uniform(c_in, (c_out, c_in))
            pw_b = uniform(c_in, c_out)
            blocks.append((dw_w, dw_b, pw_w, pw_b))
            c_in = c_out
        head_w = uniform(c_in, (2, c_in))
        head_b = uniform(c_in, 2)
        return cls(entry_w, entry_b, tuple(blocks), head_w, head_b, seed)

    def logits(self, channels: np.ndarray) -> np.ndarray:
        x = kernels.conv1d_stride2_k3(channels, self.entry_w, self.entry_b)
        for dw_w, dw_b, pw_w, pw_b in self.blocks:
            x = kernels.depthwise_conv1d_k3(x, dw_w, dw_b)
            x = kernels.pointwise_conv1d(x, pw_w, pw_b)
            x = kernels.relu_inplace(x)
            x = kernels.maxpool1d_2(x)
        pooled = kernels.global_avg_pool(x)
        return kernels.dense_forward(pooled, self.head_w, self.head_b, False)

    def mac_count(self, input_len: int = FCN_INPUT_SAMPLES) -> int:
        """Multiply-accumulate operations for one forward pass."""
        length = (input_len + 1) // 2
        total = length * self.entry_w.size
        for dw_w, _, pw_w, _ in self.blocks:
            total += length * dw_w.size
            total += length * pw_w.size
            length //= 2
        return total + self.head_w.size


def xception_lite_infer(
    buf: IQBuffer, model: XceptionLiteModel, hint: ChannelHint = ChannelHint()
) -> ControlDecision:
    """Depthwise-separable CNN forward pass; argmax verdict, ties Unoccupied."""
    if len(buf) != FCN_INPUT_SAMPLES:
        raise ShapeMismatchError(f"Xception-lite expects {FCN_INPUT_SAMPLES} samples, got {len(buf)}")
    logits = model.logits(to_channel_layout(preprocess(buf)))
    winner = int(np.argmax(logits))
    return _decide(winner == Verdict.OCCUPIED, float(logits[winner]), hint)


# --- model container ---


def save_model(path, kind: DappKind, seed: int) -> None:
    """Write the flat model container: magic, kind tag, seed.

    Only the neural kinds have models; weights are regenerated from the
    seed on load, never serialized.
    """
    if kind not in (DappKind.FCN, DappKind.XCEPTION_LITE):
        raise ValueError(f"{kind.name} has no model file")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC + struct.pack("<BQ", int(kind), seed))


def load_model(path) -> FcnModel | XceptionLiteModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) != len(MODEL_MAGIC) + 9 or not blob.startswith(MODEL_MAGIC):
        raise ValueError("not a model container")
    kind_tag, seed = struct.unpack("<BQ", blob[4:])
    if kind_tag == DappKind.FCN:
        return FcnModel.from_seed(seed)
    if kind_tag == DappKind.XCEPTION_LITE:
        return XceptionLiteModel.from_seed(seed)
    raise ValueError(f"kind tag {kind_tag} has no model")


# --- decider factory used by the loop runtime ---


@dataclass(frozen=True)
class WorkloadParams:
    """Per-scenario workload configuration shared across instances."""

    ebs_threshold: float = 0.05
    fft_bin_threshold: float = 0.05
    model_seed: int = 0


# Models are deterministic in the seed and immutable, so one copy per
# process serves every instance. The fleet runner warms this cache before
# forking workers, which keeps weight generation out of the timed loops.
_MODEL_CACHE: dict[tuple[DappKind, int], FcnModel | XceptionLiteModel] = {}


def get_model(kind: DappKind, seed: int) -> FcnModel | XceptionLiteModel:
    key = (kind, seed)
    if key not in _MODEL_CACHE:
        if kind is DappKind.FCN:
            _MODEL_CACHE[key] = FcnModel.from_seed(seed)
        elif kind is DappKind.XCEPTION_LITE:
            _MODEL_CACHE[key] = XceptionLiteModel.from_seed(seed)
        else:
            raise ValueError(f"{kind.name} has no model")
    return _MODEL_CACHE[key]


def make_decider(kind: DappKind, params: WorkloadParams):
    """Bind a kind to its config/model; returns decide(buf, hint) -> decision."""
    if kind is DappKind.EBS:
        cfg = EbsConfig(params.ebs_threshold)
        return lambda buf, hint: ebs_decide(buf, cfg, hint)
    if kind is DappKind.FFT:
        fcfg = FftConfig(params.fft_bin_threshold)
        return lambda buf, hint: fft_decide(buf, fcfg, hint)
    if kind is DappKind.FCN:
        model = get_model(kind, params.model_seed)
        return lambda buf, hint: fcn_infer(buf, model, hint)
    if kind is DappKind.XCEPTION_LITE:
        xmodel = get_model(kind, params.model_seed)
        return lambda buf, hint: xception_lite_infer(buf, xmodel, hint)
    raise ValueError(f"unknown kind {kind!r}")
