"""Acoustic-model description, int8 quantization, FC partitioning and the
model file formats.

Layers are data: a descriptor lists conv1d / fc / layernorm layers with
their dimensions, flags and quantization scales; weights live in a little-
endian binary file.  A structured-text form of the descriptor exists for
tests and for the asset generator (weights are then drawn from a seed).
"""

import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError

MAGIC = b"APUM"
VERSION = 1

_KIND_CODES = {"conv1d": 0, "fc": 1, "layernorm": 2}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


@dataclass
class LayerSpec:
    """One logical layer of the acoustic model."""

    kind: str  # conv1d | fc | layernorm
    d_in: int
    d_out: int
    width: int = 1
    stride: int = 1
    groups: int = 1
    relu: bool = False
    residual: bool = False
    log_softmax: bool = False
    in_scale: float = 1.0  # int8 scale of the input activations
    w_scale: float = 1.0
    out_scale: float = 1.0  # int8 scale of the output activations
    weights: np.ndarray = None  # int8; see weight_shape
    bias: np.ndarray = None  # float32
    gamma: np.ndarray = None  # float32 (layernorm)
    beta: np.ndarray = None  # float32 (layernorm)

    @property
    def channels_per_group(self):
        return self.d_in // self.groups

    def weight_shape(self):
        if self.kind == "fc":
            return (self.d_out, self.d_in)
        if self.kind == "conv1d":
            if self.groups == 1:
                return (self.width, self.d_out, self.d_in)
            # grouped convs share one (width, c, c) filter across all groups
            c = self.channels_per_group
            return (self.width, c, c)
        return None

    def weight_bytes(self):
        shape = self.weight_shape()
        return 0 if shape is None else int(np.prod(shape))

    def validate(self):
        if self.kind not in _KIND_CODES:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if self.d_in <= 0 or self.d_out <= 0:
            raise ConfigurationError("layer dims must be positive")
        if self.kind == "conv1d":
            if self.width < 1 or self.stride < 1:
                raise ConfigurationError("conv width/stride must be >= 1")
            if self.groups > 1:
                if self.d_in != self.d_out:
                    raise ConfigurationError("grouped conv requires d_in == d_out")
                if self.d_in % self.groups:
                    raise ConfigurationError("groups must divide the channel count")
        if self.kind == "layernorm" and self.d_in != self.d_out:
            raise ConfigurationError("layernorm keeps the feature dimension")
        if self.residual and self.d_in != self.d_out:
            raise ConfigurationError("residual add requires d_in == d_out")
        return self


@dataclass
class ModelDescriptor:
    """Ordered layer list plus the output token inventory size."""

    layers: list
    n_tokens: int
    name: str = "model"

    def validate(self):
        if not self.layers:
            raise ConfigurationError("model has no layers")
        prev = None
        for ls in self.layers:
            ls.validate()
            if prev is not None and ls.d_in != prev.d_out:
                raise ConfigurationError(
                    f"layer dims mismatch: {prev.kind} emits {prev.d_out}, "
                    f"{ls.kind} expects {ls.d_in}"
                )
            prev = ls
        if self.layers[-1].d_out != self.n_tokens:
            raise ConfigurationError("final layer must emit n_tokens scores")
        return self

    @property
    def subsample_factor(self):
        s = 1
        for ls in self.layers:
            if ls.kind == "conv1d":
                s *= ls.stride
        return s

    def kind_counts(self):
        counts = {"conv1d": 0, "fc": 0, "layernorm": 0}
        for ls in self.layers:
            counts[ls.kind] += 1
        return counts


def quantize(values, scale):
    """Symmetric per-tensor int8 quantization (round-half-even, clamp 127)."""

    q = np.rint(np.asarray(values, dtype=np.float64) / scale)
    return np.clip(q, -127, 127).astype(np.int8)


def dequantize(values, scale):
    return np.asarray(values, dtype=np.float64) * scale


def partition_fc(layer, model_mem_bytes):
    """Split an FC layer into contiguous neuron ranges that fit model memory.

    Uses the minimal number of equal-size (+-1) ranges whose int8 weight
    payloads each fit; concatenating the range outputs reproduces the whole
    layer exactly.
    """

    if layer.kind != "fc":
        raise ConfigurationError("only fc layers are partitioned")
    bytes_per_neuron = layer.d_in
    max_neurons = model_mem_bytes // bytes_per_neuron
    if max_neurons < 1:
        raise ConfigurationError(
            f"a single neuron's weights ({bytes_per_neuron} bytes) exceed "
            f"model memory ({model_mem_bytes} bytes)"
        )
    n_parts = -(-layer.d_out // max_neurons)
    base = layer.d_out // n_parts
    extra = layer.d_out % n_parts
    ranges = []
    lo = 0
    for p in range(n_parts):
        hi = lo + base + (1 if p < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    return ranges


# -- binary model file ----------------------------------------------------

_LAYER_HEADER = struct.Struct("<BIIIIIBfff")  # kind, dims, flags, scales


def write_model(descriptor, fh):
    fh.write(MAGIC)
    fh.write(struct.pack("<II", VERSION, len(descriptor.layers)))
    fh.write(struct.pack("<I", descriptor.n_tokens))
    for ls in descriptor.layers:
        flags = (ls.relu << 0) | (ls.residual << 1) | (ls.log_softmax << 2)
        fh.write(
            _LAYER_HEADER.pack(
                _KIND_CODES[ls.kind], ls.d_in, ls.d_out, ls.width, ls.stride,
                ls.groups, flags, ls.in_scale, ls.w_scale, ls.out_scale,
            )
        )
        if ls.kind == "layernorm":
            fh.write(ls.gamma.astype("<f4").tobytes())
            fh.write(ls.beta.astype("<f4").tobytes())
        else:
            fh.write(ls.weights.astype(np.int8).tobytes())
            fh.write(ls.bias.astype("<f4").tobytes())


def read_model(fh):
    def take(n):
        data = fh.read(n)
        if len(data) != n:
            raise InputError("truncated model file")
        return data

    if take(4) != MAGIC:
        raise InputError("not a model file (bad magic)")
    version, n_layers = struct.unpack("<II", take(8))
    if version != VERSION:
        raise InputError(f"unsupported model file version {version}")
    (n_tokens,) = struct.unpack("<I", take(4))
    layers = []
    for _ in range(n_layers):
        kind_code, d_in, d_out, width, stride, groups, flags, s_in, s_w, s_out = (
            _LAYER_HEADER.unpack(take(_LAYER_HEADER.size))
        )
        ls = LayerSpec(
            kind=_KIND_NAMES[kind_code], d_in=d_in, d_out=d_out, width=width,
            stride=stride, groups=groups,
            relu=bool(flags & 1), residual=bool(flags & 2),
            log_softmax=bool(flags & 4),
            in_scale=s_in, w_scale=s_w, out_scale=s_out,
        )
        if ls.kind == "layernorm":
            ls.gamma = np.frombuffer(take(4 * d_in), dtype="<f4").copy()
            ls.beta = np.frombuffer(take(4 * d_in), dtype="<f4").copy()
        else:
            shape = ls.weight_shape()
            ls.weights = (
                np.frombuffer(take(int(np.prod(shape))), dtype=np.int8)
                .reshape(shape)
                .copy()
            )
            nb = d_out if ls.kind == "fc" else (ls.channels_per_group if ls.groups > 1 else d_out)
            ls.bias = np.frombuffer(take(4 * nb), dtype="<f4").copy()
        layers.append(ls)
    return ModelDescriptor(layers, n_tokens).validate()


def save_model(descriptor, path):
    with open(path, "wb") as fh:
        write_model(descriptor, fh)


def load_model(path):
    try:
        with open(path, "rb") as fh:
            return read_model(fh)
    except OSError as e:
        raise InputError(f"cannot read model file {path}: {e}") from e


# -- structured-text descriptor (tests, asset generation) ------------------

def parse_descriptor_text(text):
    """Parse the structured-text layer list (no weights).

    Lines: ``conv1d d_in d_out width stride groups [relu] [residual]``,
    ``fc d_in d_out [relu] [residual] [log_softmax]``, ``layernorm d``;
    one ``tokens N`` line sets the token inventory size.
    """

    layers = []
    n_tokens = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        head = parts[0]
        try:
            if head == "tokens":
                n_tokens = int(parts[1])
            elif head == "conv1d":
                d_in, d_out, width, stride, groups = map(int, parts[1:6])
                flags = set(parts[6:])
                layers.append(
                    LayerSpec("conv1d", d_in, d_out, width, stride, groups,
                              relu="relu" in flags, residual="residual" in flags)
                )
            elif head == "fc":
                d_in, d_out = map(int, parts[1:3])
                flags = set(parts[3:])
                layers.append(
                    LayerSpec("fc", d_in, d_out,
                              relu="relu" in flags, residual="residual" in flags,
                              log_softmax="log_softmax" in flags)
                )
            elif head == "layernorm":
                d = int(parts[1])
                layers.append(LayerSpec("layernorm", d, d))
            else:
                raise InputError(f"line {lineno}: unknown layer kind {head!r}")
        except (IndexError, ValueError) as e:
            raise InputError(f"line {lineno}: bad layer spec {line!r}") from e
    if n_tokens is None:
        n_tokens = layers[-1].d_out if layers else 0
    return ModelDescriptor(layers, n_tokens)


def materialize_weights(descriptor, seed=0, in_scale0=0.5):
    """Fill a descriptor with pseudo-random int8 weights from a seed.

    Scales are chosen so activations stay in a sane range; the input scale
    of each layer is wired to the producing layer's output scale.
    """

    rng = np.random.default_rng(seed)
    scale = in_scale0
    for ls in descriptor.layers:
        ls.in_scale = scale
        if ls.kind == "layernorm":
            ls.gamma = (0.8 + 0.4 * rng.random(ls.d_in)).astype(np.float32)
            ls.beta = (0.2 * rng.random(ls.d_in) - 0.1).astype(np.float32)
            ls.out_scale = 0.02  # normalized outputs are O(1)
        else:
            shape = ls.weight_shape()
            ls.weights = rng.integers(-31, 32, size=shape).astype(np.int8)
            fan_in = ls.d_in if ls.kind == "fc" else ls.width * ls.channels_per_group
            # keep pre-activations O(1): int8 acts ~ +-40, weights ~ +-18 rms
            ls.w_scale = float(1.0 / (18.0 * 40.0 * scale * np.sqrt(fan_in)))
            nb = ls.d_out if (ls.kind == "fc" or ls.groups == 1) else ls.channels_per_group
            ls.bias = (0.1 * rng.standard_normal(nb)).astype(np.float32)
            ls.out_scale = 0.02
        scale = ls.out_scale
    descriptor.validate()
    return descriptor


def log_softmax(scores):
    """Numerically stable log-softmax over the last axis."""

    x = np.asarray(scores, dtype=np.float64)
    m = x.max(axis=-1, keepdims=True)
    z = x - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def model_to_bytes(descriptor):
    buf = io.BytesIO()
    write_model(descriptor, buf)
    return buf.getvalue()
