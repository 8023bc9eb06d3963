"""Network container: layer stack, flat parameter vector, checkpoints.

The flat parameter vector uses one canonical order everywhere (training,
aggregation, masking, serialization): layers in order, within a layer the
output channels in order, within a channel the fan-in weights row-major
followed by that channel's bias. Each channel therefore owns one
contiguous slice of the vector.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from fpsim.nn.layers import (
    Conv2D,
    Dense,
    Flatten,
    GlobalAvgPool,
    Layer,
    MaxPool2D,
    ReLU,
    ShapeError,
)

CHECKPOINT_MAGIC = b"FPNN"
CHECKPOINT_VERSION = 1

_KIND_CODES = {
    "dense": 1,
    "conv2d": 2,
    "relu": 3,
    "maxpool2d": 4,
    "globalavgpool": 5,
    "flatten": 6,
}


class Network:
    """An ordered layer stack with shape checking and a flat parameter view."""

    def __init__(self, layers: list[Layer], input_shape: tuple):
        self.layers = layers
        self.input_shape = tuple(int(d) for d in input_shape)
        # Shape-inference pass; raises ShapeError naming the offending layer.
        self.layer_in_shapes = []
        shape = self.input_shape
        for li, layer in enumerate(layers):
            self.layer_in_shapes.append(shape)
            try:
                shape = layer.out_shape(shape)
            except ShapeError as e:
                raise ShapeError(f"layer {li} ({layer.kind}): {e}") from None
        self.output_shape = shape

    # ---- parameter bookkeeping -------------------------------------------

    @property
    def param_layers(self) -> list[tuple[int, Layer]]:
        return [(li, l) for li, l in enumerate(self.layers) if l.has_params]

    @property
    def param_count(self) -> int:
        return sum(l.weights.size + l.bias.size for _, l in self.param_layers)

    def parameter_index(self) -> list[tuple[int, int, int, int]]:
        """Canonical (layer_index, channel_index, start, stop) per channel."""
        out = []
        pos = 0
        for li, layer in self.param_layers:
            cout = layer.weights.shape[0]
            fan_in = layer.weights[0].size
            for ch in range(cout):
                out.append((li, ch, pos, pos + fan_in + 1))
                pos += fan_in + 1
        return out

    def get_params(self) -> np.ndarray:
        """Flat float32 copy of all trainable parameters in canonical order."""
        parts = []
        for _, layer in self.param_layers:
            cout = layer.weights.shape[0]
            seg = np.empty((cout, layer.weights[0].size + 1), np.float32)
            seg[:, :-1] = layer.weights.reshape(cout, -1)
            seg[:, -1] = layer.bias
            parts.append(seg.reshape(-1))
        if not parts:
            return np.empty(0, np.float32)
        return np.concatenate(parts)

    def set_params(self, vec: np.ndarray):
        if vec.shape != (self.param_count,):
            raise ValueError(
                f"parameter vector length {vec.shape} != ({self.param_count},)"
            )
        vec = np.asarray(vec, np.float32)
        pos = 0
        for _, layer in self.param_layers:
            cout = layer.weights.shape[0]
            fan_in = layer.weights[0].size
            seg = vec[pos : pos + cout * (fan_in + 1)].reshape(cout, fan_in + 1)
            layer.weights = np.ascontiguousarray(
                seg[:, :-1].reshape(layer.weights.shape)
            )
            layer.bias = np.ascontiguousarray(seg[:, -1])
            pos += cout * (fan_in + 1)

    # ---- forward / backward ----------------------------------------------

    def forward(self, batch: np.ndarray, cache: bool = False) -> np.ndarray:
        x = np.ascontiguousarray(batch, np.float32)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(
                f"network expects input {self.input_shape} per sample, "
                f"got {x.shape[1:]}"
            )
        for li, layer in enumerate(self.layers):
            try:
                x = layer.forward(x, cache=cache)
            except ShapeError as e:
                raise ShapeError(f"layer {li} ({layer.kind}): {e}") from None
        return x

    def backward(self, logit_grad: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. all parameters, canonical order. Needs cached forward."""
        g = np.ascontiguousarray(logit_grad, np.float32)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        parts = []
        for _, layer in self.param_layers:
            cout = layer.weights.shape[0]
            seg = np.empty((cout, layer.weights[0].size + 1), np.float32)
            seg[:, :-1] = layer.grad_w.reshape(cout, -1)
            seg[:, -1] = layer.grad_b
            parts.append(seg.reshape(-1))
        return np.concatenate(parts) if parts else np.empty(0, np.float32)

    def clear_caches(self):
        for layer in self.layers:
            layer.clear_cache()

    def clone(self) -> "Network":
        """Fresh Network with the same architecture and copied parameters."""
        net = Network(_rebuild_layers(self.layers), self.input_shape)
        net.set_params(self.get_params())
        return net


def _rebuild_layers(layers: list[Layer]) -> list[Layer]:
    out = []
    for l in layers:
        if isinstance(l, Dense):
            out.append(Dense(l.in_features, l.out_features))
        elif isinstance(l, Conv2D):
            out.append(Conv2D(l.in_channels, l.out_channels, l.kernel, l.pad))
        elif isinstance(l, ReLU):
            out.append(ReLU())
        elif isinstance(l, MaxPool2D):
            out.append(MaxPool2D(l.k))
        elif isinstance(l, GlobalAvgPool):
            out.append(GlobalAvgPool())
        elif isinstance(l, Flatten):
            out.append(Flatten())
        else:
            raise TypeError(f"unknown layer type {type(l)!r}")
    return out


# ---- initialization --------------------------------------------------------


def he_uniform_init(net: Network, rng: np.random.Generator):
    """He-uniform weights (limit sqrt(6/fan_in)), zero biases, in layer order."""
    for _, layer in net.param_layers:
        fan_in = layer.weights[0].size
        limit = np.sqrt(6.0 / fan_in)
        layer.weights = rng.uniform(-limit, limit, layer.weights.shape).astype(
            np.float32
        )
        layer.bias = np.zeros_like(layer.bias)


def build_cnn(
    input_shape: tuple,
    num_classes: int,
    conv_channels: list[int] = (8, 16),
    dense_units: list[int] = (64,),
    rng: np.random.Generator | None = None,
) -> Network:
    """Plain CNN: [conv3x3-same + relu + pool2] per conv stage, then a dense
    head with relu between hidden units, ending in a linear classifier."""
    c, h, w = input_shape
    layers: list[Layer] = []
    prev = c
    for ch in conv_channels:
        layers += [Conv2D(prev, int(ch), kernel=3, pad=1), ReLU(), MaxPool2D(2)]
        prev = int(ch)
        h //= 2
        w //= 2
        if h < 1 or w < 1:
            raise ShapeError("too many conv stages for the input resolution")
    layers.append(Flatten())
    feat = prev * h * w
    for units in dense_units:
        layers += [Dense(feat, int(units)), ReLU()]
        feat = int(units)
    layers.append(Dense(feat, num_classes))
    net = Network(layers, input_shape)
    if rng is not None:
        he_uniform_init(net, rng)
    return net


# ---- checkpoint I/O --------------------------------------------------------


def _write_arch(buf: io.BytesIO, net: Network):
    buf.write(struct.pack("<3I", *net.input_shape))
    buf.write(struct.pack("<H", len(net.layers)))
    for layer in net.layers:
        buf.write(struct.pack("<B", _KIND_CODES[layer.kind]))
        if isinstance(layer, Dense):
            buf.write(struct.pack("<2I", layer.in_features, layer.out_features))
        elif isinstance(layer, Conv2D):
            buf.write(
                struct.pack(
                    "<4I", layer.in_channels, layer.out_channels, layer.kernel,
                    layer.pad,
                )
            )
        elif isinstance(layer, MaxPool2D):
            buf.write(struct.pack("<I", layer.k))


def _read_arch(buf: io.BytesIO) -> Network:
    input_shape = struct.unpack("<3I", buf.read(12))
    (n_layers,) = struct.unpack("<H", buf.read(2))
    codes = {v: k for k, v in _KIND_CODES.items()}
    layers: list[Layer] = []
    for _ in range(n_layers):
        (code,) = struct.unpack("<B", buf.read(1))
        kind = codes.get(code)
        if kind == "dense":
            fi, fo = struct.unpack("<2I", buf.read(8))
            layers.append(Dense(fi, fo))
        elif kind == "conv2d":
            ci, co, k, p = struct.unpack("<4I", buf.read(16))
            layers.append(Conv2D(ci, co, k, p))
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "maxpool2d":
            (k,) = struct.unpack("<I", buf.read(4))
            layers.append(MaxPool2D(k))
        elif kind == "globalavgpool":
            layers.append(GlobalAvgPool())
        elif kind == "flatten":
            layers.append(Flatten())
        else:
            raise ValueError(f"checkpoint contains unknown layer code {code}")
    return Network(layers, input_shape)


def save_checkpoint(net: Network, path: str):
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<H", CHECKPOINT_VERSION))
    _write_arch(buf, net)
    params = net.get_params()
    buf.write(params.astype("<f4").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path: str) -> Network:
    with open(path, "rb") as f:
        buf = io.BytesIO(f.read())
    if buf.read(4) != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic)")
    (version,) = struct.unpack("<H", buf.read(2))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    net = _read_arch(buf)
    raw = buf.read(4 * net.param_count)
    params = np.frombuffer(raw, dtype="<f4").astype(np.float32)
    if params.size != net.param_count:
        raise ValueError(
            f"{path}: parameter buffer holds {params.size} values, "
            f"architecture needs {net.param_count}"
        )
    if not np.all(np.isfinite(params)):
        raise ValueError(f"{path}: parameter buffer contains NaN/Inf")
    net.set_params(params)
    return net
