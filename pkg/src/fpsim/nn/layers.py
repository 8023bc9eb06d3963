"""Layer zoo: dense, conv2d, relu, maxpool2d, globalavgpool, flatten.

Every layer follows the same small protocol:

    y = layer.forward(x, cache=True)   # cache=True keeps what backward needs
    gx = layer.backward(gy)            # also fills layer.grad_w / grad_b

Tensors are numpy float32 arrays throughout; accumulation happens in
float64 inside the kernels. Parameterized layers expose ``weights`` and
``bias``; the rest keep both as None.
"""

from __future__ import annotations

import numpy as np

from fpsim import _kernels as K


class ShapeError(ValueError):
    """Input shape does not match what the layer expects."""


class MissingCacheError(RuntimeError):
    """backward() was called without a cached forward pass."""


class Layer:
    kind = "?"
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None

    def __init__(self):
        self.cached_input = None
        self.grad_w = None
        self.grad_b = None

    @property
    def has_params(self) -> bool:
        return self.weights is not None

    def out_shape(self, in_shape: tuple) -> tuple:
        """Per-sample output shape for a per-sample input shape."""
        raise NotImplementedError

    def forward(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def clear_cache(self):
        self.cached_input = None

    def _need_cache(self):
        if self.cached_input is None:
            raise MissingCacheError(
                f"{self.kind} layer has no cached forward pass; "
                "call forward(x, cache=True) first"
            )

    def __repr__(self):
        return f"{type(self).__name__}({self.kind})"


class Dense(Layer):
    """Affine map [B, in_features] -> [B, out_features]."""

    kind = "dense"

    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weights = np.zeros((out_features, in_features), np.float32)
        self.bias = np.zeros(out_features, np.float32)

    def out_shape(self, in_shape):
        if in_shape != (self.in_features,):
            raise ShapeError(
                f"dense expects input ({self.in_features},), got {in_shape}"
            )
        return (self.out_features,)

    def forward(self, x, cache=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(
                f"dense expects [batch, {self.in_features}], got {x.shape}"
            )
        if cache:
            self.cached_input = x
        return K.dense_fwd(x, self.weights, self.bias)

    def backward(self, gy):
        self._need_cache()
        self.grad_w, self.grad_b = K.dense_bwd_params(self.cached_input, gy)
        return K.dense_bwd_input(gy, self.weights)


class Conv2D(Layer):
    """Stride-1 2-D convolution with optional zero padding.

    weights: [out_channels, in_channels, kh, kw], bias: [out_channels].
    """

    kind = "conv2d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int, pad: int = 0):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.pad = pad
        self.weights = np.zeros(
            (out_channels, in_channels, kernel, kernel), np.float32
        )
        self.bias = np.zeros(out_channels, np.float32)

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_channels:
            raise ShapeError(
                f"conv2d expects input ({self.in_channels}, H, W), got {in_shape}"
            )
        _, h, w = in_shape
        ho = h + 2 * self.pad - self.kernel + 1
        wo = w + 2 * self.pad - self.kernel + 1
        if ho < 1 or wo < 1:
            raise ShapeError(
                f"conv2d kernel {self.kernel} too large for input {in_shape} "
                f"with pad {self.pad}"
            )
        return (self.out_channels, ho, wo)

    def forward(self, x, cache=False):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"conv2d expects [batch, {self.in_channels}, H, W], got {x.shape}"
            )
        if cache:
            self.cached_input = x
        return K.conv2d_fwd(x, self.weights, self.bias, self.pad)

    def backward(self, gy):
        self._need_cache()
        x = self.cached_input
        self.grad_w, self.grad_b = K.conv2d_bwd_params(
            x, gy, self.pad, self.kernel, self.kernel
        )
        return K.conv2d_bwd_input(gy, self.weights, self.pad, x.shape[2], x.shape[3])


class ReLU(Layer):
    kind = "relu"

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, cache=False):
        if cache:
            self.cached_input = x
        return np.maximum(x, np.float32(0.0))

    def backward(self, gy):
        self._need_cache()
        return np.where(self.cached_input > 0, gy, np.float32(0.0))


class MaxPool2D(Layer):
    """Non-overlapping k x k max pooling; H and W must be divisible by k.

    The winning cell per window is remembered as a flat index into the
    H*W plane (ties go to the lowest flat index), which both backward and
    relevance routing reuse.
    """

    kind = "maxpool2d"

    def __init__(self, k: int = 2):
        super().__init__()
        self.k = k
        self.cached_idx = None

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if h % self.k or w % self.k:
            raise ShapeError(
                f"maxpool2d({self.k}) needs H, W divisible by {self.k}, got {in_shape}"
            )
        return (c, h // self.k, w // self.k)

    def forward(self, x, cache=False):
        y, idx = K.maxpool2d_fwd(x, self.k)
        if cache:
            self.cached_input = x
            self.cached_idx = idx
        return y

    def backward(self, gy):
        self._need_cache()
        h, w = self.cached_input.shape[2], self.cached_input.shape[3]
        return K.maxpool2d_scatter(gy, self.cached_idx, h, w)

    def clear_cache(self):
        self.cached_input = None
        self.cached_idx = None


class GlobalAvgPool(Layer):
    """Mean over the spatial plane: [B, C, H, W] -> [B, C]."""

    kind = "globalavgpool"

    def out_shape(self, in_shape):
        c, _, _ = in_shape
        return (c,)

    def forward(self, x, cache=False):
        if cache:
            self.cached_input = x
        return x.astype(np.float64).mean(axis=(2, 3)).astype(np.float32)

    def backward(self, gy):
        self._need_cache()
        _, _, h, w = self.cached_input.shape
        scale = np.float32(1.0 / (h * w))
        return np.broadcast_to(
            (gy * scale)[:, :, None, None], self.cached_input.shape
        ).astype(np.float32)


class Flatten(Layer):
    kind = "flatten"

    def out_shape(self, in_shape):
        n = 1
        for d in in_shape:
            n *= d
        return (n,)

    def forward(self, x, cache=False):
        if cache:
            self.cached_input = x
        return np.ascontiguousarray(x.reshape(x.shape[0], -1))

    def backward(self, gy):
        self._need_cache()
        return np.ascontiguousarray(gy.reshape(self.cached_input.shape))
