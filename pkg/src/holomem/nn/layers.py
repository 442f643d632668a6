"""Layer primitives with hand-derived forward/backward passes.

Every layer operates on batches: feature maps are (B, C, H, W), vectors are
(B, U). Forward passes cache whatever the backward pass needs (input
patches, pool argmax, dropout masks); backward passes consume the cache and
store parameter gradients on the layer (dfilters/dbiases, dweights/dbiases).
All arrays are float64.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Conv2D",
    "Dense",
    "LeakyReLU",
    "ReLU",
    "MaxPool2x2",
    "Dropout",
    "Flatten",
    "Softmax",
    "glorot_uniform",
]


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    """Zero-mean uniform init with scale sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base layer: stateless unless a subclass adds parameters or caches."""

    trainable = False

    def forward(self, x: np.ndarray, training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []


class Conv2D(Layer):
    """2-D convolution with stride 1 and fixed "same" zero padding.

    filters: (out_channels, in_channels, k, k), k odd; one bias per output
    channel. Applies no activation; pair with LeakyReLU/ReLU explicitly.
    """

    trainable = True

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator | None = None):
        if kernel_size % 2 != 1:
            raise ValueError(f"kernel size must be odd for same padding, got {kernel_size}")
        if out_channels < 1:
            raise ValueError(f"need at least one filter, got {out_channels}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.k = kernel_size
        self.pad = (kernel_size - 1) // 2
        fan_in = in_channels * kernel_size * kernel_size
        fan_out = out_channels * kernel_size * kernel_size
        if rng is None:
            rng = np.random.default_rng()
        self.filters = glorot_uniform(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in, fan_out)
        self.biases = np.zeros(out_channels)
        self.dfilters = np.zeros_like(self.filters)
        self.dbiases = np.zeros_like(self.biases)
        self._cols: np.ndarray | None = None
        self._in_shape: tuple[int, ...] | None = None

    def forward(self, x, training=False, rng=None):
        b, c, h, w = x.shape
        if c != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {c}")
        p = self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        # (b, c, h, w, k, k) patch view -> im2col matrix (b*h*w, c*k*k)
        win = sliding_window_view(xp, (self.k, self.k), axis=(2, 3))
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, c * self.k * self.k)
        wmat = self.filters.reshape(self.out_channels, -1)
        out = cols @ wmat.T + self.biases
        self._cols = cols
        self._in_shape = x.shape
        return out.reshape(b, h, w, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, grad):
        if self._cols is None:
            raise RuntimeError("backward called without a cached forward")
        b, c, h, w = self._in_shape
        g = grad.transpose(0, 2, 3, 1).reshape(b * h * w, self.out_channels)
        self.dfilters = (g.T @ self._cols).reshape(self.filters.shape)
        self.dbiases = g.sum(axis=0)
        dcols = (g @ self.filters.reshape(self.out_channels, -1)).reshape(b, h, w, c, self.k, self.k)
        p = self.pad
        dxp = np.zeros((b, c, h + 2 * p, w + 2 * p))
        for i in range(self.k):
            for j in range(self.k):
                dxp[:, :, i:i + h, j:j + w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, p:p + h, p:p + w]

    def params(self):
        return [self.filters, self.biases]

    def grads(self):
        return [self.dfilters, self.dbiases]


class Dense(Layer):
    """Affine layer y = W x + b with weights (out_units, in_units)."""

    trainable = True

    def __init__(self, in_units: int, out_units: int, rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng()
        self.weights = glorot_uniform(rng, (out_units, in_units), in_units, out_units)
        self.biases = np.zeros(out_units)
        self.dweights = np.zeros_like(self.weights)
        self.dbiases = np.zeros_like(self.biases)
        self._x: np.ndarray | None = None

    def forward(self, x, training=False, rng=None):
        if x.shape[1] != self.weights.shape[1]:
            raise ValueError(f"expected {self.weights.shape[1]} inputs, got {x.shape[1]}")
        self._x = x
        return x @ self.weights.T + self.biases

    def backward(self, grad):
        if self._x is None:
            raise RuntimeError("backward called without a cached forward")
        self.dweights = grad.T @ self._x
        self.dbiases = grad.sum(axis=0)
        return grad @ self.weights

    def params(self):
        return [self.weights, self.biases]

    def grads(self):
        return [self.dweights, self.dbiases]


class LeakyReLU(Layer):
    """f(x) = x for x > 0, else 0.01 x. Derivative at 0 is pinned to 0.01."""

    def __init__(self, slope: float = 0.01):
        self.slope = slope
        self._pos: np.ndarray | None = None

    def forward(self, x, training=False, rng=None):
        self._pos = x > 0
        return np.where(self._pos, x, self.slope * x)

    def backward(self, grad):
        if self._pos is None:
            raise RuntimeError("backward called without a cached forward")
        return grad * np.where(self._pos, 1.0, self.slope)


class ReLU(Layer):
    def __init__(self):
        self._pos: np.ndarray | None = None

    def forward(self, x, training=False, rng=None):
        self._pos = x > 0
        return np.where(self._pos, x, 0.0)

    def backward(self, grad):
        if self._pos is None:
            raise RuntimeError("backward called without a cached forward")
        return grad * self._pos


class MaxPool2x2(Layer):
    """Max over disjoint 2x2 blocks; gradients route to the argmax position
    (first occurrence on ties, which keeps the backward pass deterministic)."""

    def __init__(self):
        self._idx: np.ndarray | None = None
        self._in_shape: tuple[int, ...] | None = None

    def forward(self, x, training=False, rng=None):
        b, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"spatial dims must be even for 2x2 pooling, got {h}x{w}")
        blocks = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
        self._idx = blocks.argmax(axis=-1)
        self._in_shape = x.shape
        return np.take_along_axis(blocks, self._idx[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        if self._idx is None:
            raise RuntimeError("backward called without a cached forward")
        b, c, ho, wo = grad.shape
        dblocks = np.zeros((b, c, ho, wo, 4))
        np.put_along_axis(dblocks, self._idx[..., None], grad[..., None], axis=-1)
        return dblocks.reshape(b, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(self._in_shape)


class Dropout(Layer):
    """Inverted dropout: units are zeroed with probability `rate` during
    training and survivors scaled by 1/(1-rate); inference is the identity
    and consumes no randomness."""

    def __init__(self, rate: float):
        if not (0.0 <= rate < 1.0):
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._mask: np.ndarray | None = None

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs an RNG")
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) >= self.rate) / keep
        return x * self._mask

    def backward(self, grad):
        if self._mask is None:
            return grad
        return grad * self._mask


class Flatten(Layer):
    def __init__(self):
        self._in_shape: tuple[int, ...] | None = None

    def forward(self, x, training=False, rng=None):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        if self._in_shape is None:
            raise RuntimeError("backward called without a cached forward")
        return grad.reshape(self._in_shape)


class Softmax(Layer):
    """Row-wise softmax with max-subtraction; outputs sum to 1 per row."""

    def __init__(self):
        self._p: np.ndarray | None = None

    def forward(self, x, training=False, rng=None):
        shifted = x - x.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        self._p = e / e.sum(axis=1, keepdims=True)
        return self._p

    def backward(self, grad):
        if self._p is None:
            raise RuntimeError("backward called without a cached forward")
        # full Jacobian product: dx = p * (g - sum(g * p))
        p = self._p
        return p * (grad - (grad * p).sum(axis=1, keepdims=True))
