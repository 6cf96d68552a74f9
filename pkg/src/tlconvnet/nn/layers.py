"""Layer kinds for a small 1D ConvNet with hand-written backpropagation.

Activations are batched arrays of shape ``(batch, length, channels)``; a
single sample of shape ``(length, channels)`` is accepted everywhere and
comes back without the batch axis. Dense layers take ``(batch, features)``.

Every layer keeps the intermediates that ``backward`` needs in ``self.cache``.
The cache is filled by a training-mode forward and dropped by an inference
forward, so calling ``backward`` after inference raises.
"""
from __future__ import annotations

import numpy as np

from ..errors import BackwardBeforeForwardError, ShapeError

DEFAULT_DTYPE = np.float32


def glorot_uniform(rng, shape, fan_in, fan_out, dtype=DEFAULT_DTYPE):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _as_batch(x, ndim):
    """Add a leading batch axis to an unbatched sample."""
    x = np.asarray(x)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim != ndim:
        raise ShapeError(f"expected a {ndim - 1}D sample or {ndim}D batch, got shape {x.shape}")
    return x, False


class Layer:
    kind = "Layer"

    def __init__(self):
        self.cache = None
        self.grads = {}

    def params(self):
        return {}

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def output_shape(self, shape):
        """Per-sample output shape for a per-sample input shape."""
        return tuple(shape)

    def config(self):
        return {}

    def pattern(self):
        """Discrete choices made by the last training forward (ReLU gates, pool argmax)."""
        return None

    def astype(self, dtype):
        for name, p in self.params().items():
            setattr(self, name, p.astype(dtype))
        self.zero_grad()
        return self

    def zero_grad(self):
        self.grads = {name: np.zeros_like(p) for name, p in self.params().items()}

    def _require_cache(self):
        if self.cache is None:
            raise BackwardBeforeForwardError(self.kind)
        return self.cache

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{self.kind}({args})"


class Conv1D(Layer):
    """Valid-padding 1D convolution. Weights are ``(filters, in_channels, kernel_size)``."""

    kind = "Conv1D"

    def __init__(self, in_channels, filters, kernel_size=3, stride=1, rng=None, dtype=DEFAULT_DTYPE):
        super().__init__()
        if min(in_channels, filters, kernel_size, stride) < 1:
            raise ShapeError("in_channels, filters, kernel_size and stride must all be >= 1")
        self.in_channels = in_channels
        self.filters = filters
        self.kernel_size = kernel_size
        self.stride = stride
        rng = np.random.default_rng(0) if rng is None else rng
        self.weight = glorot_uniform(
            rng,
            (filters, in_channels, kernel_size),
            fan_in=in_channels * kernel_size,
            fan_out=filters * kernel_size,
            dtype=dtype,
        )
        self.bias = np.zeros(filters, dtype=dtype)
        self.zero_grad()

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def config(self):
        return {
            "in_channels": self.in_channels,
            "filters": self.filters,
            "kernel_size": self.kernel_size,
            "stride": self.stride,
        }

    def output_length(self, length):
        return (length - self.kernel_size) // self.stride + 1

    def output_shape(self, shape):
        length, channels = shape
        if channels != self.in_channels:
            raise ShapeError(f"Conv1D expects {self.in_channels} input channels, got {channels}")
        if length < self.kernel_size:
            raise ShapeError(f"Conv1D input length {length} is shorter than kernel_size {self.kernel_size}")
        return (self.output_length(length), self.filters)

    def _windows(self, x):
        # (batch, out_length, channels, kernel)
        win = np.lib.stride_tricks.sliding_window_view(x, self.kernel_size, axis=1)
        return win[:, :: self.stride]

    def forward(self, x, train=False, rng=None):
        x, squeeze = _as_batch(x, 3)
        self.output_shape(x.shape[1:])
        x = x.astype(self.weight.dtype, copy=False)
        win = self._windows(x)
        n, out_len = win.shape[:2]
        cols = win.reshape(n * out_len, self.in_channels * self.kernel_size)
        out = cols @ self.weight.reshape(self.filters, -1).T + self.bias
        out = out.reshape(n, out_len, self.filters)
        self.cache = (cols, x.shape, squeeze) if train else None
        return out[0] if squeeze else out

    def backward(self, grad):
        cols, in_shape, squeeze = self._require_cache()
        grad, _ = _as_batch(grad, 3)
        n, length, channels = in_shape
        out_len = self.output_length(length)
        if grad.shape != (n, out_len, self.filters):
            raise ShapeError(f"upstream gradient shape {grad.shape} != forward output {(n, out_len, self.filters)}")
        g2 = grad.reshape(n * out_len, self.filters).astype(self.weight.dtype, copy=False)
        self.grads = {
            "weight": (g2.T @ cols).reshape(self.weight.shape),
            "bias": g2.sum(axis=0),
        }
        gcols = (g2 @ self.weight.reshape(self.filters, -1)).reshape(n, out_len, channels, self.kernel_size)
        dx = np.zeros(in_shape, dtype=self.weight.dtype)
        span = self.stride * (out_len - 1) + 1
        for j in range(self.kernel_size):
            dx[:, j : j + span : self.stride, :] += gcols[..., j]
        return dx[0] if squeeze else dx


class MaxPool1D(Layer):
    """Windowed maximum per channel; ties go to the lowest index."""

    kind = "MaxPool1D"

    def __init__(self, pool_width=2, stride=2):
        super().__init__()
        if pool_width < 1 or stride < 1:
            raise ShapeError(f"pool_width and stride must be >= 1, got {pool_width}, {stride}")
        self.pool_width = pool_width
        self.stride = stride

    def config(self):
        return {"pool_width": self.pool_width, "stride": self.stride}

    def output_length(self, length):
        return (length - self.pool_width) // self.stride + 1

    def output_shape(self, shape):
        length, channels = shape
        if length < self.pool_width:
            raise ShapeError(f"MaxPool1D input length {length} is shorter than pool_width {self.pool_width}")
        return (self.output_length(length), channels)

    def forward(self, x, train=False, rng=None):
        x, squeeze = _as_batch(x, 3)
        self.output_shape(x.shape[1:])
        win = np.lib.stride_tricks.sliding_window_view(x, self.pool_width, axis=1)[:, :: self.stride]
        # np.argmax returns the first occurrence, which is the tie-break we want
        arg = win.argmax(axis=-1)
        out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        self.cache = (arg, x.shape, x.dtype, squeeze) if train else None
        return out[0] if squeeze else out

    def argmax_positions(self):
        """Input positions selected by the last training forward, shape ``(batch, out_length, channels)``."""
        arg = self._require_cache()[0]
        starts = np.arange(arg.shape[1]) * self.stride
        return arg + starts[None, :, None]

    def pattern(self):
        return None if self.cache is None else self.cache[0]

    def backward(self, grad):
        arg, in_shape, dtype, squeeze = self._require_cache()
        grad, _ = _as_batch(grad, 3)
        if grad.shape != arg.shape:
            raise ShapeError(f"upstream gradient shape {grad.shape} != forward output {arg.shape}")
        dx = np.zeros(in_shape, dtype=dtype)
        out_len = arg.shape[1]
        span = self.stride * (out_len - 1) + 1
        for j in range(self.pool_width):
            dx[:, j : j + span : self.stride, :] += np.where(arg == j, grad, 0)
        return dx[0] if squeeze else dx


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by ``1 / retain_p`` during training."""

    kind = "Dropout"

    def __init__(self, retain_p=0.5):
        super().__init__()
        if not 0.0 < retain_p <= 1.0:
            raise ValueError(f"retain probability must be in (0, 1], got {retain_p}")
        self.retain_p = retain_p

    def config(self):
        return {"retain_p": self.retain_p}

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x)
        if not train:
            self.cache = None
            return x
        if self.retain_p == 1.0:
            mask = np.ones(x.shape, dtype=x.dtype)
        else:
            if rng is None:
                raise ValueError("training-mode dropout needs a seeded generator")
            keep = rng.random(x.shape) < self.retain_p
            mask = keep.astype(x.dtype) / x.dtype.type(self.retain_p)
        self.cache = mask
        return x * mask

    def backward(self, grad):
        mask = self._require_cache()
        grad = np.asarray(grad)
        if grad.shape != mask.shape:
            raise ShapeError(f"upstream gradient shape {grad.shape} != dropout mask {mask.shape}")
        return grad * mask


class Dense(Layer):
    """Fully connected layer, ``y = x @ W.T + b`` with ``W`` of shape ``(units, in_features)``."""

    kind = "Dense"

    def __init__(self, in_features, units, rng=None, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.in_features = in_features
        self.units = units
        rng = np.random.default_rng(0) if rng is None else rng
        self.weight = glorot_uniform(rng, (units, in_features), in_features, units, dtype=dtype)
        self.bias = np.zeros(units, dtype=dtype)
        self.zero_grad()

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def config(self):
        return {"in_features": self.in_features, "units": self.units}

    def output_shape(self, shape):
        if tuple(shape) != (self.in_features,):
            raise ShapeError(f"Dense expects ({self.in_features},) input, got {tuple(shape)}")
        return (self.units,)

    def forward(self, x, train=False, rng=None):
        x, squeeze = _as_batch(x, 2)
        self.output_shape(x.shape[1:])
        x = x.astype(self.weight.dtype, copy=False)
        out = x @ self.weight.T + self.bias
        self.cache = (x, squeeze) if train else None
        return out[0] if squeeze else out

    def backward(self, grad):
        x, squeeze = self._require_cache()
        grad, _ = _as_batch(grad, 2)
        if grad.shape != (x.shape[0], self.units):
            raise ShapeError(f"upstream gradient shape {grad.shape} != forward output {(x.shape[0], self.units)}")
        grad = grad.astype(self.weight.dtype, copy=False)
        self.grads = {"weight": grad.T @ x, "bias": grad.sum(axis=0)}
        dx = grad @ self.weight
        return dx[0] if squeeze else dx


class ReLU(Layer):
    kind = "ReLU"

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x)
        gate = x > 0
        self.cache = gate if train else None
        return np.where(gate, x, 0).astype(x.dtype, copy=False)

    def pattern(self):
        return self.cache

    def backward(self, grad):
        gate = self._require_cache()
        return np.where(gate, grad, 0).astype(np.asarray(grad).dtype, copy=False)


def sigmoid(x):
    x = np.asarray(x)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1 / (1 + z), z / (1 + z)).astype(x.dtype, copy=False)


class Sigmoid(Layer):
    kind = "Sigmoid"

    def forward(self, x, train=False, rng=None):
        out = sigmoid(x)
        self.cache = out if train else None
        return out

    def backward(self, grad):
        out = self._require_cache()
        return grad * out * (1 - out)


ACTIVATIONS = {"relu": ReLU, "sigmoid": Sigmoid}


def activation(name):
    try:
        return ACTIVATIONS[name]()
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}") from None


def activation_apply(x, kind):
    """Stateless elementwise activation."""
    return activation(kind).forward(x)


class Flatten(Layer):
    """``(batch, length, channels)`` -> ``(batch, length * channels)``, row-major."""

    kind = "Flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, train=False, rng=None):
        x, squeeze = _as_batch(x, 3)
        self.cache = (x.shape, squeeze) if train else None
        out = x.reshape(x.shape[0], -1)
        return out[0] if squeeze else out

    def backward(self, grad):
        shape, squeeze = self._require_cache()
        grad, _ = _as_batch(grad, 2)
        dx = grad.reshape(shape)
        return dx[0] if squeeze else dx


class Sequential:
    """A plain chain of layers. Enough for isolated gradient checks and small models."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for name, p in layer.params().items():
                yield (i, name), layer, p

    def trainable(self):
        """``(layer, name)`` pairs the optimizer updates."""
        return [(layer, name) for (_, name), layer, _ in self.named_params()]

    trainable_params = trainable

    def predict_proba(self, x):
        return self.forward(x)[:, 0]

    def astype(self, dtype):
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def patterns(self):
        return [p for p in (layer.pattern() for layer in self.layers) if p is not None]
