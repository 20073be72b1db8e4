"""Layers for the small numpy network engine.

Every layer caches what it needs during ``forward(x, training=True)`` and
consumes that cache in ``backward(dy)``, which fills ``self.grads`` and
returns the gradient with respect to the layer input.  Batch is always the
leading axis; convolutional tensors are ``(batch, channels, width)``.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import quantize

__all__ = ["LayerSpec", "Layer", "Dense", "BatchNorm", "Conv1d", "Pool",
           "Activation", "Flatten", "Scale", "QuantizeApprox", "QuantizeIdeal",
           "make_layer", "LAYER_KINDS"]


@dataclass
class LayerSpec:
    """Declarative description of one layer.

    ``kind`` is one of :data:`LAYER_KINDS`; ``options`` holds its size
    parameters (``units``, ``filters``, ``kernel``, ``stride``, ``width``,
    ``mode``, ``fn``, ``factor``, ``levels``, ``sharpness``, ...).
    """

    kind: str
    options: dict = field(default_factory=dict)

    def to_dict(self):
        return {"kind": self.kind, **self.options}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls(d.pop("kind"), d)


class Layer:
    kind = ""

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.buffers = {}
        self._cache = None

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def _need_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{self.kind}: backward called without a training forward pass")
        return self._cache

    def output_shape(self, in_shape):
        return in_shape

    def spec(self):
        raise NotImplementedError


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, units, rng):
        super().__init__()
        bound = 1.0 / np.sqrt(in_features)
        self.params["W"] = rng.uniform(-bound, bound, size=(in_features, units))
        self.params["b"] = np.zeros(units)

    def forward(self, x, training=False):
        if x.shape[-1] != self.params["W"].shape[0]:
            raise ValueError(f"dense: input width {x.shape[-1]}, expected {self.params['W'].shape[0]}")
        if training:
            self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        x = self._need_cache()
        self.grads["W"] = x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T

    def output_shape(self, in_shape):
        return (self.params["W"].shape[1],)

    def spec(self):
        return LayerSpec("dense", {"units": int(self.params["W"].shape[1])})


class BatchNorm(Layer):
    """Per-feature batch normalization with affine scale and shift.

    Running statistics follow ``run = momentum * run + (1 - momentum) * batch``.
    """

    kind = "batchnorm"

    def __init__(self, features, momentum=0.9, eps=1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(features)
        self.params["beta"] = np.zeros(features)
        self.buffers["running_mean"] = np.zeros(features)
        self.buffers["running_var"] = np.ones(features)

    def forward(self, x, training=False):
        if training:
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mu) * inv_std
            m = self.momentum
            self.buffers["running_mean"] = m * self.buffers["running_mean"] + (1 - m) * mu
            self.buffers["running_var"] = m * self.buffers["running_var"] + (1 - m) * var
            self._cache = (xhat, inv_std)
        else:
            inv_std = 1.0 / np.sqrt(self.buffers["running_var"] + self.eps)
            xhat = (x - self.buffers["running_mean"]) * inv_std
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dy):
        xhat, inv_std = self._need_cache()
        n = dy.shape[0]
        self.grads["gamma"] = np.sum(dy * xhat, axis=0)
        self.grads["beta"] = dy.sum(axis=0)
        dxhat = dy * self.params["gamma"]
        return inv_std / n * (n * dxhat - dxhat.sum(axis=0)
                              - xhat * np.sum(dxhat * xhat, axis=0))

    def spec(self):
        return LayerSpec("batchnorm", {"momentum": self.momentum, "eps": self.eps})


class Conv1d(Layer):
    """1-D cross-correlation with zero 'same' padding.

    ``y[b, f, w] = bias[f] + sum_{c,k} W[f, c, k] * xpad[b, c, w*stride + k]``
    where ``xpad`` has ``(kernel - 1) // 2`` zeros on the left.  A 2-D input
    is treated as a single channel.
    """

    kind = "conv1d"

    def __init__(self, in_channels, filters, kernel, stride, rng):
        super().__init__()
        fan_in = in_channels * kernel
        bound = 1.0 / np.sqrt(fan_in)
        self.stride = stride
        self.params["W"] = rng.uniform(-bound, bound, size=(filters, in_channels, kernel))
        self.params["b"] = np.zeros(filters)

    @property
    def kernel(self):
        return self.params["W"].shape[2]

    def _pads(self):
        k = self.kernel
        return (k - 1) // 2, k - 1 - (k - 1) // 2

    def forward(self, x, training=False):
        squeeze = x.ndim == 2
        if squeeze:
            x = x[:, None, :]
        W = self.params["W"]
        f, c, k = W.shape
        if x.shape[1] != c:
            raise ValueError(f"conv1d: {x.shape[1]} input channels, expected {c}")
        left, right = self._pads()
        xpad = np.pad(x, ((0, 0), (0, 0), (left, right)))
        win = sliding_window_view(xpad, k, axis=2)[:, :, ::self.stride, :]
        b, _, n_out, _ = win.shape
        cols = win.transpose(0, 2, 1, 3).reshape(b * n_out, c * k)
        y = (cols @ W.reshape(f, c * k).T).reshape(b, n_out, f).transpose(0, 2, 1)
        y = y + self.params["b"][None, :, None]
        if training:
            self._cache = (cols, xpad.shape, squeeze)
        return y

    def backward(self, dy):
        cols, pad_shape, squeeze = self._need_cache()
        W = self.params["W"]
        f, c, k = W.shape
        b, _, n_out = dy.shape
        dy2 = dy.transpose(0, 2, 1).reshape(b * n_out, f)
        self.grads["W"] = (dy2.T @ cols).reshape(W.shape)
        self.grads["b"] = dy2.sum(axis=0)
        dwin = (dy2 @ W.reshape(f, c * k)).reshape(b, n_out, c, k)
        dxpad = np.zeros(pad_shape)
        s = self.stride
        for j in range(k):
            dxpad[:, :, j:j + s * (n_out - 1) + 1:s] += dwin[:, :, :, j].transpose(0, 2, 1)
        left, right = self._pads()
        dx = dxpad[:, :, left:pad_shape[2] - right]
        return dx[:, 0, :] if squeeze else dx

    def output_shape(self, in_shape):
        width = in_shape[-1]
        return (self.params["W"].shape[0], (width - 1) // self.stride + 1)

    def spec(self):
        f, _, k = self.params["W"].shape
        return LayerSpec("conv1d", {"filters": int(f), "kernel": int(k), "stride": self.stride})


class Pool(Layer):
    """Non-overlapping pooling along the last axis (``width == stride``)."""

    kind = "pool"

    def __init__(self, width=2, stride=2, mode="max"):
        super().__init__()
        if width != stride:
            raise ValueError("only non-overlapping pooling (width == stride) is supported")
        if mode not in ("max", "avg"):
            raise ValueError(f"unknown pooling mode {mode!r}")
        self.width = width
        self.stride = stride
        self.mode = mode

    def forward(self, x, training=False):
        p = self.width
        n_out = x.shape[-1] // p
        xs = x[..., :n_out * p].reshape(x.shape[:-1] + (n_out, p))
        if self.mode == "max":
            idx = np.argmax(xs, axis=-1)
            y = np.take_along_axis(xs, idx[..., None], axis=-1)[..., 0]
        else:
            idx = None
            y = xs.mean(axis=-1)
        if training:
            self._cache = (x.shape, idx)
        return y

    def backward(self, dy):
        in_shape, idx = self._need_cache()
        p = self.width
        n_out = dy.shape[-1]
        dxs = np.zeros(dy.shape + (p,))
        if self.mode == "max":
            np.put_along_axis(dxs, idx[..., None], dy[..., None], axis=-1)
        else:
            dxs[...] = dy[..., None] / p
        dx = np.zeros(in_shape)
        dx[..., :n_out * p] = dxs.reshape(dy.shape[:-1] + (n_out * p,))
        return dx

    def output_shape(self, in_shape):
        return in_shape[:-1] + (in_shape[-1] // self.width,)

    def spec(self):
        return LayerSpec("pool", {"width": self.width, "stride": self.stride, "mode": self.mode})


class Activation(Layer):
    kind = "activation"
    FUNCTIONS = ("relu", "sigmoid", "tanh", "identity")

    def __init__(self, fn):
        super().__init__()
        if fn not in self.FUNCTIONS:
            raise ValueError(f"unknown activation {fn!r}")
        self.fn = fn

    def forward(self, x, training=False):
        if self.fn == "relu":
            y = np.maximum(x, 0.0)
        elif self.fn == "sigmoid":
            y = 0.5 * (1.0 + np.tanh(0.5 * x))  # overflow-free logistic
        elif self.fn == "tanh":
            y = np.tanh(x)
        else:
            y = x
        if training:
            self._cache = (x, y)
        return y

    def backward(self, dy):
        x, y = self._need_cache()
        if self.fn == "relu":
            return dy * (x > 0)
        if self.fn == "sigmoid":
            return dy * y * (1.0 - y)
        if self.fn == "tanh":
            return dy * (1.0 - y * y)
        return dy

    def spec(self):
        return LayerSpec("activation", {"fn": self.fn})


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, training=False):
        if training:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._need_cache())

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def spec(self):
        return LayerSpec("flatten")


class Scale(Layer):
    kind = "scale"

    def __init__(self, factor):
        super().__init__()
        self.factor = float(factor)

    def forward(self, x, training=False):
        if training:
            self._cache = True
        return self.factor * x

    def backward(self, dy):
        self._need_cache()
        return self.factor * dy

    def spec(self):
        return LayerSpec("scale", {"factor": self.factor})


class QuantizeApprox(Layer):
    """Differentiable tanh-sum phase quantizer (training time)."""

    kind = "quantize-approx"

    def __init__(self, levels, sharpness):
        super().__init__()
        self.levels = int(levels)
        self.sharpness = float(sharpness)

    def forward(self, x, training=False):
        if training:
            self._cache = x
        return quantize.aq(x, self.levels, self.sharpness)

    def backward(self, dy):
        x = self._need_cache()
        return dy * quantize.aq_grad(x, self.levels, self.sharpness)

    def spec(self):
        return LayerSpec("quantize-approx", {"levels": self.levels, "sharpness": self.sharpness})


class QuantizeIdeal(Layer):
    """Exact staircase phase quantizer (deployment time).

    Its derivative is zero almost everywhere, which is what ``backward``
    returns.
    """

    kind = "quantize-ideal"

    def __init__(self, levels):
        super().__init__()
        self.levels = int(levels)

    def forward(self, x, training=False):
        if training:
            self._cache = x.shape
        return quantize.iq(x, self.levels)

    def backward(self, dy):
        return np.zeros(self._need_cache())

    def spec(self):
        return LayerSpec("quantize-ideal", {"levels": self.levels})


LAYER_KINDS = ("dense", "batchnorm", "conv1d", "pool", "activation", "flatten",
               "scale", "quantize-approx", "quantize-ideal")


def make_layer(spec, in_shape, rng):
    """Instantiate ``spec`` for per-sample input shape ``in_shape``."""
    o = spec.options
    kind = spec.kind
    if kind == "dense":
        if len(in_shape) != 1:
            raise ValueError(f"dense layer needs flat input, got per-sample shape {in_shape}")
        return Dense(in_shape[0], int(o["units"]), rng)
    if kind == "batchnorm":
        if len(in_shape) != 1:
            raise ValueError("batchnorm expects flat features")
        return BatchNorm(in_shape[0], o.get("momentum", 0.9), o.get("eps", 1e-5))
    if kind == "conv1d":
        channels = 1 if len(in_shape) == 1 else in_shape[0]
        return Conv1d(channels, int(o["filters"]), int(o.get("kernel", 5)),
                      int(o.get("stride", 1)), rng)
    if kind == "pool":
        return Pool(int(o.get("width", 2)), int(o.get("stride", 2)), o.get("mode", "max"))
    if kind == "activation":
        return Activation(o["fn"])
    if kind == "flatten":
        return Flatten()
    if kind == "scale":
        return Scale(o["factor"])
    if kind == "quantize-approx":
        return QuantizeApprox(o["levels"], o["sharpness"])
    if kind == "quantize-ideal":
        return QuantizeIdeal(o["levels"])
    raise ValueError(f"unknown layer kind {kind!r}")
