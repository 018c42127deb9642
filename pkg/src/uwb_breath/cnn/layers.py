"""NHWC layers with hand-written backward passes.

Every layer keeps the cache of its last training forward pass; ``backward``
consumes it and fills ``grads`` with the same keys as ``params``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # conv | maxpool | dense | dropout | flatten
    filters: int = 0
    kernel: tuple[int, int] = (0, 0)
    strides: tuple[int, int] = (1, 1)
    units: int = 0
    relu: bool = False
    l2: float = 0.0
    rate: float = 0.0

    @staticmethod
    def conv(filters, kernel, l2=1e-4):
        return LayerSpec("conv", filters=filters, kernel=tuple(kernel), relu=True, l2=l2)

    @staticmethod
    def maxpool(strides, kernel=(2, 2)):
        return LayerSpec("maxpool", kernel=tuple(kernel), strides=tuple(strides))

    @staticmethod
    def dense(units, relu=True, l2=1e-4):
        return LayerSpec("dense", units=units, relu=relu, l2=l2)

    @staticmethod
    def dropout(rate):
        return LayerSpec("dropout", rate=rate)

    @staticmethod
    def flatten():
        return LayerSpec("flatten")


def same_padding(k: int) -> tuple[int, int]:
    # extra row/column goes after, as in TensorFlow's "same"
    total = k - 1
    return total // 2, total - total // 2


def pool_output(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


class Layer:
    spec: LayerSpec
    params: dict
    grads: dict

    needs_input_grad = True

    def __init__(self, spec):
        self.spec = spec
        self.params = {}
        self.grads = {}

    def output_shape(self, in_shape):
        return in_shape

    def build(self, in_shape, rng, dtype):
        pass

    def forward(self, x, training=False, rng=None):
        return x

    def backward(self, dout):
        return dout


class Conv2D(Layer):
    def output_shape(self, in_shape):
        h, w, _ = in_shape
        return (h, w, self.spec.filters)

    def build(self, in_shape, rng, dtype):
        kh, kw = self.spec.kernel
        cin = in_shape[2]
        fan_in = kh * kw * cin
        limit = np.sqrt(6.0 / fan_in)
        self.params["W"] = rng.uniform(-limit, limit, (kh, kw, cin, self.spec.filters)).astype(dtype)
        self.params["b"] = np.zeros(self.spec.filters, dtype=dtype)

    @staticmethod
    def _im2col(xp, kh, kw, h, w):
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # N,H,W,C,kh,kw
        n, c = xp.shape[0], xp.shape[3]
        return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, kh * kw * c)

    def forward(self, x, training=False, rng=None):
        W, b = self.params["W"], self.params["b"]
        kh, kw = self.spec.kernel
        (pt, pb), (pl, pr) = same_padding(kh), same_padding(kw)
        n, h, w, _ = x.shape
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        cols = self._im2col(xp, kh, kw, h, w)
        z = (cols @ W.reshape(-1, W.shape[-1]) + b).reshape(n, h, w, -1)
        out = np.maximum(z, 0) if self.spec.relu else z
        if training:
            self._cache = (x.shape, cols, z)
        return out

    def backward(self, dout):
        shape, cols, z = self._cache
        W = self.params["W"]
        kh, kw, cin, cout = W.shape
        if self.spec.relu:
            dout = dout * (z > 0)
        d2 = dout.reshape(-1, cout)
        self.grads["W"] = (cols.T @ d2).reshape(W.shape)
        self.grads["b"] = d2.sum(axis=0)
        if not self.needs_input_grad:
            return None
        # input gradient = correlation of the re-padded output gradient with the flipped kernel
        n, h, w, _ = shape
        (pt, _), (pl, _) = same_padding(kh), same_padding(kw)
        dp = np.pad(dout, ((0, 0), (kh - 1 - pt, pt), (kw - 1 - pl, pl), (0, 0)))
        dcols = self._im2col(dp, kh, kw, h, w)
        w_flip = W[::-1, ::-1].transpose(0, 1, 3, 2).reshape(kh * kw * cout, cin)
        return (dcols @ w_flip).reshape(n, h, w, cin)


class MaxPool2D(Layer):
    def output_shape(self, in_shape):
        h, w, c = in_shape
        (kh, kw), (sh, sw) = self.spec.kernel, self.spec.strides
        return (pool_output(h, kh, sh), pool_output(w, kw, sw), c)

    def _slices(self, in_shape):
        (kh, kw), (sh, sw) = self.spec.kernel, self.spec.strides
        ho, wo, _ = self.output_shape(in_shape)
        for i in range(kh):
            for j in range(kw):
                yield (
                    slice(None),
                    slice(i, i + sh * (ho - 1) + 1, sh),
                    slice(j, j + sw * (wo - 1) + 1, sw),
                    slice(None),
                )

    def forward(self, x, training=False, rng=None):
        slices = list(self._slices(x.shape[1:]))
        cand = np.stack([x[s] for s in slices])
        idx = cand.argmax(axis=0)  # ties: first window position
        out = np.take_along_axis(cand, idx[None], axis=0)[0]
        if training:
            self._cache = (x.shape, slices, idx)
        return out

    def backward(self, dout):
        shape, slices, idx = self._cache
        dx = np.zeros(shape, dtype=dout.dtype)
        for k, s in enumerate(slices):
            dx[s] += dout * (idx == k)
        return dx


class Flatten(Layer):
    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, training=False, rng=None):
        if training:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._cache)


class Dense(Layer):
    def output_shape(self, in_shape):
        return (self.spec.units,)

    def build(self, in_shape, rng, dtype):
        fan_in = in_shape[0]
        limit = np.sqrt(6.0 / fan_in)
        self.params["W"] = rng.uniform(-limit, limit, (fan_in, self.spec.units)).astype(dtype)
        self.params["b"] = np.zeros(self.spec.units, dtype=dtype)

    def forward(self, x, training=False, rng=None):
        z = x @ self.params["W"] + self.params["b"]
        out = np.maximum(z, 0) if self.spec.relu else z
        if training:
            self._cache = (x, z)
        return out

    def backward(self, dout):
        x, z = self._cache
        if self.spec.relu:
            dout = dout * (z > 0)
        self.grads["W"] = x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["W"].T


class Dropout(Layer):
    """Inverted dropout; identity outside training."""

    def forward(self, x, training=False, rng=None):
        if not training or self.spec.rate == 0:
            self._cache = None
            return x
        if rng is None:
            raise ValueError("dropout in training mode needs an rng")
        keep = 1.0 - self.spec.rate
        mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
        self._cache = mask
        return x * mask

    def backward(self, dout):
        return dout if self._cache is None else dout * self._cache


LAYER_TYPES = {
    "conv": Conv2D,
    "maxpool": MaxPool2D,
    "dense": Dense,
    "dropout": Dropout,
    "flatten": Flatten,
}


def make_layer(spec: LayerSpec) -> Layer:
    try:
        return LAYER_TYPES[spec.kind](spec)
    except KeyError:
        raise ValueError(f"unknown layer kind {spec.kind!r}") from None
