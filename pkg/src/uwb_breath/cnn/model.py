"""The breathing-rate CNN: architecture, shape plan, inference and gradients."""

from __future__ import annotations

import copy

import numpy as np

from .layers import LayerSpec, make_layer

INPUT_SHAPE = (36, 13, 1)

BREATHING_CNN = (
    LayerSpec.conv(8, (10, 10)),
    LayerSpec.maxpool((2, 2)),
    LayerSpec.conv(16, (8, 8)),
    LayerSpec.maxpool((2, 2)),
    LayerSpec.conv(32, (4, 4)),
    LayerSpec.maxpool((2, 1)),
    LayerSpec.conv(64, (2, 2)),
    LayerSpec.maxpool((2, 1)),
    LayerSpec.flatten(),
    LayerSpec.dense(64),
    LayerSpec.dropout(0.2),
    LayerSpec.dense(16),
    LayerSpec.dropout(0.2),
    LayerSpec.dense(1, relu=False, l2=0.0),
)


def shape_plan(specs=BREATHING_CNN, input_shape=INPUT_SHAPE) -> list[tuple[int, ...]]:
    """Output shape after every layer; dropout layers repeat their input shape."""
    shapes = []
    shape = tuple(input_shape)
    for spec in specs:
        shape = tuple(make_layer(spec).output_shape(shape))
        if any(d <= 0 for d in shape):
            raise ValueError(f"{spec.kind} layer produces non-positive shape {shape}")
        shapes.append(shape)
    return shapes


class CnnModel:
    """Sequential regression CNN mapping a 36 x 13 input to one BPM value."""

    def __init__(self, specs=BREATHING_CNN, input_shape=INPUT_SHAPE, seed=0, dtype=np.float32):
        self.specs = tuple(specs)
        self.input_shape = tuple(input_shape)
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.norm = None  # NormParams fitted on the training maps
        self.layers = [make_layer(s) for s in self.specs]
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        for layer in self.layers:
            layer.build(shape, rng, self.dtype)
            shape = layer.output_shape(shape)
        self.layers[0].needs_input_grad = False
        shape_plan(self.specs, self.input_shape)

    # parameter access -------------------------------------------------

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for key, value in layer.params.items():
                yield (i, key), value

    def n_params(self) -> int:
        return sum(v.size for _, v in self.named_params())

    def get_weights(self) -> list[np.ndarray]:
        return [v.copy() for _, v in self.named_params()]

    def set_weights(self, weights) -> None:
        for ((i, key), _), w in zip(list(self.named_params()), weights):
            self.layers[i].params[key] = np.asarray(w, dtype=self.dtype).copy()

    def astype(self, dtype) -> "CnnModel":
        clone = copy.deepcopy(self)
        clone.dtype = np.dtype(dtype)
        for layer in clone.layers:
            for key in layer.params:
                layer.params[key] = layer.params[key].astype(dtype)
        return clone

    def copy(self) -> "CnnModel":
        return copy.deepcopy(self)

    # inference ----------------------------------------------------------

    def _as_batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        h, w, c = self.input_shape
        if x.shape == (h, w):
            x = x[None, :, :, None]
        elif x.ndim == 3 and x.shape[1:] == (h, w):
            x = x[..., None]
        if x.ndim != 4 or x.shape[1:] != (h, w, c):
            raise ValueError(f"input shape {x.shape} does not match model input {self.input_shape}")
        return x

    def forward(self, x, training=False, rng=None) -> np.ndarray:
        """Raw (N, 1) outputs; ``rng`` drives the dropout masks when training."""
        out = self._as_batch(x)
        for layer in self.layers:
            out = layer.forward(out, training, rng)
        return out

    def predict(self, x, batch_size=256) -> np.ndarray:
        """BPM predictions with dropout disabled."""
        x = self._as_batch(x)
        preds = [self.forward(x[i : i + batch_size])[:, 0] for i in range(0, len(x), batch_size)]
        return np.concatenate(preds).astype(np.float64)

    # training support ---------------------------------------------------

    def l2_penalty(self) -> float:
        return float(
            sum(
                layer.spec.l2 * np.sum(layer.params["W"].astype(np.float64) ** 2)
                for layer in self.layers
                if "W" in layer.params and layer.spec.l2 > 0
            )
        )

    def loss_and_grads(self, x, y, rng=None):
        """MSE on BPM plus L2 on kernels; returns (loss, data_loss, grads)."""
        x = self._as_batch(x)
        y = np.asarray(y, dtype=self.dtype).reshape(-1, 1)
        pred = self.forward(x, training=True, rng=rng)
        diff = pred - y
        data_loss = float(np.mean(diff.astype(np.float64) ** 2))
        dout = (2.0 / len(x)) * diff
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
            if dout is None:
                break
        grads = []
        for layer in self.layers:
            for key in layer.params:
                g = layer.grads[key]
                if key == "W" and layer.spec.l2 > 0:
                    g = g + 2.0 * layer.spec.l2 * layer.params[key]
                grads.append(g)
        return data_loss + self.l2_penalty(), data_loss, grads
