"""Central finite-difference check of the hand-written backward passes.

The network is piecewise quadratic in any single weight (ReLU, max-pool
and dense layers are piecewise linear, the loss is a square), so a central
difference is exact up to rounding unless the perturbation moves an
activation across a kink. Such coordinates are detected by comparing the
ReLU and pooling switch patterns and are skipped (and counted).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Conv2D, Dense, LayerSpec, MaxPool2D
from .model import CnnModel

SMALL_CNN = (
    LayerSpec.conv(2, (3, 3)),
    LayerSpec.maxpool((2, 2)),
    LayerSpec.conv(2, (2, 2)),
    LayerSpec.maxpool((2, 1)),
    LayerSpec.flatten(),
    LayerSpec.dense(4),
    LayerSpec.dropout(0.2),
    LayerSpec.dense(3),
    LayerSpec.dropout(0.2),
    LayerSpec.dense(1, relu=False, l2=0.0),
)


@dataclass
class GradCheckResult:
    rel_errors: dict = field(default_factory=dict)  # tensor name -> relative error
    skipped: int = 0
    checked: int = 0

    @property
    def max_rel_error(self) -> float:
        return max(self.rel_errors.values()) if self.rel_errors else 0.0


def _pattern(model: CnnModel) -> bytes:
    parts = []
    for layer in model.layers:
        if isinstance(layer, (Conv2D, Dense)) and layer.spec.relu:
            parts.append(np.packbits(layer._cache[-1] > 0).tobytes())
        elif isinstance(layer, MaxPool2D):
            parts.append(layer._cache[2].astype(np.int8).tobytes())
    return b"|".join(parts)


def _loss(model, x, y, mask_seed):
    rng = np.random.default_rng(mask_seed)
    pred = model.forward(x, training=True, rng=rng)
    data = np.mean((pred[:, 0] - y) ** 2)
    return float(data + model.l2_penalty()), _pattern(model)


def _rel(a: np.ndarray, n: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    return float(np.linalg.norm(a - n) / scale) if scale > 1e-12 else 0.0


def check_gradients(model: CnnModel, x, y, eps: float = 1e-3, mask_seed: int = 0) -> GradCheckResult:
    """Compare analytic parameter and input gradients with central differences.

    ``model`` should be float64; dropout masks are held fixed by
    reseeding the mask generator for every evaluation.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    model.layers[0].needs_input_grad = True
    try:
        _, _, grads = model.loss_and_grads(x, y, np.random.default_rng(mask_seed))
        dx = _input_grad(model, x, y, mask_seed)
    finally:
        model.layers[0].needs_input_grad = False
    _, base = _loss(model, x, y, mask_seed)
    result = GradCheckResult()

    targets = [(f"layer{i}.{key}", model.layers[i].params, key, g) for ((i, key), _), g in zip(model.named_params(), grads)]
    holder = {"x": x.copy()}
    targets.append(("input", holder, "x", dx))
    for name, store, key, analytic in targets:
        arr = store[key]
        numeric = np.zeros_like(arr)
        keep = np.zeros(arr.shape, dtype=bool)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            lp, pp = _loss(model, holder["x"], y, mask_seed)
            arr[idx] = orig - eps
            lm, pm = _loss(model, holder["x"], y, mask_seed)
            arr[idx] = orig
            if pp != base or pm != base:
                result.skipped += 1
                continue
            numeric[idx] = (lp - lm) / (2 * eps)
            keep[idx] = True
            result.checked += 1
        result.rel_errors[name] = _rel(np.asarray(analytic)[keep], numeric[keep])
    return result


def _input_grad(model, x, y, mask_seed):
    """Gradient of the loss with respect to the input batch."""
    pred = model.forward(x, training=True, rng=np.random.default_rng(mask_seed))
    dout = (2.0 / len(x)) * (pred - y.reshape(-1, 1))
    for layer in reversed(model.layers):
        dout = layer.backward(dout)
    return dout.reshape(x.shape)


def random_instance(seed: int, input_shape=(6, 5, 1), batch: int = 3, specs=SMALL_CNN):
    """A float64 downsized model with random inputs and targets."""
    rng = np.random.default_rng(seed)
    model = CnnModel(specs, input_shape, seed=int(rng.integers(2**31)), dtype=np.float64)
    for _, value in model.named_params():
        value += rng.normal(0, 0.1, value.shape)  # non-zero biases exercise every path
    x = rng.random((batch,) + tuple(input_shape))
    y = rng.normal(10.0, 3.0, batch)
    return model, x, y
