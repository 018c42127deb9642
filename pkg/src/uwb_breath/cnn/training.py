"""SGD-with-momentum training and median-of-replicates model selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import BREATHING_CNN, CnnModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 200
    patience: int = 20
    l2: float = 1e-4
    seed: int = 0
    replicates: int = 10
    specs: tuple = field(default=BREATHING_CNN, repr=False)


@dataclass
class TrainResult:
    model: CnnModel
    val_loss: float
    history: list[tuple[float, float]]  # (train loss, validation loss) per epoch
    replicate_losses: list[float] = field(default_factory=list)
    selected: int = 0


def median_index(losses) -> int:
    """Index of the median loss; for an even count the lower middle value."""
    order = np.argsort(np.asarray(losses, dtype=float), kind="stable")
    return int(order[(len(order) - 1) // 2])


def _with_l2(specs, l2):
    out = []
    for s in specs:
        if s.kind in ("conv", "dense") and s.l2 > 0:
            s = type(s)(**{**s.__dict__, "l2": l2})
        out.append(s)
    return tuple(out)


def fit_once(
    x_train, y_train, x_val, y_val, cfg: TrainConfig, seed: int, init: CnnModel | None = None
) -> TrainResult:
    """One training run with early stopping; returns the best-validation weights.

    With ``init`` the run fine-tunes a copy of that model instead of starting
    from a fresh initialisation.
    """
    seq = np.random.SeedSequence(seed)
    init_seed, shuffle_seed = seq.spawn(2)
    if init is not None:
        model = init.copy()
    else:
        input_shape = tuple(x_train.shape[1:3]) + (1,)
        model = CnnModel(
            _with_l2(cfg.specs, cfg.l2), input_shape, seed=int(init_seed.generate_state(1)[0])
        )
        # start the output at the label mean so early epochs fit structure, not offset
        model.layers[-1].params["b"][:] = np.float32(np.mean(y_train))
    rng = np.random.default_rng(shuffle_seed)
    velocity = [np.zeros_like(w) for _, w in model.named_params()]
    keys = [k for k, _ in model.named_params()]

    best_loss = float(np.mean((model.predict(x_val) - y_val) ** 2)) if init is not None else np.inf
    best_weights, since_best = model.get_weights(), 0
    history = []
    n = len(x_train)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, data_loss, grads = model.loss_and_grads(x_train[idx], y_train[idx], rng)
            total += data_loss * len(idx)
            for (i, key), v, g in zip(keys, velocity, grads):
                v *= cfg.momentum
                v -= cfg.learning_rate * g
                model.layers[i].params[key] += v
        val_loss = float(np.mean((model.predict(x_val) - y_val) ** 2))
        history.append((total / n, val_loss))
        if not np.isfinite(val_loss):
            log.warning("training diverged at epoch %d", epoch)
            break
        if val_loss < best_loss:
            best_loss, best_weights, since_best = val_loss, model.get_weights(), 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    model.set_weights(best_weights)
    log.debug("seed %d: best val MSE %.4f after %d epochs", seed, best_loss, len(history))
    return TrainResult(model, float(best_loss), history)


def fit_replicates(x_train, y_train, x_val, y_val, cfg: TrainConfig, init=None) -> TrainResult:
    """Train ``cfg.replicates`` models and keep the one with the median validation loss."""
    if cfg.replicates < 1:
        raise ValueError("need at least one replicate")
    seeds = np.random.SeedSequence(cfg.seed).generate_state(cfg.replicates)
    runs = [fit_once(x_train, y_train, x_val, y_val, cfg, int(s), init) for s in seeds]
    losses = [r.val_loss for r in runs]
    pick = median_index(losses)
    best = runs[pick]
    best.replicate_losses = losses
    best.selected = pick
    return best
