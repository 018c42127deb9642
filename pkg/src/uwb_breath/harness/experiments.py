"""Cross-validated evaluation of rule-based and CNN estimators, and the sampling-rate sweep."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from ..cir_synth import MIN_SWEEP_RATE_HZ, decimation_factor
from ..cnn.model import CnnModel
from ..cnn.training import TrainConfig, fit_replicates
from ..preprocess import WindowSpec, fit_norm
from ..rule_estimators import ESTIMATORS
from .dataset import LabeledWindow, dataset_windows, labels, stack_inputs
from .metrics import FoldResult, MetricsReport
from .splits import Fold, SplitPlan, assert_no_leakage, make_splits

log = logging.getLogger(__name__)


class RuleEstimator:
    """A rule-based estimator; fitting is a no-op."""

    def __init__(self, name: str):
        if name not in ESTIMATORS:
            raise ValueError(f"unknown estimator {name!r}; choose from {', '.join(ESTIMATORS)}")
        self.name = name
        self._fn = ESTIMATORS[name]

    def fit(self, train: list[LabeledWindow], fold: Fold | None = None):
        return self

    def predict(self, windows: list[LabeledWindow]) -> np.ndarray:
        return np.array([self._fn(w.rf_map) for w in windows], dtype=float)


@dataclass
class FittedCnn:
    model: CnnModel
    train_pairs: frozenset  # every pair whose windows influenced the weights or the norm

    def predict(self, windows: list[LabeledWindow]) -> np.ndarray:
        return self.model.predict(stack_inputs(windows, self.model.norm))


def inner_split(pairs, fraction: float, seed) -> tuple[frozenset, frozenset]:
    """Pair-atomic split of training pairs into (fit, early-stopping validation)."""
    pairs = sorted(pairs)
    n_val = max(1, int(round(fraction * len(pairs))))
    if n_val >= len(pairs):
        raise ValueError("too few training pairs for an inner validation split")
    rng = np.random.default_rng(seed)
    pick = set(rng.choice(len(pairs), size=n_val, replace=False).tolist())
    val = frozenset(p for i, p in enumerate(pairs) if i in pick)
    return frozenset(pairs) - val, val


@dataclass
class CnnEstimator:
    """Trains a CNN per fold; early stopping uses pairs carved out of the fold's training pairs.

    ``warm_start`` maps a fold to an already fitted model (or None) whose
    weights and normalisation seed the fold's training.
    """

    cfg: TrainConfig = field(default_factory=TrainConfig)
    val_fraction: float = 0.125
    warm_start: object = None
    name: str = "cnn"

    def fit(self, train: list[LabeledWindow], fold: Fold | None = None) -> FittedCnn:
        train_pairs = frozenset(w.pair for w in train)
        fold_tag = _fold_tag(fold)
        fit_pairs, stop_pairs = inner_split(train_pairs, self.val_fraction, [self.cfg.seed, *fold_tag])
        init = self.warm_start(fold) if self.warm_start is not None else None
        if init is not None:
            if fold is not None:
                assert_no_leakage(init.train_pairs, fold.val_pairs)
            norm = init.model.norm
            init_model = init.model
        else:
            norm = fit_norm([w.rf_map for w in train])
            init_model = None
        fit_w = [w for w in train if w.pair in fit_pairs]
        stop_w = [w for w in train if w.pair in stop_pairs]
        result = fit_replicates(
            stack_inputs(fit_w, norm),
            labels(fit_w),
            stack_inputs(stop_w, norm),
            labels(stop_w),
            self.cfg,
            init=init_model,
        )
        result.model.norm = norm
        used = train_pairs | (init.train_pairs if init is not None else frozenset())
        log.info("fold %s: val MSE %.3f, %d epochs", fold_tag, result.val_loss, len(result.history))
        return FittedCnn(result.model, used)


def _fold_tag(fold: Fold | None) -> list[int]:
    if fold is None:
        return []
    key = fold.key
    return [int(k) + 1 for k in key] if isinstance(key, tuple) else [int(key) + 1]


def evaluate(estimator, plan: SplitPlan, windows: list[LabeledWindow], keep_models: bool = False):
    """Fit on each fold's training pairs and score its held-out pairs.

    Returns a MetricsReport, plus the fitted model per fold key when
    ``keep_models`` is set.
    """
    report = MetricsReport(plan.strategy, estimator.name)
    models = {}
    validated = 0
    for fold in plan.folds:
        assert_no_leakage(fold.train_pairs, fold.val_pairs)
        train = [w for w in windows if w.pair in fold.train_pairs]
        held = [w for w in windows if w.pair in fold.val_pairs]
        if not held:
            continue
        fitted = estimator.fit(train, fold)
        if hasattr(fitted, "train_pairs"):
            assert_no_leakage(fitted.train_pairs, fold.val_pairs)
        pred = fitted.predict(held)
        report.folds.append(
            FoldResult(
                fold.key,
                np.asarray(pred, dtype=float),
                labels(held),
                np.array([w.setup_id for w in held]),
                np.array([w.person_id for w in held]),
            )
        )
        validated += len(held)
        if keep_models:
            models[fold.key] = fitted
    val_pairs = [p for f in plan.folds for p in f.val_pairs]
    covered = set(val_pairs)
    if len(val_pairs) != len(covered) or validated != sum(w.pair in covered for w in windows):
        raise AssertionError("window accounting failed: some windows were validated twice or never")
    return (report, models) if keep_models else report


def evaluate_all(estimator, windows: list[LabeledWindow]) -> MetricsReport:
    """Score a fixed (or training-free) estimator on every window as one fold."""
    fitted = estimator.fit(windows)
    report = MetricsReport("all-windows", estimator.name)
    report.folds.append(
        FoldResult(
            "all",
            np.asarray(fitted.predict(windows), dtype=float),
            labels(windows),
            np.array([w.setup_id for w in windows]),
            np.array([w.person_id for w in windows]),
        )
    )
    return report


def plan_for(windows, strategy: str) -> SplitPlan:
    return make_splits({w.pair for w in windows}, strategy)


@dataclass(frozen=True)
class SweepRow:
    requested_hz: float
    effective_hz: float
    n_windows: int
    median_l1: float
    mean_l1: float
    noisy_median_l1: float
    noisy_mean_l1: float


def sampling_sweep(
    recordings,
    rates=(77.5, 20.0, 10.0, 4.0, 2.0),
    estimator=None,
    strategy: str = "leave-setup-out",
    noisy_setups=(),
    spec: WindowSpec = WindowSpec(),
) -> list[SweepRow]:
    """Decimate, re-preprocess and evaluate at every rate."""
    estimator = estimator or RuleEstimator("accumulated-highest-peak")
    native = min(r.cir.slow_rate_hz for r in recordings)
    rows = []
    for rate in rates:
        if rate < MIN_SWEEP_RATE_HZ:
            raise ValueError(f"rate {rate} Hz is below the {MIN_SWEEP_RATE_HZ} Hz Nyquist limit")
        if rate > native + 1e-9:
            raise ValueError(f"rate {rate} Hz exceeds the native {native} Hz")
        k = decimation_factor(native, rate)
        windows = dataset_windows(recordings, spec, rate_hz=rate)
        report = evaluate(estimator, plan_for(windows, strategy), windows)
        pooled = report.pooled
        if not len(noisy_setups):
            noisy_median, noisy_mean = pooled.median, pooled.mean
        elif np.isin(report.setup_ids, list(noisy_setups)).any():
            noisy = report.subset(noisy_setups)
            noisy_median, noisy_mean = noisy.median, noisy.mean
        else:
            noisy_median = noisy_mean = float("nan")  # no noisy recordings in the data
        rows.append(
            SweepRow(rate, native / k, pooled.n, pooled.median, pooled.mean, noisy_median, noisy_mean)
        )
    return rows


def write_sweep_csv(rows: list[SweepRow], path) -> None:
    fields = list(SweepRow.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([f"{getattr(row, f):.6g}" for f in fields])
