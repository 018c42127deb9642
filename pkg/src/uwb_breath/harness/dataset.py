"""Recordings and labelled windows shared by the experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cir_synth import CirMatrix, decimate, decimation_factor
from ..preprocess import (
    ModelInput,
    NormParams,
    RangeFrequencyMap,
    WindowSpec,
    amplitude,
    crop,
    normalize,
    range_fft,
    window_rows,
)


@dataclass(frozen=True, eq=False)
class Recording:
    """One CIR capture of a person in a setup with a per-row ground truth."""

    cir: CirMatrix
    gt_bpm: np.ndarray  # one value per slow-time row
    person_id: int
    setup_id: int
    source: str = "synthetic"

    def __post_init__(self):
        gt = np.asarray(self.gt_bpm, dtype=float)
        if gt.ndim == 0:
            gt = np.full(self.cir.n_slow, float(gt))
        if gt.shape != (self.cir.n_slow,):
            raise ValueError("ground-truth series must have one value per slow-time row")
        object.__setattr__(self, "gt_bpm", gt)

    @property
    def pair(self) -> tuple[int, int]:
        return (self.person_id, self.setup_id)

    def decimated(self, target_rate_hz: float) -> "Recording":
        k = decimation_factor(self.cir.slow_rate_hz, target_rate_hz)
        return Recording(
            decimate(self.cir, target_rate_hz),
            self.gt_bpm[::k],
            self.person_id,
            self.setup_id,
            self.source,
        )


@dataclass(frozen=True, eq=False)
class LabeledWindow:
    """A cropped range-frequency map with its label and pair identity.

    The map is kept unnormalised: min-max extrema depend on the training
    folds, so ``model_input`` normalises on demand.
    """

    rf_map: RangeFrequencyMap
    ground_truth_bpm: float
    person_id: int
    setup_id: int
    source: str = "synthetic"

    @property
    def pair(self) -> tuple[int, int]:
        return (self.person_id, self.setup_id)

    def model_input(self, norm: NormParams) -> ModelInput:
        return normalize(self.rf_map, norm)


def recording_windows(rec: Recording, spec: WindowSpec = WindowSpec()) -> list[LabeledWindow]:
    amp = amplitude(rec.cir)
    out = []
    for a, b in window_rows(amp.n_slow, amp.slow_rate_hz, spec):
        win = type(amp)(amp.data[a:b], amp.slow_rate_hz)
        rf = crop(range_fft(win), rec.cir.config)
        out.append(
            LabeledWindow(rf, float(np.mean(rec.gt_bpm[a:b])), rec.person_id, rec.setup_id, rec.source)
        )
    return out


def dataset_windows(recordings, spec: WindowSpec = WindowSpec(), rate_hz: float | None = None):
    """Windows of every recording, optionally after decimation to ``rate_hz``."""
    out = []
    for rec in recordings:
        if rate_hz is not None:
            rec = rec.decimated(rate_hz)
        out.extend(recording_windows(rec, spec))
    return out


def stack_inputs(windows, norm: NormParams) -> np.ndarray:
    return np.stack([w.model_input(norm).data for w in windows]).astype(np.float32)


def labels(windows) -> np.ndarray:
    return np.array([w.ground_truth_bpm for w in windows], dtype=float)
