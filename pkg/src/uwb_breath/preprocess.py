"""CIR matrix to normalised range-frequency model input.

amplitude -> 30 s windows (15 s stride) -> per-column FFT -> band/range crop
-> min-max normalisation with training-set extrema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cir_synth import BREATHING_BAND_HZ, CirMatrix, RadarConfig

N_FREQ_BINS = 13
N_RANGE_BINS = 36


@dataclass(frozen=True, eq=False)
class AmplitudeMatrix:
    data: np.ndarray
    slow_rate_hz: float

    @property
    def n_slow(self) -> int:
        return self.data.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_slow / self.slow_rate_hz


@dataclass(frozen=True)
class WindowSpec:
    window_s: float = 30.0
    stride_s: float = 15.0

    def __post_init__(self):
        if not 0 < self.stride_s <= self.window_s:
            raise ValueError("need 0 < stride_s <= window_s")


@dataclass(frozen=True, eq=False)
class RangeFrequencyMap:
    """FFT magnitudes, rows = frequency bins, columns = range bins."""

    data: np.ndarray
    freq_axis_hz: np.ndarray
    range_bin_offset: int = 0

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[0] != len(self.freq_axis_hz):
            raise ValueError("data rows must match the frequency axis")
        if len(self.freq_axis_hz) > 1 and np.any(np.diff(self.freq_axis_hz) <= 0):
            raise ValueError("frequency axis must be strictly increasing")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class NormParams:
    min_val: float
    max_val: float

    def __post_init__(self):
        if not self.min_val < self.max_val:
            raise ValueError("NormParams needs min_val < max_val")


@dataclass(frozen=True, eq=False)
class ModelInput:
    """36 x 13 values in [0, 1]: rows = range bins, columns = frequency bins."""

    data: np.ndarray
    norm: NormParams


def amplitude(cir: CirMatrix) -> AmplitudeMatrix:
    # phase is useless with unsynchronised clocks
    return AmplitudeMatrix(np.abs(cir.data).astype(np.float64), cir.slow_rate_hz)


def window_rows(n_slow: int, rate_hz: float, spec: WindowSpec) -> list[tuple[int, int]]:
    """(start, stop) row ranges of every complete window."""
    duration = n_slow / rate_hz
    if duration + 1e-9 < spec.window_s:
        raise ValueError(f"{duration:.3f} s of data is shorter than the {spec.window_s} s window")
    count = int(math.floor((duration - spec.window_s) / spec.stride_s + 1e-9)) + 1
    length = int(math.floor(spec.window_s * rate_hz + 1e-9))
    spans = []
    for i in range(count):
        start = int(math.floor(i * spec.stride_s * rate_hz + 1e-9))
        spans.append((start, start + length))
    return spans


def windows(amp: AmplitudeMatrix, spec: WindowSpec = WindowSpec()) -> list[AmplitudeMatrix]:
    return [
        AmplitudeMatrix(amp.data[a:b], amp.slow_rate_hz)
        for a, b in window_rows(amp.n_slow, amp.slow_rate_hz, spec)
    ]


def range_fft(win: AmplitudeMatrix) -> RangeFrequencyMap:
    """Magnitude spectrum of every fast-time column (mean removed, no taper)."""
    n = win.n_slow
    if n < 2:
        raise ValueError("range_fft needs at least 2 slow-time rows")
    x = win.data - win.data.mean(axis=0, keepdims=True)
    mag = np.abs(np.fft.rfft(x, axis=0))
    freqs = np.arange(mag.shape[0]) * win.slow_rate_hz / n
    return RangeFrequencyMap(mag, freqs, 0)


def _band_start(freqs: np.ndarray) -> int:
    """Index of the first frequency bin inside the breathing band, or -1."""
    lo, _ = BREATHING_BAND_HZ
    idx = np.flatnonzero(freqs >= lo - 1e-12)
    return int(idx[0]) if idx.size else -1


def crop(rf_map: RangeFrequencyMap, config: RadarConfig = RadarConfig()) -> RangeFrequencyMap:
    """Keep 13 in-band frequency bins and the 36 range bins after the first path.

    The 13 bins start at the first bin >= 0.09 Hz and must end within half a
    bin of 0.5 Hz; this only holds for roughly 30 s windows.
    """
    freqs = rf_map.freq_axis_hz
    _, hi = BREATHING_BAND_HZ
    start = _band_start(freqs)
    stop = start + N_FREQ_BINS
    if start < 0 or stop > len(freqs):
        raise ValueError("map does not contain 13 in-band frequency bins")
    df = freqs[1] - freqs[0] if len(freqs) > 1 else np.inf
    if abs(freqs[stop - 1] - hi) > df / 2 + 1e-12:
        raise ValueError(
            f"frequency resolution {df:.4f} Hz cannot place 13 bins in the breathing band"
        )

    first = config.first_path_index + 1
    col = first - rf_map.range_bin_offset
    if col < 0 or col + N_RANGE_BINS > rf_map.data.shape[1]:
        raise ValueError("map does not cover the 36 range bins after the first path")
    data = rf_map.data[start:stop, col : col + N_RANGE_BINS]
    return RangeFrequencyMap(data, freqs[start:stop], first)


def fit_norm(training_maps) -> NormParams:
    """Global min/max over every value of the training maps."""
    maps = list(training_maps)
    if not maps:
        raise ValueError("fit_norm needs at least one map")
    lo = min(float(np.min(m.data)) for m in maps)
    hi = max(float(np.max(m.data)) for m in maps)
    if lo == hi:
        raise ValueError("training maps are constant; min-max normalisation undefined")
    return NormParams(lo, hi)


def normalize(rf_map: RangeFrequencyMap, norm: NormParams) -> ModelInput:
    if rf_map.shape != (N_FREQ_BINS, N_RANGE_BINS):
        raise ValueError(f"expected a cropped {N_FREQ_BINS}x{N_RANGE_BINS} map, got {rf_map.shape}")
    scaled = (rf_map.data - norm.min_val) / (norm.max_val - norm.min_val)
    # validation data may fall outside the training extrema
    return ModelInput(np.clip(scaled, 0.0, 1.0).T.copy(), norm)


def cropped_maps(cir: CirMatrix, spec: WindowSpec = WindowSpec()) -> list[RangeFrequencyMap]:
    """Stages a-e without normalisation: one cropped map per window."""
    amp = amplitude(cir)
    return [crop(range_fft(w), cir.config) for w in windows(amp, spec)]
