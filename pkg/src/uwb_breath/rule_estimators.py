"""Rule-based breathing-rate estimators on cropped range-frequency maps.

All three return breaths per minute at a bin-centre frequency (no peak
interpolation). Ties in the argmax estimators resolve to the lowest
frequency index, then the lowest range index.
"""

from __future__ import annotations

import numpy as np

from .preprocess import RangeFrequencyMap


def _check(rf_map: RangeFrequencyMap) -> np.ndarray:
    data = np.asarray(rf_map.data, dtype=float)
    if data.size == 0:
        raise ValueError("empty range-frequency map")
    return data


def highest_peak(rf_map: RangeFrequencyMap) -> float:
    data = _check(rf_map)
    # row-major argmax: first hit is lowest frequency, then lowest range
    i_max, _ = np.unravel_index(np.argmax(data), data.shape)
    return 60.0 * float(rf_map.freq_axis_hz[i_max])


def accumulate(rf_map: RangeFrequencyMap) -> np.ndarray:
    """Per-frequency sum over all range bins."""
    return np.asarray(rf_map.data, dtype=float).sum(axis=1)


def accumulated_highest_peak(rf_map: RangeFrequencyMap) -> float:
    _check(rf_map)
    return 60.0 * float(rf_map.freq_axis_hz[int(np.argmax(accumulate(rf_map)))])


def accumulated_weighted_average(rf_map: RangeFrequencyMap) -> float:
    _check(rf_map)
    a = accumulate(rf_map)
    total = a.sum()
    if total <= 0:
        raise ValueError("all-zero map: weighted average undefined")
    return 60.0 * float(np.dot(a / total, rf_map.freq_axis_hz))


ESTIMATORS = {
    "highest-peak": highest_peak,
    "accumulated-highest-peak": accumulated_highest_peak,
    "accumulated-weighted-average": accumulated_weighted_average,
}
