import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uwb_breath.cir_synth import BreathingTarget, ClutterSpec, RadarConfig, synthesize
from uwb_breath.preprocess import RangeFrequencyMap, cropped_maps
from uwb_breath.rule_estimators import (
    accumulate,
    accumulated_highest_peak,
    accumulated_weighted_average,
    highest_peak,
)

AXIS = np.arange(3, 16) / 30.0  # 0.10 .. 0.50 Hz


def _map(data, axis=None):
    data = np.asarray(data, dtype=float)
    if axis is None:
        axis = AXIS[: data.shape[0]] if data.shape[0] <= 13 else np.arange(data.shape[0]) / 30.0
    return RangeFrequencyMap(data, np.asarray(axis))


# exhaustive references -------------------------------------------------------


def ref_highest_peak(data, axis):
    best, where = -np.inf, None
    for i in range(data.shape[0]):
        for j in range(data.shape[1]):
            if data[i, j] > best:
                best, where = data[i, j], i
    return 60 * axis[where]


def ref_accumulate(data):
    return [sum(data[i, j] for j in range(data.shape[1])) for i in range(data.shape[0])]


def ref_ahp(data, axis):
    a = ref_accumulate(data)
    best, where = -np.inf, None
    for i, v in enumerate(a):
        if v > best:
            best, where = v, i
    return 60 * axis[where]


def ref_awa(data, axis):
    a = ref_accumulate(data)
    return 60 * sum(v * f for v, f in zip(a, axis)) / sum(a)


# examples --------------------------------------------------------------------


def test_single_cell_peak():
    data = np.zeros((13, 36))
    data[3, 17] = 4.0  # 0.2 Hz
    m = _map(data)
    assert highest_peak(m) == pytest.approx(12.0)
    assert accumulated_highest_peak(m) == pytest.approx(12.0)
    assert accumulated_weighted_average(m) == pytest.approx(12.0)


def test_uniform_map_tie_goes_low():
    m = _map(np.ones((13, 36)))
    assert highest_peak(m) == pytest.approx(6.0)
    assert accumulated_highest_peak(m) == pytest.approx(6.0)


def test_accumulate_examples():
    np.testing.assert_array_equal(accumulate(_map(np.ones((13, 36)))), np.full(13, 36.0))
    data = np.zeros((13, 36))
    data[:, 5] = np.arange(13)
    np.testing.assert_array_equal(accumulate(_map(data)), np.arange(13.0))


def test_accumulate_matches_hand_sum(rng):
    data = rng.random((3, 3))
    np.testing.assert_allclose(accumulate(_map(data)), ref_accumulate(data))


def test_two_bins_outvote_single_peak():
    data = np.zeros((13, 3))
    data[2, 0] = data[2, 1] = 3.0  # sum 6 at 0.1667 Hz
    data[8, 2] = 5.0  # biggest single cell at 0.3667 Hz
    m = _map(data)
    assert highest_peak(m) == pytest.approx(60 * AXIS[8])
    assert accumulated_highest_peak(m) == pytest.approx(60 * AXIS[2])


def test_weighted_average_examples():
    data = np.zeros((13, 36))
    data[0, 3] = data[12, 9] = 1.0
    assert accumulated_weighted_average(_map(data)) == pytest.approx(18.0)
    assert accumulated_weighted_average(_map(np.ones((13, 36)))) == pytest.approx(18.0)


def test_weighted_average_rejects_zero_map():
    with pytest.raises(ValueError):
        accumulated_weighted_average(_map(np.zeros((13, 36))))


def test_empty_map_rejected():
    with pytest.raises(ValueError):
        highest_peak(RangeFrequencyMap(np.zeros((0, 0)), np.zeros(0)))


def test_clean_scene_recovers_rate():
    cir = synthesize(RadarConfig(), BreathingTarget(1.275, 0.3, 0.004), ClutterSpec(), 30.0, 0)
    m = cropped_maps(cir)[0]
    assert highest_peak(m) == pytest.approx(18.0)
    assert accumulated_highest_peak(m) == pytest.approx(18.0)


def test_brute_force_small_maps():
    # every 2x2 map over {0,1,2} plus random maps up to 5x5
    for values in itertools.product(range(3), repeat=4):
        data = np.array(values, dtype=float).reshape(2, 2)
        _check_all(data, AXIS[:2])
    rng = np.random.default_rng(0)
    for _ in range(300):
        h, w = rng.integers(1, 6, size=2)
        _check_all(rng.integers(0, 3, size=(h, w)).astype(float), AXIS[:h])


def _check_all(data, axis):
    m = _map(data, axis)
    assert highest_peak(m) == pytest.approx(ref_highest_peak(data, axis))
    assert accumulated_highest_peak(m) == pytest.approx(ref_ahp(data, axis))
    if data.sum() > 0:
        assert accumulated_weighted_average(m) == pytest.approx(ref_awa(data, axis))


maps = arrays(np.float64, st.tuples(st.integers(1, 13), st.integers(1, 8)), elements=st.floats(0.01, 100))


@settings(max_examples=80, deadline=None)
@given(maps, st.floats(0.01, 1000))
def test_scale_invariance(data, c):
    m, scaled = _map(data), _map(data * c)
    assert highest_peak(m) == highest_peak(scaled)
    assert accumulated_highest_peak(m) == accumulated_highest_peak(scaled)
    assert accumulated_weighted_average(m) == pytest.approx(accumulated_weighted_average(scaled))


@settings(max_examples=80, deadline=None)
@given(maps)
def test_outputs_on_axis(data):
    m = _map(data)
    bpm_axis = 60 * m.freq_axis_hz
    assert np.any(np.isclose(highest_peak(m), bpm_axis))
    assert np.any(np.isclose(accumulated_highest_peak(m), bpm_axis))
    awa = accumulated_weighted_average(m)
    assert bpm_axis.min() - 1e-9 <= awa <= bpm_axis.max() + 1e-9


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 13), st.just(1)), elements=st.floats(0, 10)))
def test_single_column_ahp_equals_hp(data):
    m = _map(data)
    assert accumulated_highest_peak(m) == highest_peak(m)
