import numpy as np
import pytest

from uwb_breath.cir_synth import BreathingTarget, CirMatrix, ClutterSpec, RadarConfig, decimate, synthesize
from uwb_breath.preprocess import (
    AmplitudeMatrix,
    NormParams,
    RangeFrequencyMap,
    WindowSpec,
    amplitude,
    crop,
    cropped_maps,
    fit_norm,
    normalize,
    range_fft,
    window_rows,
    windows,
)


def naive_dft_mag(x):
    """O(n^2) oracle: one-sided DFT magnitudes of mean-removed columns."""
    x = x - x.mean(axis=0, keepdims=True)
    n = x.shape[0]
    k = np.arange(n // 2 + 1)[:, None]
    basis = np.exp(-2j * np.pi * k * np.arange(n)[None, :] / n)
    return np.abs(basis @ x)


def _amp(data, rate=77.5):
    return AmplitudeMatrix(np.asarray(data, dtype=float), rate)


def test_amplitude_examples():
    row = np.zeros((1, 41), dtype=np.complex64)
    row[0, 0], row[0, 1], row[0, 2], row[0, 3] = 3 + 4j, 0, 1, 2
    amp = amplitude(CirMatrix(row, 77.5)).data[0]
    assert amp[0] == pytest.approx(5.0)
    assert amp[1] == 0.0
    assert tuple(amp[2:4]) == (1.0, 2.0)


@pytest.mark.parametrize("seconds, count", [(120, 7), (60, 3), (30, 1)])
def test_window_counts(seconds, count):
    n = int(seconds * 77.5)
    spans = window_rows(n, 77.5, WindowSpec())
    assert len(spans) == count
    assert all(b - a == 2325 for a, b in spans)
    assert spans[-1][1] <= n
    assert len(windows(_amp(np.zeros((n, 41))))) == count


def test_window_too_short():
    with pytest.raises(ValueError):
        window_rows(100, 77.5, WindowSpec())


def test_window_spec_validation():
    with pytest.raises(ValueError):
        WindowSpec(30.0, 40.0)


@pytest.mark.parametrize("n", [2, 7, 64, 101, 256])
def test_range_fft_matches_naive_dft(n, rng):
    x = rng.normal(size=(n, 5)) + 3.0
    got = range_fft(_amp(x)).data
    want = naive_dft_mag(x)
    assert np.max(np.abs(got - want)) <= 1e-6 * np.max(np.abs(want))


def test_constant_column_is_zero():
    out = range_fft(_amp(np.full((2325, 3), 7.0))).data
    assert np.max(np.abs(out)) < 1e-9


def test_sine_peaks_at_bin_six():
    t = np.arange(2325) / 77.5
    out = range_fft(_amp(np.sin(2 * np.pi * 0.2 * t)[:, None]))
    assert int(np.argmax(out.data[:, 0])) == 6
    assert out.freq_axis_hz[6] == pytest.approx(0.2)


def test_parseval(rng):
    x = rng.normal(size=(2325, 4)) + 1.0
    n = len(x)
    full = np.fft.fft(x - x.mean(0), axis=0)
    # one-sided magnitudes counted twice except DC and Nyquist
    half = range_fft(_amp(x)).data
    weights = np.full(half.shape[0], 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    one_sided = (weights[:, None] * half**2).sum(0) / n
    np.testing.assert_allclose(one_sided, n * x.var(0), rtol=1e-6)
    np.testing.assert_allclose((np.abs(full) ** 2).sum(0) / n, n * x.var(0), rtol=1e-6)


def test_crop_shape_and_band_edges():
    full = range_fft(_amp(np.random.default_rng(0).random((2325, 41))))
    c = crop(full)
    assert c.shape == (13, 36)
    assert c.range_bin_offset == 4
    assert c.freq_axis_hz[0] == pytest.approx(0.1)  # bin 3 kept
    assert 2 / 30 not in list(np.round(c.freq_axis_hz, 9))  # bin 2 dropped
    assert c.freq_axis_hz[-1] == pytest.approx(0.5)
    np.testing.assert_array_equal(c.data, full.data[3:16, 4:40])


def test_crop_idempotent():
    c = crop(range_fft(_amp(np.random.default_rng(1).random((2325, 41)))))
    again = crop(c)
    np.testing.assert_array_equal(again.data, c.data)
    np.testing.assert_array_equal(again.freq_axis_hz, c.freq_axis_hz)


def test_crop_rejects_wrong_resolution():
    full = range_fft(_amp(np.random.default_rng(0).random((60 * 78, 41))))
    with pytest.raises(ValueError):
        crop(full)


def test_decimated_axis_nearly_identical():
    # 581 rows at 19.375 Hz span 29.99 s, so bins sit within 0.05% of k/30
    full = range_fft(_amp(np.random.default_rng(0).random((581, 41)), 19.375))
    c = crop(full)
    assert c.shape == (13, 36)
    np.testing.assert_allclose(c.freq_axis_hz, np.arange(3, 16) / 30, rtol=1e-3)


def test_clean_scene_argmax_location():
    cfg = RadarConfig()
    tgt = BreathingTarget(1.275, 0.2, 0.004)
    cir = synthesize(cfg, tgt, ClutterSpec(), 30.0, 0)
    c = cropped_maps(cir)[0]
    f_idx, r_idx = np.unravel_index(np.argmax(c.data), c.shape)
    assert c.freq_axis_hz[f_idx] == pytest.approx(0.2)
    assert abs(r_idx - (cfg.range_bin(1.275) - 4)) <= 1


def test_fit_norm_examples():
    axis = np.arange(13) / 30 + 0.1
    maps = [RangeFrequencyMap(np.arange(13 * 36).reshape(13, 36) % 11 * 1.0, axis)]
    assert fit_norm(maps) == NormParams(0.0, 10.0)
    single = RangeFrequencyMap(np.full((13, 36), 2.0) + np.eye(13, 36), axis)
    assert fit_norm([single]) == NormParams(2.0, 3.0)
    with pytest.raises(ValueError):
        fit_norm([])
    with pytest.raises(ValueError):
        fit_norm([RangeFrequencyMap(np.ones((13, 36)), axis)])


def test_normalize_and_clamp():
    axis = np.arange(13) / 30 + 0.1
    data = np.zeros((13, 36))
    data[0, 0], data[1, 0], data[2, 0], data[3, 0] = 10.0, 5.0, 12.0, -3.0
    out = normalize(RangeFrequencyMap(data, axis), NormParams(0.0, 10.0))
    assert out.data.shape == (36, 13)
    assert out.data[0, 0] == 1.0
    assert out.data[0, 1] == 0.5
    assert out.data[0, 2] == 1.0
    assert out.data[0, 3] == 0.0
    assert out.data[5, 5] == 0.0


def test_normalize_rejects_uncropped():
    with pytest.raises(ValueError):
        normalize(RangeFrequencyMap(np.ones((14, 36)), np.arange(14.0)), NormParams(0, 1))


def test_pipeline_deterministic():
    cir = synthesize(RadarConfig(), BreathingTarget(1.5, 0.3), ClutterSpec(noise_sigma=0.05), 60.0, 3)
    a = [m.data.tobytes() for m in cropped_maps(cir)]
    b = [m.data.tobytes() for m in cropped_maps(cir)]
    assert a == b


def test_decimated_pipeline_runs():
    cir = synthesize(RadarConfig(), BreathingTarget(1.5, 0.3), ClutterSpec(), 60.0, 3)
    maps = cropped_maps(decimate(cir, 20.0))
    assert len(maps) == 3 and all(m.shape == (13, 36) for m in maps)
