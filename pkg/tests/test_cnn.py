import io

import numpy as np
import pytest

from uwb_breath.cnn import fileformat as ff
from uwb_breath.cnn.gradcheck import SMALL_CNN, check_gradients, random_instance
from uwb_breath.cnn.layers import LayerSpec, same_padding
from uwb_breath.cnn.model import BREATHING_CNN, CnnModel, shape_plan
from uwb_breath.cnn.training import TrainConfig, _with_l2, fit_replicates, median_index
from uwb_breath.preprocess import NormParams

EXPECTED_PLAN = [
    (36, 13, 8), (18, 6, 8), (18, 6, 16), (9, 3, 16), (9, 3, 32), (4, 2, 32),
    (4, 2, 64), (2, 1, 64), (128,), (64,), (64,), (16,), (16,), (1,),
]


def test_shape_plan():
    assert shape_plan() == EXPECTED_PLAN


def test_parameter_count():
    model = CnnModel()
    per_layer = [sum(p.size for p in layer.params.values()) for layer in model.layers]
    assert [n for n in per_layer if n] == [808, 8208, 8224, 8256, 8256, 1040, 17]
    assert model.n_params() == 34_809


def test_shape_plan_rejects_collapse():
    with pytest.raises(ValueError):
        shape_plan(BREATHING_CNN, (4, 4, 1))


def _zeroed(model):
    for _, p in model.named_params():
        p[...] = 0
    return model


def test_zero_model_outputs_zero(rng):
    model = _zeroed(CnnModel())
    assert np.all(model.predict(rng.random((4, 36, 13))) == 0.0)


def test_final_bias_passes_through(rng):
    model = _zeroed(CnnModel())
    model.layers[-1].params["b"][:] = 14.5
    np.testing.assert_allclose(model.predict(rng.random((3, 36, 13))), 14.5)


def conv_oracle(x, W, b):
    """Explicit loops, 'same' padding, stride 1, NHWC."""
    n, h, w, cin = x.shape
    kh, kw, _, cout = W.shape
    (pt, _), (pl, _) = same_padding(kh), same_padding(kw)
    out = np.zeros((n, h, w, cout))
    for a in range(n):
        for i in range(h):
            for j in range(w):
                for o in range(cout):
                    s = b[o]
                    for u in range(kh):
                        for v in range(kw):
                            r, c = i + u - pt, j + v - pl
                            if 0 <= r < h and 0 <= c < w:
                                s += np.dot(x[a, r, c, :], W[u, v, :, o])
                    out[a, i, j, o] = s
    return out


@pytest.mark.parametrize("kernel, shape", [((2, 2), (2, 2, 1)), ((3, 2), (4, 5, 2)), ((4, 4), (5, 3, 1))])
def test_conv_matches_oracle(kernel, shape, rng):
    spec = (LayerSpec("conv", filters=3, kernel=kernel),)
    model = CnnModel(spec, shape, seed=1, dtype=np.float64)
    layer = model.layers[0]
    layer.params["b"][:] = rng.normal(size=3)
    x = rng.normal(size=(2,) + shape)
    got = layer.forward(x)
    np.testing.assert_allclose(got, conv_oracle(x, layer.params["W"], layer.params["b"]), atol=1e-6)


def test_maxpool_and_dense_by_hand():
    specs = (LayerSpec.maxpool((2, 1)), LayerSpec.flatten(), LayerSpec.dense(1, relu=False))
    model = CnnModel(specs, (4, 2, 1), dtype=np.float64)
    x = np.array([[1, 5], [3, 2], [0, -1], [4, 4]], dtype=float)[None, :, :, None]
    pooled = model.layers[0].forward(x)
    # kernel 2x2, strides (2, 1): output 2 x 1
    np.testing.assert_array_equal(pooled[0, :, :, 0], [[5], [4]])
    model.layers[2].params["W"][:] = [[2.0], [-1.0]]
    model.layers[2].params["b"][:] = 0.5
    assert model.forward(x)[0, 0] == pytest.approx(2 * 5 - 4 + 0.5)


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    model, x, y = random_instance(seed)
    result = check_gradients(model, x, y)
    assert result.checked > 100
    assert result.max_rel_error < 1e-4, result.rel_errors
    kinds = {model.layers[int(name[5:].split(".")[0])].spec.kind for name in result.rel_errors if name != "input"}
    assert kinds == {"conv", "dense"}


def test_zero_input_gradients_only_reach_biases():
    model = CnnModel(_with_l2(SMALL_CNN, 0.0), (6, 5, 1), seed=0, dtype=np.float64)
    for (i, key), p in model.named_params():
        if key == "b":
            p[:] = 0.1
    x = np.zeros((2, 6, 5, 1))
    _, _, grads = model.loss_and_grads(x, np.zeros(2), np.random.default_rng(0))
    for ((i, key), _), g in zip(model.named_params(), grads):
        if key == "W" and i == 0:
            assert np.all(g == 0)
    assert any(np.any(g != 0) for ((_, k), _), g in zip(model.named_params(), grads) if k == "b")


def test_l2_term_and_gradient(rng):
    specs = (LayerSpec.flatten(), LayerSpec.dense(1, relu=False, l2=0.01))
    model = CnnModel(specs, (2, 2, 1), seed=0, dtype=np.float64)
    no_l2 = CnnModel((LayerSpec.flatten(), LayerSpec.dense(1, relu=False, l2=0.0)), (2, 2, 1), seed=0, dtype=np.float64)
    x, y = rng.random((3, 2, 2, 1)), rng.random(3)
    loss, data, grads = model.loss_and_grads(x, y)
    loss0, _, grads0 = no_l2.loss_and_grads(x, y)
    w = model.layers[1].params["W"]
    assert loss - data == pytest.approx(0.01 * np.sum(w**2))
    assert loss0 == pytest.approx(data)
    np.testing.assert_allclose(grads[0] - grads0[0], 2 * 0.01 * w)


def test_median_rule():
    losses = [1, 2, 9, 2, 3, 4, 5, 2, 3, 7]
    assert losses[median_index(losses)] == 3
    assert median_index([4.0]) == 0
    assert median_index([3.0, 1.0, 2.0]) == 2


def _toy_data(rng, n=64):
    x = rng.random((n, 6, 5, 1)).astype(np.float32)
    y = 10 + 5 * x[:, 2, 2, 0]
    return x, y


def test_single_replicate_is_returned(rng):
    x, y = _toy_data(rng)
    cfg = TrainConfig(epochs=3, replicates=1, specs=SMALL_CNN)
    res = fit_replicates(x[:48], y[:48], x[48:], y[48:], cfg)
    assert res.selected == 0 and len(res.replicate_losses) == 1
    assert res.val_loss == res.replicate_losses[0]


def test_replicates_pick_median(rng):
    x, y = _toy_data(rng)
    cfg = TrainConfig(epochs=3, replicates=4, specs=SMALL_CNN)
    res = fit_replicates(x[:48], y[:48], x[48:], y[48:], cfg)
    assert res.replicate_losses[res.selected] == sorted(res.replicate_losses)[1]
    pred_loss = float(np.mean((res.model.predict(x[48:]) - y[48:]) ** 2))
    assert pred_loss == pytest.approx(res.val_loss, rel=1e-5)


def test_training_is_deterministic(rng):
    x, y = _toy_data(rng)
    cfg = TrainConfig(epochs=3, replicates=1, specs=SMALL_CNN, seed=4)
    a = fit_replicates(x[:48], y[:48], x[48:], y[48:], cfg)
    b = fit_replicates(x[:48], y[:48], x[48:], y[48:], cfg)
    assert all(np.array_equal(p, q) for p, q in zip(a.model.get_weights(), b.model.get_weights()))


def test_warm_start_never_worse_than_init(rng):
    x, y = _toy_data(rng)
    cfg = TrainConfig(epochs=5, replicates=1, specs=SMALL_CNN)
    base = fit_replicates(x[:48], y[:48], x[48:], y[48:], cfg)
    tuned = fit_replicates(x[:48], y[:48], x[48:], y[48:], cfg, init=base.model)
    assert tuned.val_loss <= base.val_loss + 1e-9


def test_row_shuffle_changes_output(rng):
    model = CnnModel(seed=3)
    for layer in model.layers:
        if "b" in layer.params:
            layer.params["b"][:] = 0.05
    x = rng.random((1, 36, 13))
    shuffled = x[:, rng.permutation(36)]
    assert model.predict(x)[0] != model.predict(shuffled)[0]


def test_inference_deterministic(rng):
    model = CnnModel(seed=2)
    x = rng.random((5, 36, 13))
    assert model.predict(x).tobytes() == model.predict(x).tobytes()


def test_input_shape_validation():
    with pytest.raises(ValueError):
        CnnModel().predict(np.zeros((2, 13, 36)))


# file format -------------------------------------------------------------------


def test_file_round_trip_bit_identical(tmp_path, rng):
    model = CnnModel(seed=5)
    model.norm = NormParams(0.5, 42.0)
    path = tmp_path / "m.uwbm"
    size = ff.save_model(model, path)
    loaded = ff.load_model(path)
    x = rng.random((4, 36, 13))
    assert model.predict(x).tobytes() == loaded.predict(x).tobytes()
    assert loaded.norm == model.norm
    assert loaded.specs == model.specs
    assert size == path.stat().st_size


def test_payload_size_close_to_141kb():
    model = CnnModel()
    assert ff.weight_payload_bytes(model) == 139_236
    assert abs(len(ff.model_to_bytes(model)) - 141_000) / 141_000 <= 0.02


def test_header_layout():
    data = ff.model_to_bytes(CnnModel())
    assert data[:4] == b"UWBM"
    assert int.from_bytes(data[4:6], "little") == 1
    assert data[6] == 0  # float32 tag


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d[:10],
        lambda d: b"XXXX" + d[4:],
        lambda d: d[:-3],
        lambda d: d + b"\0",
        lambda d: d[:4] + (9).to_bytes(2, "little") + d[6:],
    ],
)
def test_corrupt_files_rejected(mutate):
    data = ff.model_to_bytes(CnnModel(SMALL_CNN, (6, 5, 1)))
    with pytest.raises(ff.ModelFormatError):
        ff.model_from_bytes(mutate(data))


def test_tensor_round_trip():
    buf = io.BytesIO()
    arr = np.arange(24, dtype=np.int32).reshape(2, 3, 4)
    ff.write_tensor(buf, "b", arr)
    buf.seek(0)
    key, back = ff.read_tensor(buf)
    assert key == "b" and np.array_equal(back, arr) and back.dtype == arr.dtype


def test_learns_clean_rates():
    from uwb_breath.cnn.training import TrainConfig
    from uwb_breath.harness.corpus import make_corpus
    from uwb_breath.harness.dataset import dataset_windows, labels
    from uwb_breath.harness.experiments import CnnEstimator

    # clean setups only: 84 persons x 2 setups x 3 windows = 504 training windows
    train = dataset_windows(make_corpus(84, 2, 1, 60.0, seed=21))
    val = dataset_windows(make_corpus(12, 2, 1, 60.0, seed=22))
    assert len(train) >= 500
    fitted = CnnEstimator(TrainConfig(epochs=50, patience=50, replicates=1)).fit(train)
    mae = float(np.mean(np.abs(fitted.predict(val) - labels(val))))
    assert mae <= 1.0
