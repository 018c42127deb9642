"""Post-training 8-bit quantization and integer-only inference.

Weights and activations use per-tensor affine uint8 codes,
``real = scale * (code - zero_point)``, with zero exactly representable.
Biases are int32 at ``input_scale * weight_scale``. Between layers the
int32 accumulator is rescaled by a fixed-point multiplier and a right
shift, rounding half away from zero; ReLU becomes the lower clamp at the
output zero point. Floats appear only when quantizing the input and when
dequantizing the final output.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .cnn import fileformat as ff
from .cnn.layers import LayerSpec, MaxPool2D, same_padding
from .cnn.model import CnnModel, shape_plan
from .preprocess import ModelInput, NormParams

QMIN, QMAX = 0, 255
ACC_LIMIT = 2**31 - 1


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not QMIN <= self.zero_point <= QMAX:
            raise ValueError(f"zero_point {self.zero_point} outside [{QMIN}, {QMAX}]")

    @classmethod
    def from_range(cls, lo: float, hi: float) -> "QuantParams":
        """Affine parameters covering [lo, hi] extended to include zero."""
        lo, hi = min(float(lo), 0.0), max(float(hi), 0.0)
        if hi == lo:
            raise ValueError("degenerate range: min == max, the tensor carries no signal")
        exact = (hi - lo) / (QMAX - QMIN)
        # zero point from the exact scale (float32 rounding can tip a .5 tie);
        # the stored float32 scale is the one used everywhere after that
        zp = int(np.floor(QMIN - lo / exact + 0.5))
        return cls(float(np.float32(exact)), int(np.clip(zp, QMIN, QMAX)))

    def quantize(self, x) -> np.ndarray:
        q = np.floor(np.asarray(x, dtype=np.float64) / self.scale + 0.5) + self.zero_point
        return np.clip(q, QMIN, QMAX).astype(np.uint8)

    def dequantize(self, q) -> np.ndarray:
        return self.scale * (np.asarray(q, dtype=np.float64) - self.zero_point)


def weight_params(w: np.ndarray) -> QuantParams:
    lo, hi = float(np.min(w)), float(np.max(w))
    if lo == hi == 0.0:
        return QuantParams(1.0, 0)  # all-zero tensor: every code is the zero point
    return QuantParams.from_range(lo, hi)


def quantize_multiplier(m: float) -> tuple[int, int]:
    """Return (m0, shift) with m ~= m0 * 2**-shift and m0 in [2**30, 2**31)."""
    if not m > 0:
        raise ValueError("multiplier must be positive")
    frac, exp = np.frexp(m)  # m = frac * 2**exp, frac in [0.5, 1)
    m0 = int(round(float(frac) * 2**31))
    if m0 == 2**31:
        m0 //= 2
        exp += 1
    shift = 31 - int(exp)
    if shift < 1 or shift > 62:
        raise ValueError(f"multiplier {m} out of the representable range")
    return m0, shift


def requantize(acc: np.ndarray, m0: int, shift: int) -> np.ndarray:
    """round_half_away(acc * m0 / 2**shift) in exact integer arithmetic."""
    prod = acc.astype(np.int64) * np.int64(m0)
    half = np.int64(1) << np.int64(shift - 1)
    mag = (np.abs(prod) + half) >> np.int64(shift)
    return np.where(prod < 0, -mag, mag)


@dataclass(frozen=True)
class Calibration:
    input: QuantParams
    outputs: tuple[QuantParams, ...]  # one per layer, after its activation


def _weighted(layer) -> bool:
    return layer.spec.kind in ("conv", "dense")


def calibrate(model: CnnModel, calib_set) -> Calibration:
    """Record each activation's range over ``calib_set`` with float inference."""
    x = _stack(model, calib_set)
    if len(x) == 0:
        raise ValueError("calibration set is empty")
    ranges = [[np.inf, -np.inf] for _ in model.layers]
    in_lo, in_hi = float(x.min()), float(x.max())
    for start in range(0, len(x), 256):
        out = x[start : start + 256]
        for r, layer in zip(ranges, model.layers):
            out = layer.forward(out)
            r[0], r[1] = min(r[0], float(out.min())), max(r[1], float(out.max()))
    params = []
    current = QuantParams.from_range(in_lo, in_hi)
    inp = current
    for i, (layer, (lo, hi)) in enumerate(zip(model.layers, ranges)):
        if _weighted(layer):
            try:
                current = QuantParams.from_range(lo, hi)
            except ValueError:
                raise ValueError(f"layer {i} ({layer.spec.kind}) output is constant zero: dead layer") from None
        # pooling, flattening and dropout keep their input's codes
        params.append(current)
    return Calibration(inp, tuple(params))


def _stack(model: CnnModel, inputs) -> np.ndarray:
    if isinstance(inputs, np.ndarray):
        return model._as_batch(inputs).astype(np.float32)
    items = [i.data if isinstance(i, ModelInput) else np.asarray(i) for i in inputs]
    if not items:
        return np.zeros((0,) + model.input_shape, dtype=np.float32)
    return model._as_batch(np.stack(items)).astype(np.float32)


@dataclass
class QLayer:
    spec: LayerSpec
    out_q: QuantParams
    w_codes: np.ndarray | None = None
    w_q: QuantParams | None = None
    bias: np.ndarray | None = None  # int32
    m0: int = 0
    shift: int = 0

    @property
    def weighted(self) -> bool:
        return self.w_codes is not None


@dataclass
class QuantizedModel:
    input_shape: tuple[int, int, int]
    input_q: QuantParams
    layers: list[QLayer]
    norm: NormParams | None = None
    float_size_bytes: int = 0
    size_bytes: int = field(default=0)

    @property
    def specs(self) -> tuple[LayerSpec, ...]:
        return tuple(l.spec for l in self.layers)

    @property
    def size_ratio(self) -> float:
        return self.size_bytes / self.float_size_bytes if self.float_size_bytes else float("nan")


def quantize_model(model: CnnModel, calib: Calibration) -> QuantizedModel:
    """Quantize weights, derive int32 biases and requantization multipliers."""
    if len(calib.outputs) != len(model.layers):
        raise ValueError("calibration does not match the model's layers")
    layers = []
    prev = calib.input
    for layer, out_q in zip(model.layers, calib.outputs):
        if not _weighted(layer):
            layers.append(QLayer(layer.spec, out_q))
            prev = out_q
            continue
        w = layer.params["W"].astype(np.float64)
        w_q = weight_params(w)
        codes = w_q.quantize(w)
        bias_scale = prev.scale * w_q.scale
        bias = np.round(layer.params["b"].astype(np.float64) / bias_scale)
        fan_in = int(np.prod(w.shape[:-1]))
        _check_accumulator(fan_in, bias, layer.spec.kind)
        m0, shift = quantize_multiplier(bias_scale / out_q.scale)
        layers.append(QLayer(layer.spec, out_q, codes, w_q, bias.astype(np.int32), m0, shift))
        prev = out_q
    qm = QuantizedModel(tuple(model.input_shape), calib.input, layers, model.norm)
    qm.size_bytes = len(qmodel_to_bytes(qm))
    qm.float_size_bytes = len(ff.model_to_bytes(model))
    return qm


def _check_accumulator(fan_in: int, bias: np.ndarray, kind: str) -> None:
    worst = fan_in * (QMAX - QMIN) ** 2 + float(np.max(np.abs(bias), initial=0.0))
    if worst > ACC_LIMIT:
        raise OverflowError(f"{kind} layer can overflow a 32-bit accumulator (bound {worst:.3g})")


# integer inference -------------------------------------------------------


def _conv_q(x: np.ndarray, ql: QLayer, in_zp: int) -> np.ndarray:
    kh, kw = ql.spec.kernel
    (pt, pb), (pl, pr) = same_padding(kh), same_padding(kw)
    n, h, w, _ = x.shape
    # subtract the zero point first so padding with 0 means real zero
    xc = np.pad(x.astype(np.int32) - in_zp, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xc, (kh, kw), axis=(1, 2))
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, -1)
    wc = ql.w_codes.astype(np.int32) - ql.w_q.zero_point
    acc = cols @ wc.reshape(-1, wc.shape[-1]) + ql.bias
    return acc.reshape(n, h, w, -1)


def _dense_q(x: np.ndarray, ql: QLayer, in_zp: int) -> np.ndarray:
    wc = ql.w_codes.astype(np.int32) - ql.w_q.zero_point
    return (x.astype(np.int32) - in_zp) @ wc + ql.bias


def forward_codes(qmodel: QuantizedModel, codes: np.ndarray) -> np.ndarray:
    """Integer inference from input codes to output codes."""
    x = codes
    zp = qmodel.input_q.zero_point
    for ql in qmodel.layers:
        kind = ql.spec.kind
        if kind in ("conv", "dense"):
            acc = _conv_q(x, ql, zp) if kind == "conv" else _dense_q(x, ql, zp)
            out = requantize(acc, ql.m0, ql.shift) + ql.out_q.zero_point
            lo = ql.out_q.zero_point if ql.spec.relu else QMIN
            x = np.clip(out, lo, QMAX).astype(np.uint8)
            zp = ql.out_q.zero_point
        elif kind == "maxpool":
            x = MaxPool2D(ql.spec).forward(x)
        elif kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        # dropout is the identity at inference
    return x


def quantize_input(qmodel: QuantizedModel, x) -> np.ndarray:
    x = np.asarray(x.data if isinstance(x, ModelInput) else x, dtype=np.float64)
    h, w, c = qmodel.input_shape
    if x.shape == (h, w):
        x = x[None]
    if x.ndim == 3:
        x = x[..., None]
    if x.shape[1:] != (h, w, c):
        raise ValueError(f"input shape {x.shape} does not match model input {qmodel.input_shape}")
    return qmodel.input_q.quantize(x)


def forward_q(qmodel: QuantizedModel, x, batch_size: int = 256) -> np.ndarray:
    """BPM predictions; float inputs are quantized with the input parameters first."""
    codes = x if isinstance(x, np.ndarray) and x.dtype == np.uint8 else quantize_input(qmodel, x)
    outs = [forward_codes(qmodel, codes[i : i + batch_size]) for i in range(0, len(codes), batch_size)]
    return qmodel.layers[-1].out_q.dequantize(np.concatenate(outs)[:, 0])


# serialization ------------------------------------------------------------

_QP = struct.Struct("<fB")
_REQ = struct.Struct("<iB")


def qmodel_to_bytes(qm: QuantizedModel) -> bytes:
    buf = io.BytesIO()
    ff.write_header(buf, ff.DTYPE_U8, len(qm.layers), qm.input_shape, qm.norm)
    buf.write(_QP.pack(qm.input_q.scale, qm.input_q.zero_point))
    for ql in qm.layers:
        ff.write_layer_spec(buf, ql.spec, 2 if ql.weighted else 0)
        buf.write(_QP.pack(ql.out_q.scale, ql.out_q.zero_point))
        if ql.weighted:
            buf.write(_QP.pack(ql.w_q.scale, ql.w_q.zero_point))
            buf.write(_REQ.pack(ql.m0, ql.shift))
            ff.write_tensor(buf, "W", ql.w_codes)
            ff.write_tensor(buf, "b", ql.bias)
    return buf.getvalue()


def _read_qp(buf) -> QuantParams:
    scale, zp = _QP.unpack(ff._read_exact(buf, _QP.size, "quantization parameters"))
    try:
        return QuantParams(float(scale), int(zp))
    except ValueError as exc:
        raise ff.ModelFormatError(str(exc)) from None


def qmodel_from_bytes(data: bytes) -> QuantizedModel:
    buf = io.BytesIO(data)
    dtype_tag, n_layers, input_shape, norm = ff.read_header(buf)
    if dtype_tag != ff.DTYPE_U8:
        raise ff.ModelFormatError("this is a float32 model; load it with cnn.fileformat")
    input_q = _read_qp(buf)
    layers = []
    for _ in range(n_layers):
        spec, n_tensors = ff.read_layer_spec(buf)
        out_q = _read_qp(buf)
        if n_tensors == 0:
            layers.append(QLayer(spec, out_q))
            continue
        w_q = _read_qp(buf)
        m0, shift = _REQ.unpack(ff._read_exact(buf, _REQ.size, "requantization record"))
        tensors = dict(ff.read_tensor(buf) for _ in range(n_tensors))
        if set(tensors) != {"W", "b"} or tensors["W"].dtype != np.uint8 or tensors["b"].dtype != np.int32:
            raise ff.ModelFormatError("weighted 8-bit layer needs uint8 W and int32 b")
        layers.append(QLayer(spec, out_q, tensors["W"], w_q, tensors["b"], int(m0), int(shift)))
    if buf.read(1):
        raise ff.ModelFormatError("trailing bytes after the last layer")
    try:
        shape_plan([l.spec for l in layers], input_shape)
    except ValueError as exc:
        raise ff.ModelFormatError(f"inconsistent layer specs: {exc}") from None
    qm = QuantizedModel(input_shape, input_q, layers, norm)
    qm.size_bytes = len(data)
    return qm


def save_qmodel(qm: QuantizedModel, path) -> int:
    data = qmodel_to_bytes(qm)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def load_qmodel(path) -> QuantizedModel:
    with open(path, "rb") as fh:
        return qmodel_from_bytes(fh.read())
