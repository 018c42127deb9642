"""Binary container for trained models (float32 and 8-bit variants).

Little-endian throughout; the byte layout is described in docs/formats.md.
The container stores the layer specs, the normalisation extrema and one
record per tensor, so a loaded model reproduces the original's outputs
bit for bit.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from ..preprocess import NormParams
from .layers import LayerSpec
from .model import CnnModel

MAGIC = b"UWBM"
VERSION = 1
DTYPE_F32, DTYPE_U8 = 0, 1

KIND_CODES = {"conv": 0, "maxpool": 1, "dense": 2, "dropout": 3, "flatten": 4}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}
TENSOR_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("u1"), 2: np.dtype("<i4")}
TENSOR_CODES = {v: k for k, v in TENSOR_DTYPES.items()}

_HEADER = struct.Struct("<4sHBBH3Hdd")
_LAYER = struct.Struct("<BBHBBBBHddB")


class ModelFormatError(ValueError):
    """The bytes are not a model container this version can read."""


def write_header(buf, dtype_tag: int, n_layers: int, input_shape, norm: NormParams | None) -> None:
    flags = 1 if norm is not None else 0
    lo, hi = (norm.min_val, norm.max_val) if norm is not None else (0.0, 0.0)
    buf.write(_HEADER.pack(MAGIC, VERSION, dtype_tag, flags, n_layers, *input_shape, lo, hi))


def read_header(buf):
    raw = buf.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise ModelFormatError("truncated model header")
    magic, version, dtype_tag, flags, n_layers, h, w, c, lo, hi = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    if dtype_tag not in (DTYPE_F32, DTYPE_U8):
        raise ModelFormatError(f"unknown dtype tag {dtype_tag}")
    norm = NormParams(lo, hi) if flags & 1 else None
    return dtype_tag, n_layers, (h, w, c), norm


def write_layer_spec(buf, spec: LayerSpec, n_tensors: int) -> None:
    buf.write(
        _LAYER.pack(
            KIND_CODES[spec.kind],
            int(spec.relu),
            spec.filters,
            *spec.kernel,
            *spec.strides,
            spec.units,
            spec.l2,
            spec.rate,
            n_tensors,
        )
    )


def read_layer_spec(buf) -> tuple[LayerSpec, int]:
    raw = _read_exact(buf, _LAYER.size, "layer record")
    kind, relu, filters, kh, kw, sh, sw, units, l2, rate, n_tensors = _LAYER.unpack(raw)
    if kind not in KIND_NAMES:
        raise ModelFormatError(f"unknown layer kind code {kind}")
    spec = LayerSpec(
        KIND_NAMES[kind],
        filters=filters,
        kernel=(kh, kw),
        strides=(sh, sw),
        units=units,
        relu=bool(relu),
        l2=float(l2),
        rate=float(rate),
    )
    return spec, n_tensors


def write_tensor(buf, key: str, array: np.ndarray) -> None:
    arr = np.asarray(array)
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    code = TENSOR_CODES.get(np.dtype(dt).newbyteorder("<") if dt.kind != "u" else np.dtype("u1"))
    if code is None:
        raise ModelFormatError(f"cannot store dtype {arr.dtype}")
    buf.write(struct.pack("<cBB", key.encode("ascii"), code, arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(np.ascontiguousarray(arr, dtype=TENSOR_DTYPES[code]).tobytes())


def read_tensor(buf) -> tuple[str, np.ndarray]:
    key, code, ndim = struct.unpack("<cBB", _read_exact(buf, 3, "tensor record"))
    if code not in TENSOR_DTYPES:
        raise ModelFormatError(f"unknown tensor dtype code {code}")
    shape = struct.unpack(f"<{ndim}I", _read_exact(buf, 4 * ndim, "tensor shape"))
    dt = TENSOR_DTYPES[code]
    n = int(np.prod(shape)) if ndim else 1
    data = np.frombuffer(_read_exact(buf, n * dt.itemsize, "tensor data"), dtype=dt).reshape(shape)
    return key.decode("ascii"), data.copy()


def _read_exact(buf, n: int, what: str) -> bytes:
    raw = buf.read(n)
    if len(raw) != n:
        raise ModelFormatError(f"truncated {what}: wanted {n} bytes, got {len(raw)}")
    return raw


def model_to_bytes(model: CnnModel) -> bytes:
    if model.dtype != np.float32:
        model = model.astype(np.float32)
    buf = io.BytesIO()
    write_header(buf, DTYPE_F32, len(model.layers), model.input_shape, model.norm)
    for layer in model.layers:
        write_layer_spec(buf, layer.spec, len(layer.params))
        for key, value in layer.params.items():
            write_tensor(buf, key, value)
    return buf.getvalue()


def model_from_bytes(data: bytes) -> CnnModel:
    buf = io.BytesIO(data)
    dtype_tag, n_layers, input_shape, norm = read_header(buf)
    if dtype_tag != DTYPE_F32:
        raise ModelFormatError("this is an 8-bit model; load it with the quantization module")
    specs, tensors = [], []
    for _ in range(n_layers):
        spec, n_tensors = read_layer_spec(buf)
        specs.append(spec)
        tensors.append(dict(read_tensor(buf) for _ in range(n_tensors)))
    if buf.read(1):
        raise ModelFormatError("trailing bytes after the last layer")
    try:
        model = CnnModel(specs, input_shape)
    except ValueError as exc:
        raise ModelFormatError(f"inconsistent layer specs: {exc}") from None
    for layer, stored in zip(model.layers, tensors):
        if set(stored) != set(layer.params):
            raise ModelFormatError(f"{layer.spec.kind} layer expects tensors {sorted(layer.params)}")
        for key, value in stored.items():
            if value.shape != layer.params[key].shape:
                raise ModelFormatError(
                    f"{layer.spec.kind} tensor {key} has shape {value.shape}, "
                    f"expected {layer.params[key].shape}"
                )
            layer.params[key] = value.astype(np.float32)
    model.norm = norm
    return model


def save_model(model: CnnModel, path) -> int:
    data = model_to_bytes(model)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def load_model(path) -> CnnModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())


def weight_payload_bytes(model: CnnModel) -> int:
    """Bytes of raw float32 weights, excluding container metadata."""
    return 4 * model.n_params()
