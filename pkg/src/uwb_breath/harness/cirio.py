"""CIR capture files: the native ``UWBC`` binary format and a CSV adapter.

Both formats are little-endian/ASCII and described byte for byte in
docs/formats.md. Import errors are split by cause so callers can tell a
foreign or truncated file from one with bad dimensions or bad values.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..cir_synth import CirMatrix, RadarConfig
from .dataset import Recording

MAGIC = b"UWBC"
VERSION = 1
FLAG_GROUND_TRUTH = 1

_HEADER = struct.Struct("<4sHHIIdHdii")


class CirFormatError(ValueError):
    """Base class for unreadable CIR files."""


class CirHeaderError(CirFormatError):
    """Missing, truncated or foreign header."""


class CirDimensionError(CirFormatError):
    """Payload size or column layout does not match the declared dimensions."""


class CirValueError(CirFormatError):
    """NaN or infinite samples or ground-truth values."""


@dataclass(frozen=True, eq=False)
class ImportedCir:
    cir: CirMatrix
    person_id: int
    setup_id: int
    gt_bpm: np.ndarray | None = None

    @property
    def slow_rate_hz(self) -> float:
        return self.cir.slow_rate_hz

    def to_recording(self) -> Recording:
        if self.gt_bpm is None:
            raise CirFormatError("the file carries no ground-truth series")
        return Recording(self.cir, self.gt_bpm, self.person_id, self.setup_id, source="imported")


def _check_finite(data: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(data)):
        bad = int(np.size(data) - np.count_nonzero(np.isfinite(data)))
        raise CirValueError(f"{bad} non-finite {what} value(s)")


def _config(n_fast: int, rate: float, first_path: int, spacing: float) -> RadarConfig:
    try:
        return replace(
            RadarConfig(),
            slow_rate_hz=rate,
            n_fast=n_fast,
            first_path_index=first_path,
            fast_spacing_m=spacing,
        )
    except ValueError as exc:
        raise CirHeaderError(f"invalid radar parameters: {exc}") from None


# native binary -------------------------------------------------------------


def to_bytes(cir: CirMatrix, person_id: int, setup_id: int, gt_bpm=None) -> bytes:
    flags = FLAG_GROUND_TRUTH if gt_bpm is not None else 0
    cfg = cir.config
    buf = io.BytesIO()
    buf.write(
        _HEADER.pack(
            MAGIC,
            VERSION,
            flags,
            cir.n_slow,
            cir.n_fast,
            cir.slow_rate_hz,
            cfg.first_path_index,
            cfg.fast_spacing_m,
            person_id,
            setup_id,
        )
    )
    buf.write(np.ascontiguousarray(cir.data, dtype="<c8").tobytes())
    if gt_bpm is not None:
        gt = np.asarray(gt_bpm, dtype="<f4")
        if gt.shape != (cir.n_slow,):
            raise ValueError("ground truth needs one value per slow-time row")
        buf.write(gt.tobytes())
    return buf.getvalue()


def from_bytes(data: bytes) -> ImportedCir:
    if len(data) < _HEADER.size:
        raise CirHeaderError(f"truncated header: {len(data)} of {_HEADER.size} bytes")
    magic, version, flags, n_slow, n_fast, rate, first_path, spacing, person, setup = _HEADER.unpack_from(
        data
    )
    if magic != MAGIC:
        raise CirHeaderError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CirHeaderError(f"unsupported version {version}")
    if flags & ~FLAG_GROUND_TRUTH:
        raise CirHeaderError(f"unknown flag bits {flags:#x}")
    if not np.isfinite(rate) or rate <= 0:
        raise CirHeaderError(f"invalid slow-time rate {rate}")
    if n_slow == 0 or n_fast == 0:
        raise CirDimensionError(f"empty matrix {n_slow} x {n_fast}")
    has_gt = bool(flags & FLAG_GROUND_TRUTH)
    expected = _HEADER.size + 8 * n_slow * n_fast + (4 * n_slow if has_gt else 0)
    if len(data) != expected:
        raise CirDimensionError(
            f"payload is {len(data) - _HEADER.size} bytes, header dims {n_slow} x {n_fast} "
            f"need {expected - _HEADER.size}"
        )
    off = _HEADER.size
    iq = np.frombuffer(data, dtype="<c8", count=n_slow * n_fast, offset=off).reshape(n_slow, n_fast)
    _check_finite(iq.view("<f4"), "IQ")
    gt = None
    if has_gt:
        gt = np.frombuffer(data, dtype="<f4", count=n_slow, offset=off + 8 * n_slow * n_fast)
        _check_finite(gt, "ground-truth")
        gt = gt.astype(np.float64)
    cfg = _config(n_fast, rate, first_path, spacing)
    return ImportedCir(CirMatrix(iq.astype(np.complex64), rate, cfg), person, setup, gt)


def write_cir(path, cir: CirMatrix, person_id: int, setup_id: int, gt_bpm=None) -> None:
    Path(path).write_bytes(to_bytes(cir, person_id, setup_id, gt_bpm))


def read_cir(path) -> ImportedCir:
    return from_bytes(Path(path).read_bytes())


# CSV adapter ----------------------------------------------------------------

_META_KEYS = ("slow_rate_hz", "person_id", "setup_id", "first_path_index", "fast_spacing_m")


def _f32(x) -> str:
    return repr(float(np.float32(x)))


def to_csv(cir: CirMatrix, person_id: int, setup_id: int, gt_bpm=None) -> str:
    out = io.StringIO()
    meta = {
        "format": "uwbc-csv",
        "version": VERSION,
        "slow_rate_hz": repr(float(cir.slow_rate_hz)),
        "person_id": person_id,
        "setup_id": setup_id,
        "first_path_index": cir.config.first_path_index,
        "fast_spacing_m": repr(float(cir.config.fast_spacing_m)),
    }
    for k, v in meta.items():
        out.write(f"# {k}={v}\n")
    writer = csv.writer(out, lineterminator="\n")
    header = [f"{c}{j}" for j in range(cir.n_fast) for c in ("i", "q")]
    if gt_bpm is not None:
        header.append("gt_bpm")
    writer.writerow(header)
    gt = None if gt_bpm is None else np.asarray(gt_bpm, dtype=np.float32)
    for n, row in enumerate(cir.data):
        cells = []
        for v in row:
            cells += [_f32(v.real), _f32(v.imag)]
        if gt is not None:
            cells.append(_f32(gt[n]))
        writer.writerow(cells)
    return out.getvalue()


def from_csv(text: str) -> ImportedCir:
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if not sep:
                raise CirHeaderError(f"metadata line without '=': {line!r}")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    if meta.get("format") != "uwbc-csv":
        raise CirHeaderError("missing '# format=uwbc-csv' metadata line")
    missing = [k for k in _META_KEYS if k not in meta]
    if missing:
        raise CirHeaderError(f"missing metadata keys: {', '.join(missing)}")
    try:
        rate = float(meta["slow_rate_hz"])
        person, setup = int(meta["person_id"]), int(meta["setup_id"])
        first_path, spacing = int(meta["first_path_index"]), float(meta["fast_spacing_m"])
    except ValueError as exc:
        raise CirHeaderError(f"bad metadata value: {exc}") from None
    if not body:
        raise CirDimensionError("no column header and no samples")
    rows = list(csv.reader(body))
    header, samples = rows[0], rows[1:]
    has_gt = bool(header) and header[-1] == "gt_bpm"
    iq_cols = header[:-1] if has_gt else header
    if len(iq_cols) == 0 or len(iq_cols) % 2:
        raise CirDimensionError(f"expected I/Q column pairs, got {len(iq_cols)} columns")
    expected = [f"{c}{j}" for j in range(len(iq_cols) // 2) for c in ("i", "q")]
    if iq_cols != expected:
        raise CirDimensionError("columns must be i0,q0,i1,q1,... in order")
    if not samples:
        raise CirDimensionError("no samples")
    width = len(header)
    for n, row in enumerate(samples):
        if len(row) != width:
            raise CirDimensionError(f"row {n} has {len(row)} fields, the header has {width}")
    try:
        values = np.array(samples, dtype=np.float64)
    except ValueError as exc:
        raise CirValueError(f"unparsable sample: {exc}") from None
    iq = values[:, : len(iq_cols)].astype(np.float32)
    _check_finite(iq, "IQ")
    gt = None
    if has_gt:
        gt = values[:, -1].astype(np.float32)
        _check_finite(gt, "ground-truth")
        gt = gt.astype(np.float64)
    data = (iq[:, 0::2] + 1j * iq[:, 1::2]).astype(np.complex64)
    cfg = _config(data.shape[1], rate, first_path, spacing)
    return ImportedCir(CirMatrix(data, rate, cfg), person, setup, gt)


def write_csv(path, cir: CirMatrix, person_id: int, setup_id: int, gt_bpm=None) -> None:
    Path(path).write_text(to_csv(cir, person_id, setup_id, gt_bpm))


def read_csv(path) -> ImportedCir:
    return from_csv(Path(path).read_text())


def import_cir(path, fmt: str | None = None) -> ImportedCir:
    """Read a capture; ``fmt`` is ``native-binary`` or ``csv`` (default: by extension)."""
    if fmt is None:
        fmt = "csv" if str(path).lower().endswith(".csv") else "native-binary"
    if fmt == "csv":
        return read_csv(path)
    if fmt == "native-binary":
        return read_cir(path)
    raise ValueError(f"unknown CIR format {fmt!r}; choose native-binary or csv")
