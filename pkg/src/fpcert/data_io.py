"""Datasets, synthetic cases, and bit-exact model serialization.

Model files store every float twice: a 16-hex-digit bit pattern (the
authoritative value; ULP-level work is meaningless if serialization perturbs
weights) and a decimal rendering for human eyes.  Loading prefers the bit
patterns and only falls back to decimals, with a warning, for legacy files.
"""

from __future__ import annotations

import json
import os
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    BitPatternMismatch,
    CountMismatch,
    DimensionMismatch,
    SchemaError,
    TruncatedFile,
)
from .models import LinearModel, ReluNetwork

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


class DecimalFallbackWarning(UserWarning):
    """A model file carried no bit patterns; decimals were trusted instead."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    domain: tuple

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labs = np.ascontiguousarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or labs.ndim != 1 or feats.shape[0] != labs.shape[0]:
            raise DimensionMismatch(f"features {feats.shape} vs labels {labs.shape}")
        vmin, vmax = float(self.domain[0]), float(self.domain[1])
        if feats.size and (feats.min() < vmin or feats.max() > vmax):
            raise SchemaError(f"features escape the domain [{vmin}, {vmax}]")
        feats.flags.writeable = False
        labs.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)
        object.__setattr__(self, "domain", (vmin, vmax))

    @property
    def n(self) -> int:
        return self.features.shape[0]


def _read_idx(path: str, want_magic: int):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise TruncatedFile(f"{path}: no room for a magic number")
    magic = struct.unpack(">i", raw[:4])[0]
    if magic != want_magic:
        raise BadMagic(f"{path}: magic {magic}, wanted {want_magic}")
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise TruncatedFile(f"{path}: truncated dimension header")
    shape = struct.unpack(f">{ndim}i", raw[4:header_end])
    count = 1
    for s in shape:
        count *= s
    if len(raw) - header_end < count:
        raise TruncatedFile(f"{path}: {len(raw) - header_end} payload bytes, wanted {count}")
    data = np.frombuffer(raw, dtype=np.uint8, count=count, offset=header_end)
    return shape, data


def load_idx(images_path: str, labels_path: str, rescale: bool = False) -> Dataset:
    """Parse big-endian IDX image/label files (magics 2051 / 2049)."""
    ishape, idata = _read_idx(images_path, IMAGE_MAGIC)
    lshape, ldata = _read_idx(labels_path, LABEL_MAGIC)
    if ishape[0] != lshape[0]:
        raise CountMismatch(f"{ishape[0]} images vs {lshape[0]} labels")
    feats = idata.reshape(ishape[0], -1).astype(np.float64)
    if rescale:
        feats = feats / 255.0
    return Dataset(feats, ldata.astype(np.int64), (0.0, 1.0) if rescale else (0.0, 255.0))


def gen_random_linear_case(d: int, seed: int):
    """Random linear model and input, all entries uniform on [-1, 1].

    Draw order (w, then b, then x) is part of the reproducibility contract.
    """
    rng = np.random.default_rng(seed)
    w = rng.uniform(-1.0, 1.0, d)
    b = float(rng.uniform(-1.0, 1.0))
    x = rng.uniform(-1.0, 1.0, d)
    return LinearModel(w, b), x


def gen_error_scale_case(d: int):
    """The fixed adversarially-scaled case: tiny weights, huge bias and input."""
    w = np.full(d, 3.3e-9)
    x = np.full(d, 3.3e9)
    return LinearModel(w, 3.3e9), x


def _hex_of(v: float) -> str:
    return format(struct.unpack("<Q", struct.pack("<d", float(v)))[0], "016x")


def _float_of(h: str) -> float:
    try:
        bits = int(h, 16)
    except (TypeError, ValueError):
        raise SchemaError(f"bad float bit pattern {h!r}")
    if not 0 <= bits < 1 << 64:
        raise SchemaError(f"bit pattern {h!r} outside 64 bits")
    return struct.unpack("<d", struct.pack("<Q", bits))[0]


def _hex_list(a) -> list:
    return [_hex_of(v) for v in np.asarray(a, dtype=np.float64).ravel()]


def _dec_list(a) -> list:
    return [repr(float(v)) for v in np.asarray(a, dtype=np.float64).ravel()]


def _model_doc(model, metadata) -> dict:
    if isinstance(model, LinearModel):
        return {
            "schema": 1,
            "type": "linear",
            "dims": [int(model.dim)],
            "weights_hex": [_hex_list(model.w)],
            "biases_hex": [[_hex_of(model.b)]],
            "weights_dec": [_dec_list(model.w)],
            "biases_dec": [[repr(model.b)]],
            "metadata": metadata or {},
        }
    if isinstance(model, ReluNetwork):
        return {
            "schema": 1,
            "type": "relu",
            "dims": [int(d) for d in model.dims],
            "weights_hex": [_hex_list(w) for w, _ in model.layers],
            "biases_hex": [_hex_list(b) for _, b in model.layers],
            "weights_dec": [_dec_list(w) for w, _ in model.layers],
            "biases_dec": [_dec_list(b) for _, b in model.layers],
            "metadata": metadata or {},
        }
    raise SchemaError(f"unknown model type {type(model).__name__}")


def atomic_write_text(path: str, text: str):
    """Write whole-file-or-nothing via a temp file in the same directory."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def save_model(model, path: str, metadata: dict | None = None):
    doc = _model_doc(model, metadata)
    atomic_write_text(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _decode_flat(hex_rows, dec_rows, where: str) -> list:
    """Per-layer float lists, preferring bit patterns over decimals."""
    if hex_rows is not None:
        out = []
        for li, row in enumerate(hex_rows):
            vals = [_float_of(h) for h in row]
            if dec_rows is not None:
                decs = [float(s) for s in dec_rows[li]]
                for v, dv in zip(vals, decs):
                    # advisory decimals must agree bitwise with the patterns
                    if v == v and dv != v:
                        raise BitPatternMismatch(f"{where}[{li}]: decimal {dv!r} != pattern {v!r}")
            out.append(vals)
        return out
    if dec_rows is None:
        raise SchemaError(f"{where}: neither bit patterns nor decimals present")
    warnings.warn(f"{where}: no bit patterns, trusting decimals", DecimalFallbackWarning)
    return [[float(s) for s in row] for row in dec_rows]


def load_model(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: not valid JSON ({e})")
    if not isinstance(doc, dict) or doc.get("schema") != 1:
        raise SchemaError(f"{path}: unsupported schema {doc.get('schema') if isinstance(doc, dict) else doc!r}")
    kind = doc.get("type")
    dims = doc.get("dims")
    try:
        weights = _decode_flat(doc.get("weights_hex"), doc.get("weights_dec"), "weights")
        biases = _decode_flat(doc.get("biases_hex"), doc.get("biases_dec"), "biases")
    except (TypeError, KeyError, IndexError):
        raise SchemaError(f"{path}: malformed weight arrays")
    for rows in (weights, biases):
        for row in rows:
            for v in row:
                if not np.isfinite(v):
                    raise SchemaError(f"{path}: non-finite weight {v!r}")
    if kind == "linear":
        if len(dims) != 1 or len(weights) != 1 or len(biases) != 1 or len(biases[0]) != 1:
            raise SchemaError(f"{path}: inconsistent linear layout")
        if len(weights[0]) != dims[0]:
            raise SchemaError(f"{path}: {len(weights[0])} weights for dims {dims}")
        return LinearModel(np.asarray(weights[0]), biases[0][0])
    if kind == "relu":
        n_layers = len(dims) - 1
        if n_layers < 1 or len(weights) != n_layers or len(biases) != n_layers:
            raise SchemaError(f"{path}: inconsistent relu layout")
        layers = []
        for i in range(n_layers):
            dout, din = dims[i + 1], dims[i]
            if len(weights[i]) != dout * din or len(biases[i]) != dout:
                raise SchemaError(f"{path}: layer {i} sized {len(weights[i])}/{len(biases[i])}, dims say {dout}x{din}")
            layers.append((np.asarray(weights[i]).reshape(dout, din), np.asarray(biases[i])))
        return ReluNetwork(tuple(layers))
    raise SchemaError(f"{path}: unknown model type {kind!r}")
