#!/usr/bin/env python3
"""
Versioned binary persistence for autoencoders and fitted scorers

Autoencoder file (little-endian):
    b"OODKIT-AE" | u32 version | u32 input_dim | u32 n_layers | u32 latent_index
    n_layers x (u32 width | u8 activation)
    u32 metadata length | UTF-8 JSON metadata
    per layer: weights (fan_in x width, row-major f64) then biases (f64)

Scorer file:
    b"OODKIT-SC" | u32 version | u8 kind | u32 metadata length | JSON metadata
    kind-specific fields in fixed order; scalars are f64, arrays are
    u8 ndim | ndim x u32 | row-major f64
"""

import io
import json
import logging
import struct
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from models.autoencoder import ACTIVATIONS, AutoencoderModel, LayerSpec
from models.scorers import (
    LCP_WEIGHTINGS,
    SCORER_KINDS,
    FittedScorer,
    KernelDensityScorer,
    KnnScorer,
    LcpScorer,
    LofScorer,
    MahalanobisScorer,
)
from utils.errors import DataFormatError
from utils.files import atomic_write_bytes

logger = logging.getLogger(__name__)

AE_MAGIC = b"OODKIT-AE"
SCORER_MAGIC = b"OODKIT-SC"
FORMAT_VERSION = 1

PathLike = Union[str, Path]

# field layout per scorer kind: (attribute, "scalar" | "array")
_SCORER_FIELDS = {
    "kd": [("sigma", "scalar"), ("train", "array")],
    "md": [("mean", "array"), ("inv_cov", "array")],
    "knn": [("k", "scalar"), ("train", "array")],
    "lof": [("k", "scalar"), ("train", "array"), ("train_lrd", "array")],
    "lcp": [("k", "scalar"), ("perplexity", "scalar"), ("weighting", "scalar"),
            ("degenerate_count", "scalar"), ("train", "array"), ("sigmas", "array")],
}


class _Reader:
    """Bounds-checked cursor over a byte buffer"""

    def __init__(self, data: bytes, path: str):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise DataFormatError(self.path, f"truncated {what}: need {n} bytes, {len(self.data) - self.pos} left",
                                  offset=self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def f64(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype="<f8").astype(np.float64)

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise DataFormatError(self.path, f"{len(self.data) - self.pos} trailing bytes", offset=self.pos)


def _metadata_bytes(metadata: Optional[Dict]) -> bytes:
    return json.dumps(metadata or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _check_header(r: _Reader, magic: bytes) -> None:
    found = r.take(len(magic), "magic")
    if found != magic:
        raise DataFormatError(r.path, f"bad magic {found!r}, expected {magic!r}", offset=0)
    (version,) = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise DataFormatError(r.path, f"unsupported format version {version}", offset=len(magic))


def _read_metadata(r: _Reader) -> Dict:
    (length,) = r.unpack("<I", "metadata length")
    start = r.pos
    try:
        return json.loads(r.take(length, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataFormatError(r.path, f"unreadable metadata: {e}", offset=start)


def dump_autoencoder(model: AutoencoderModel, metadata: Optional[Dict] = None) -> bytes:
    buf = io.BytesIO()
    buf.write(AE_MAGIC)
    buf.write(struct.pack("<IIII", FORMAT_VERSION, model.input_dim, len(model.layers), model.latent_index))
    for spec in model.layers:
        buf.write(struct.pack("<IB", spec.width, ACTIVATIONS.index(spec.activation)))
    meta = _metadata_bytes(metadata if metadata is not None else model.metadata)
    buf.write(struct.pack("<I", len(meta)))
    buf.write(meta)
    for w, b in zip(model.weights, model.biases):
        buf.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return buf.getvalue()


def save_autoencoder(model: AutoencoderModel, path: PathLike, metadata: Optional[Dict] = None) -> Path:
    path = atomic_write_bytes(path, dump_autoencoder(model, metadata))
    logger.info("Saved autoencoder to %s", path)
    return path


def load_autoencoder(path: PathLike) -> AutoencoderModel:
    path = str(path)
    with open(path, "rb") as f:
        r = _Reader(f.read(), path)
    _check_header(r, AE_MAGIC)
    input_dim, n_layers, latent_index = r.unpack("<III", "layer header")
    layers: List[LayerSpec] = []
    for _ in range(n_layers):
        offset = r.pos
        width, code = r.unpack("<IB", "layer spec")
        if code >= len(ACTIVATIONS) or width < 1:
            raise DataFormatError(path, f"invalid layer spec (width {width}, activation {code})", offset=offset)
        layers.append(LayerSpec(width, ACTIVATIONS[code]))
    metadata = _read_metadata(r)

    weights, biases = [], []
    fan_in = input_dim
    for spec in layers:
        weights.append(r.f64(fan_in * spec.width, "weights").reshape(fan_in, spec.width))
        biases.append(r.f64(spec.width, "biases"))
        fan_in = spec.width
    r.finish()
    if not layers or not 0 <= latent_index < len(layers) or layers[latent_index].width >= input_dim:
        raise DataFormatError(path, "latent layer must exist and be narrower than the input")
    return AutoencoderModel(input_dim=input_dim, layers=layers, weights=weights, biases=biases,
                            latent_index=latent_index, metadata=metadata)


def _scalar_value(scorer: FittedScorer, name: str) -> float:
    value = getattr(scorer, name)
    if name == "weighting":
        return float(LCP_WEIGHTINGS.index(value))
    if value is None:
        return float("nan")
    return float(value)


def dump_scorer(scorer: FittedScorer, metadata: Optional[Dict] = None) -> bytes:
    buf = io.BytesIO()
    buf.write(SCORER_MAGIC)
    buf.write(struct.pack("<IB", FORMAT_VERSION, SCORER_KINDS.index(scorer.kind)))
    meta = _metadata_bytes(metadata if metadata is not None else scorer.params())
    buf.write(struct.pack("<I", len(meta)))
    buf.write(meta)
    for name, shape in _SCORER_FIELDS[scorer.kind]:
        if shape == "scalar":
            buf.write(struct.pack("<d", _scalar_value(scorer, name)))
        else:
            arr = np.ascontiguousarray(getattr(scorer, name), dtype="<f8")
            buf.write(struct.pack("<B", arr.ndim))
            buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            buf.write(arr.tobytes())
    return buf.getvalue()


def save_scorer(scorer: FittedScorer, path: PathLike, metadata: Optional[Dict] = None) -> Path:
    path = atomic_write_bytes(path, dump_scorer(scorer, metadata))
    logger.info("Saved %s scorer to %s", scorer.kind, path)
    return path


def _scorer_header(path: PathLike) -> Tuple[_Reader, str, Dict]:
    path = str(path)
    with open(path, "rb") as f:
        r = _Reader(f.read(), path)
    _check_header(r, SCORER_MAGIC)
    offset = r.pos
    (code,) = r.unpack("<B", "kind tag")
    if code >= len(SCORER_KINDS):
        raise DataFormatError(path, f"unknown scorer kind tag {code}", offset=offset)
    return r, SCORER_KINDS[code], _read_metadata(r)


def load_scorer_metadata(path: PathLike) -> Dict:
    """The JSON metadata block of a scorer file, without decoding its arrays"""
    return _scorer_header(path)[2]


def load_scorer(path: PathLike) -> FittedScorer:
    r, kind, _ = _scorer_header(path)

    fields = {}
    for name, shape in _SCORER_FIELDS[kind]:
        if shape == "scalar":
            (fields[name],) = r.unpack("<d", name)
        else:
            (ndim,) = r.unpack("<B", f"{name} rank")
            dims = r.unpack(f"<{ndim}I", f"{name} shape")
            fields[name] = r.f64(int(np.prod(dims)), name).reshape(dims)
    r.finish()

    if kind == "kd":
        return KernelDensityScorer(train=fields["train"], sigma=fields["sigma"])
    if kind == "md":
        return MahalanobisScorer(mean=fields["mean"], inv_cov=fields["inv_cov"])
    if kind == "knn":
        return KnnScorer(train=fields["train"], k=int(fields["k"]))
    if kind == "lof":
        return LofScorer(train=fields["train"], k=int(fields["k"]), train_lrd=fields["train_lrd"])
    perplexity = fields["perplexity"]
    return LcpScorer(train=fields["train"], k=int(fields["k"]), sigmas=fields["sigmas"],
                     perplexity=None if np.isnan(perplexity) else perplexity,
                     weighting=LCP_WEIGHTINGS[int(fields["weighting"])],
                     degenerate_count=int(fields["degenerate_count"]))
