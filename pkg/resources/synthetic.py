#!/usr/bin/env python3
"""
Synthetic in-distribution data and outlier sets

Every generator is a pure function of its spec and seed.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from resources.datasets import load_csv_features, load_images, reformat, to_features
from utils.errors import DimensionMismatchError, ParameterError
from utils.linalg import as_real_vector

logger = logging.getLogger(__name__)

OUTLIER_KINDS = ("uniform_noise", "gaussian_noise", "external_dataset")

Shape = Union[int, Tuple[int, int, int]]


@dataclass(frozen=True)
class MixtureComponent:
    mean: np.ndarray
    deviation: np.ndarray
    count: int

    def __post_init__(self):
        mean = as_real_vector(self.mean, "mean")
        deviation = np.asarray(self.deviation, dtype=np.float64).reshape(-1)
        if deviation.size == 1:
            deviation = np.full(mean.size, float(deviation[0]))
        if deviation.size != mean.size:
            raise DimensionMismatchError("deviation", (mean.size,), (deviation.size,))
        if not np.all(np.isfinite(deviation)) or np.any(deviation <= 0):
            raise ParameterError("deviation", "per-axis deviations must be finite and > 0")
        if int(self.count) < 1:
            raise ParameterError("count", f"must be >= 1, got {self.count}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "deviation", deviation)
        object.__setattr__(self, "count", int(self.count))


@dataclass(frozen=True)
class OutlierSpec:
    kind: str
    count: int
    seed: int = 0
    source: Optional[str] = None
    order: str = field(default="channels_first")

    def __post_init__(self):
        if self.kind not in OUTLIER_KINDS:
            raise ParameterError("kind", f"must be one of {OUTLIER_KINDS}, got {self.kind!r}")
        if int(self.count) < 1:
            raise ParameterError("count", f"must be >= 1, got {self.count}")
        if self.kind == "external_dataset" and not self.source:
            raise ParameterError("source", "external_dataset outliers need a source path")


def synth_gaussian_mixture(components: Sequence[MixtureComponent], seed: int = 0) -> np.ndarray:
    """Rows of each component in order; axis-aligned Gaussian draws"""
    if not components:
        raise ParameterError("components", "need at least one mixture component")
    dim = components[0].mean.size
    for c in components[1:]:
        if c.mean.size != dim:
            raise DimensionMismatchError("components", (dim,), (c.mean.size,))
    rng = np.random.default_rng(seed)
    blocks = [c.mean + c.deviation * rng.standard_normal((c.count, dim)) for c in components]
    data = np.vstack(blocks)
    logger.info("Drew %d mixture rows from %d components in %d dims", data.shape[0], len(components), dim)
    return data


def _target_dims(dim_or_shape: Shape) -> Tuple[int, Optional[Tuple[int, int, int]]]:
    if isinstance(dim_or_shape, (tuple, list)):
        c, h, w = (int(v) for v in dim_or_shape)
        return c * h * w, (c, h, w)
    dim = int(dim_or_shape)
    if dim < 1:
        raise ParameterError("dim", f"must be >= 1, got {dim}")
    return dim, None


def _external_rows(spec: OutlierSpec, dim: int, shape: Optional[Tuple[int, int, int]]) -> np.ndarray:
    if spec.source.lower().endswith(".csv"):
        rows = load_csv_features(spec.source)
        if rows.shape[1] != dim:
            raise DimensionMismatchError(spec.source, (rows.shape[1],), (dim,))
    else:
        if shape is None:
            raise ParameterError("dim_or_shape", "image sources need a (channels, height, width) target")
        batch = reformat(load_images(spec.source), *shape, order=spec.order)
        rows = to_features(batch)
    if spec.count > rows.shape[0]:
        raise ParameterError("count", f"source {spec.source} holds {rows.shape[0]} rows, {spec.count} requested")
    rng = np.random.default_rng(spec.seed)
    pick = np.sort(rng.choice(rows.shape[0], size=spec.count, replace=False))
    return rows[pick]


def synth_outliers(spec: OutlierSpec, dim_or_shape: Shape) -> np.ndarray:
    """Noise in [0,1] feature space, or rows drawn from a reformatted external dataset"""
    dim, shape = _target_dims(dim_or_shape)
    if spec.kind == "uniform_noise":
        rows = np.random.default_rng(spec.seed).uniform(0.0, 1.0, size=(spec.count, dim))
    elif spec.kind == "gaussian_noise":
        rows = np.clip(np.random.default_rng(spec.seed).standard_normal((spec.count, dim)), 0.0, 1.0)
    else:
        rows = _external_rows(spec, dim, shape)
    logger.info("Generated %d %s outliers of dimension %d", rows.shape[0], spec.kind, dim)
    return rows
