#!/usr/bin/env python3
"""
Dense linear-algebra kernels shared by the scorers, the autoencoder and the
neighbor search.

A FeatureMatrix is a 2-D float64 numpy array (rows = samples, columns =
features); a RealVector is a 1-D float64 array. Every function here is pure
and deterministic.
"""

import logging

import numpy as np
from scipy import linalg as sla
from scipy.spatial.distance import cdist

from utils.errors import DimensionMismatchError, NumericalError, ParameterError

logger = logging.getLogger(__name__)

DEFAULT_JITTER = 1e-9
JITTER_CAP = 1e-3
SYMMETRY_TOL = 1e-9


def as_feature_matrix(data, name: str = "matrix") -> np.ndarray:
    """Validate and convert to a finite, non-empty float64 matrix"""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ParameterError(name, f"expected a 2-D matrix, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ParameterError(name, f"matrix must have at least one row and column, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ParameterError(name, "matrix contains non-finite entries")
    return m


def as_real_vector(data, name: str = "vector") -> np.ndarray:
    """Validate and convert to a finite, non-empty float64 vector"""
    v = np.asarray(data, dtype=np.float64).reshape(-1)
    if v.size < 1:
        raise ParameterError(name, "vector must be non-empty")
    if not np.all(np.isfinite(v)):
        raise ParameterError(name, "vector contains non-finite entries")
    return v


def pairwise_sq_distances(a, b) -> np.ndarray:
    """Squared Euclidean distance between every row of a and every row of b"""
    a = as_feature_matrix(a, "a")
    b = as_feature_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError("pairwise_sq_distances", a.shape, b.shape)
    d = cdist(a, b, metric="sqeuclidean")
    # kernels downstream need d >= 0
    np.maximum(d, 0.0, out=d)
    return d


def mean_vector(m) -> np.ndarray:
    """Column-wise arithmetic mean"""
    m = as_feature_matrix(m, "m")
    return m.mean(axis=0)


def covariance(m) -> np.ndarray:
    """Population covariance, normalized by the number of rows (no Bessel correction)"""
    m = as_feature_matrix(m, "m")
    n = m.shape[0]
    if n < 2:
        raise ParameterError("m", f"covariance needs at least 2 rows, got {n}")
    centered = m - m.mean(axis=0)
    cov = (centered.T @ centered) / n
    return 0.5 * (cov + cov.T)


def regularized_inverse(m, jitter: float = DEFAULT_JITTER, jitter_cap: float = JITTER_CAP) -> np.ndarray:
    """
    Inverse of (m + jitter*I) through a Cholesky factorization.

    When the factorization fails the jitter is escalated tenfold (starting at
    DEFAULT_JITTER when jitter is 0) until jitter_cap is exceeded.
    """
    m = as_feature_matrix(m, "m")
    rows, cols = m.shape
    if rows != cols:
        raise DimensionMismatchError("regularized_inverse", (rows, cols), (cols, rows))
    if jitter < 0:
        raise ParameterError("jitter", f"must be >= 0, got {jitter}")
    if np.max(np.abs(m - m.T)) > SYMMETRY_TOL:
        raise ParameterError("m", "matrix is not symmetric within 1e-9")

    eye = np.eye(rows)
    current = float(jitter)
    first_attempt = current
    while True:
        try:
            factor = sla.cho_factor(m + current * eye, lower=True, check_finite=False)
            inv = sla.cho_solve(factor, eye, check_finite=False)
            if np.all(np.isfinite(inv)):
                if current != first_attempt:
                    logger.warning("⚠️ Covariance needed jitter %.1e to factorize", current)
                return 0.5 * (inv + inv.T)
        except np.linalg.LinAlgError:
            pass
        current = current * 10.0 if current > 0 else DEFAULT_JITTER
        if current > jitter_cap:
            raise NumericalError(
                f"matrix is not positive definite: factorization failed from jitter "
                f"{first_attempt:.1e} up to the cap {jitter_cap:.1e}"
            )
