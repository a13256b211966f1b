#!/usr/bin/env python3
"""
Statistical OOD scorers

Each scorer is fit on training features and scores query rows with one
shared orientation: higher = more out-of-distribution.

    kd   Gaussian kernel density, negated
    md   Mahalanobis distance (squared form)
    knn  mean squared distance to the k nearest training rows
    lof  mean density ratio against the k nearest training rows
    lcp  squared error of reconstructing the query from its k neighbors with
         locally normalized Gaussian-kernel weights
"""

import logging
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import stats

from utils.errors import DimensionMismatchError, ParameterError
from utils.linalg import (
    JITTER_CAP,
    as_feature_matrix,
    covariance,
    mean_vector,
    pairwise_sq_distances,
    regularized_inverse,
)
from utils.neighbors import DEFAULT_K, QUERY_CHUNK, kneighbors

logger = logging.getLogger(__name__)

SCORER_KINDS = ("kd", "md", "knn", "lof", "lcp")
LCP_WEIGHTINGS = ("kernel", "literal")

DISTANCE_SUM_FLOOR = 1e-12
SIGMA_FLOOR = 1e-8
KD_SUBSAMPLE = 1000
SIGMA_SEARCH_TOL = 1e-5
SIGMA_SEARCH_MAX_ITER = 200

# beta = 1 / (2 sigma^2); the upper clip corresponds to SIGMA_FLOOR
_BETA_MAX = 1.0 / (2.0 * SIGMA_FLOOR ** 2)
_BETA_MIN = 1e-300


@dataclass(frozen=True)
class ScoreReport:
    """Scores for every query row plus the parameters that produced them"""
    scores: np.ndarray
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.scores.size)


@dataclass(frozen=True)
class SigmaSearch:
    sigma: float
    perplexity: float
    degenerate: bool


class FittedScorer(ABC):
    """A trained scoring model"""
    kind: str = ""

    @property
    @abstractmethod
    def dim(self) -> int:
        """Feature dimensionality the scorer was fit on"""

    @abstractmethod
    def params(self) -> Dict[str, Any]:
        """Echo of the fit parameters"""

    @abstractmethod
    def _raw_scores(self, queries: np.ndarray) -> np.ndarray:
        pass

    def _check_queries(self, queries) -> np.ndarray:
        queries = as_feature_matrix(queries, "queries")
        if queries.shape[1] != self.dim:
            raise DimensionMismatchError(f"{self.kind} score", queries.shape, (queries.shape[0], self.dim))
        return queries

    def score(self, queries) -> ScoreReport:
        queries = self._check_queries(queries)
        scores = self._raw_scores(queries)
        return ScoreReport(scores=scores, kind=self.kind, params=self.params())


# ---------------------------------------------------------------------------
# Kernel density
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class KernelDensityScorer(FittedScorer):
    train: np.ndarray
    sigma: float
    kind = "kd"

    @property
    def dim(self) -> int:
        return self.train.shape[1]

    def params(self) -> Dict[str, Any]:
        return {"sigma": float(self.sigma), "n_train": int(self.train.shape[0])}

    def density(self, queries) -> np.ndarray:
        """Average Gaussian kernel value against the whole training set"""
        queries = self._check_queries(queries)
        out = np.empty(queries.shape[0])
        two_sigma_sq = 2.0 * self.sigma * self.sigma
        for start in range(0, queries.shape[0], QUERY_CHUNK):
            stop = min(start + QUERY_CHUNK, queries.shape[0])
            d = pairwise_sq_distances(queries[start:stop], self.train)
            out[start:stop] = np.exp(-d / two_sigma_sq).mean(axis=1)
        return out

    def _raw_scores(self, queries: np.ndarray) -> np.ndarray:
        return -self.density(queries)


def median_heuristic_sigma(train, subsample: int = KD_SUBSAMPLE, seed: int = 0) -> float:
    """Median pairwise Euclidean distance on a seeded row subsample"""
    train = as_feature_matrix(train, "train")
    n = train.shape[0]
    if n > subsample:
        rng = np.random.default_rng(seed)
        rows = np.sort(rng.choice(n, size=subsample, replace=False))
        train = train[rows]
    if train.shape[0] < 2:
        logger.warning("⚠️ Median heuristic needs two rows, falling back to sigma 1.0")
        return 1.0
    d = pairwise_sq_distances(train, train)
    upper = np.sqrt(d[np.triu_indices(train.shape[0], k=1)])
    sigma = float(np.median(upper))
    if sigma <= 0:
        positive = upper[upper > 0]
        sigma = float(np.median(positive)) if positive.size else 1.0
        logger.warning("⚠️ Median pairwise distance is 0, using sigma %.6g", sigma)
    return sigma


def kd_fit(train, sigma: Optional[float] = None, subsample: int = KD_SUBSAMPLE, seed: int = 0) -> KernelDensityScorer:
    train = as_feature_matrix(train, "train")
    if sigma is None:
        sigma = median_heuristic_sigma(train, subsample=subsample, seed=seed)
        logger.info("KD bandwidth from median heuristic: sigma=%.6g", sigma)
    elif not np.isfinite(sigma) or sigma <= 0:
        raise ParameterError("sigma", f"must be > 0, got {sigma}")
    return KernelDensityScorer(train=train, sigma=float(sigma))


def kd_score(s: KernelDensityScorer, queries) -> ScoreReport:
    return s.score(queries)


# ---------------------------------------------------------------------------
# Mahalanobis distance
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class MahalanobisScorer(FittedScorer):
    mean: np.ndarray
    inv_cov: np.ndarray
    kind = "md"

    @property
    def dim(self) -> int:
        return self.mean.size

    def params(self) -> Dict[str, Any]:
        return {"dims": int(self.mean.size)}

    def _raw_scores(self, queries: np.ndarray) -> np.ndarray:
        diff = queries - self.mean
        q = np.sum((diff @ self.inv_cov) * diff, axis=1)
        return np.maximum(q, 0.0)


def md_fit(train, jitter: float = 0.0, jitter_cap: float = JITTER_CAP) -> MahalanobisScorer:
    train = as_feature_matrix(train, "train")
    if train.shape[0] < 2:
        raise ParameterError("train", f"Mahalanobis fit needs at least 2 rows, got {train.shape[0]}")
    mu = mean_vector(train)
    inv_cov = regularized_inverse(covariance(train), jitter=jitter, jitter_cap=jitter_cap)
    logger.info("Fitted MD: %d dims, n_train=%d", mu.size, train.shape[0])
    return MahalanobisScorer(mean=mu, inv_cov=inv_cov)


def md_score(s: MahalanobisScorer, queries) -> ScoreReport:
    return s.score(queries)


# ---------------------------------------------------------------------------
# k nearest neighbors
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class KnnScorer(FittedScorer):
    train: np.ndarray
    k: int
    kind = "knn"

    @property
    def dim(self) -> int:
        return self.train.shape[1]

    def params(self) -> Dict[str, Any]:
        return {"k": int(self.k), "n_train": int(self.train.shape[0])}

    def _raw_scores(self, queries: np.ndarray) -> np.ndarray:
        _, sq = kneighbors(self.train, queries, self.k)
        return sq.mean(axis=1)


def knn_fit(train, k: int = DEFAULT_K) -> KnnScorer:
    train = as_feature_matrix(train, "train")
    if not 1 <= k <= train.shape[0]:
        raise ParameterError("k", f"must satisfy 1 <= k <= {train.shape[0]}, got {k}")
    return KnnScorer(train=train, k=int(k))


def knn_score(train, queries, k: int = DEFAULT_K) -> ScoreReport:
    return knn_fit(train, k).score(queries)


# ---------------------------------------------------------------------------
# Local outlier factor (plain-distance local density)
# ---------------------------------------------------------------------------

def _local_density(sq_distances: np.ndarray) -> np.ndarray:
    """|N_k| over the summed plain Euclidean distances to the neighbors"""
    sums = np.sqrt(sq_distances).sum(axis=1)
    return sq_distances.shape[1] / np.maximum(sums, DISTANCE_SUM_FLOOR)


@dataclass(eq=False)
class LofScorer(FittedScorer):
    train: np.ndarray
    k: int
    train_lrd: np.ndarray
    kind = "lof"

    @property
    def dim(self) -> int:
        return self.train.shape[1]

    def params(self) -> Dict[str, Any]:
        return {"k": int(self.k), "n_train": int(self.train.shape[0])}

    def _raw_scores(self, queries: np.ndarray) -> np.ndarray:
        idx, sq = kneighbors(self.train, queries, self.k)
        query_lrd = _local_density(sq)
        return np.mean(self.train_lrd[idx] / query_lrd[:, None], axis=1)


def lof_fit(train, k: int = DEFAULT_K) -> LofScorer:
    train = as_feature_matrix(train, "train")
    n = train.shape[0]
    if not 2 <= k <= n - 1:
        raise ParameterError("k", f"must satisfy 2 <= k <= {n - 1}, got {k}")
    _, sq = kneighbors(train, train, k, exclude_self=True)
    lrd = _local_density(sq)
    floored = int(np.sum(np.sqrt(sq).sum(axis=1) < DISTANCE_SUM_FLOOR))
    if floored:
        logger.warning("⚠️ %d training rows have duplicate neighborhoods, distance sums floored", floored)
    logger.info("Fitted LOF: k=%d, n_train=%d", k, n)
    return LofScorer(train=train, k=int(k), train_lrd=lrd)


def lof_score(s: LofScorer, queries) -> ScoreReport:
    return s.score(queries)


# ---------------------------------------------------------------------------
# Per-point bandwidth search
# ---------------------------------------------------------------------------

def _perplexity(shifted: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """exp(entropy) of the normalized weights exp(-beta * d) per row; each row's minimum is 0"""
    p = np.exp(-shifted * beta[:, None])
    total = p.sum(axis=1)
    entropy = np.log(total) + beta * (shifted * p).sum(axis=1) / total
    return np.exp(entropy)


def perplexity_at(sq_dists, sigma: float) -> float:
    """Perplexity of the normalized Gaussian weights exp(-d^2 / (2 sigma^2))"""
    d = np.asarray(sq_dists, dtype=np.float64).reshape(1, -1)
    beta = np.array([1.0 / (2.0 * sigma * sigma)])
    return float(_perplexity(d - d.min(), beta)[0])


def _sigma_search_batch(sq: np.ndarray, target: float, tol: float,
                        max_iter: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized bandwidth search; one row of squared distances per point"""
    n, k = sq.shape
    shifted = sq - sq.min(axis=1, keepdims=True)
    spread = shifted.max(axis=1)
    all_zero = sq.max(axis=1) <= 0
    flat = spread <= 0

    safe_mean = np.where(flat, 1.0, shifted.sum(axis=1) / np.maximum(k, 1))
    beta = 1.0 / np.where(safe_mean > 0, safe_mean, 1.0)
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    best_beta = beta.copy()
    best_err = np.full(n, np.inf)

    for _ in range(max_iter):
        perp = _perplexity(shifted, beta)
        err = np.abs(perp - target)
        better = err < best_err
        best_err = np.where(better, err, best_err)
        best_beta = np.where(better, beta, best_beta)
        active = (err > tol) & ~flat
        if not np.any(active):
            break
        # perplexity falls as beta grows
        too_spread = perp > target
        lo = np.where(active & too_spread, beta, lo)
        hi = np.where(active & ~too_spread, beta, hi)
        stepped = np.where(np.isinf(hi), beta * 2.0, np.where(lo == 0, beta / 2.0, np.sqrt(lo * hi)))
        beta = np.where(active, np.clip(stepped, _BETA_MIN, _BETA_MAX), beta)

    sigma = np.sqrt(1.0 / (2.0 * best_beta))
    # flat rows reach perplexity k for every sigma; keep a scale tied to the data
    sigma = np.where(flat & ~all_zero, np.sqrt(np.maximum(sq.min(axis=1), 0.0) / 2.0), sigma)
    sigma = np.where(all_zero, SIGMA_FLOOR, np.maximum(sigma, SIGMA_FLOOR))
    achieved = np.where(flat, float(k), _perplexity(shifted, 1.0 / (2.0 * sigma * sigma)))
    degenerate = all_zero | (np.abs(achieved - target) > tol)
    return sigma, achieved, degenerate


def sigma_binary_search(sq_dists_to_neighbors, target_perplexity: float,
                        tol: float = SIGMA_SEARCH_TOL, max_iter: int = SIGMA_SEARCH_MAX_ITER) -> SigmaSearch:
    """
    Gaussian bandwidth whose neighbor weights reach the target perplexity.

    Doubles or halves 1/(2 sigma^2) until the target is bracketed, then
    bisects geometrically. All-zero distances give SIGMA_FLOOR with the
    degenerate flag set; an unreachable target gives the closest sigma found,
    also flagged.
    """
    d = np.asarray(sq_dists_to_neighbors, dtype=np.float64).reshape(-1)
    if d.size < 1:
        raise ParameterError("sq_dists_to_neighbors", "must be non-empty")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ParameterError("sq_dists_to_neighbors", "must be finite and non-negative")
    if not 1.0 < target_perplexity <= d.size:
        raise ParameterError("target_perplexity", f"must satisfy 1 < p <= {d.size}, got {target_perplexity}")
    if tol <= 0:
        raise ParameterError("tol", f"must be > 0, got {tol}")
    if max_iter < 1:
        raise ParameterError("max_iter", f"must be >= 1, got {max_iter}")
    sigma, perp, degenerate = _sigma_search_batch(d.reshape(1, -1), float(target_perplexity), tol, max_iter)
    return SigmaSearch(sigma=float(sigma[0]), perplexity=float(perp[0]), degenerate=bool(degenerate[0]))


def default_perplexity(k: int) -> Optional[float]:
    """k/3, or the midpoint of (1, k] when k/3 would not exceed 1"""
    if k < 2:
        return None
    return k / 3.0 if k / 3.0 > 1.0 else (1.0 + k) / 2.0


# ---------------------------------------------------------------------------
# Local conditional probability reconstruction
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class LcpScorer(FittedScorer):
    train: np.ndarray
    k: int
    sigmas: np.ndarray
    perplexity: Optional[float] = None
    weighting: str = "kernel"
    degenerate_count: int = 0
    kind = "lcp"

    @property
    def dim(self) -> int:
        return self.train.shape[1]

    def params(self) -> Dict[str, Any]:
        return {
            "k": int(self.k),
            "perplexity": None if self.perplexity is None else float(self.perplexity),
            "weighting": self.weighting,
            "degenerate_sigmas": int(self.degenerate_count),
            "n_train": int(self.train.shape[0]),
        }

    def weights(self, queries) -> Tuple[np.ndarray, np.ndarray]:
        """Neighbor indices and their normalized reconstruction weights"""
        queries = self._check_queries(queries)
        idx, sq = kneighbors(self.train, queries, self.k)
        sig = self.sigmas[idx]
        scaled = sq / (2.0 * sig * sig)
        if self.weighting == "kernel":
            w = np.exp(-scaled)
        else:
            w = scaled
        totals = w.sum(axis=1, keepdims=True)
        empty = totals[:, 0] <= 0
        if np.any(empty):
            logger.warning("⚠️ %d queries fell back to uniform LCP weights", int(empty.sum()))
        w = np.where(empty[:, None], 1.0 / self.k, w / np.where(empty[:, None], 1.0, totals))
        return idx, w

    def residuals(self, queries) -> np.ndarray:
        """x_t minus its weighted reconstruction from the k training neighbors"""
        queries = self._check_queries(queries)
        idx, w = self.weights(queries)
        reconstruction = np.einsum("qk,qkd->qd", w, self.train[idx])
        return queries - reconstruction

    def _raw_scores(self, queries: np.ndarray) -> np.ndarray:
        r = self.residuals(queries)
        return np.sum(r * r, axis=1)


def lcp_fit(train, k: int = DEFAULT_K, target_perplexity: Optional[float] = None,
            weighting: str = "kernel", fixed_sigma: Optional[float] = None,
            tol: float = SIGMA_SEARCH_TOL, max_iter: int = SIGMA_SEARCH_MAX_ITER) -> LcpScorer:
    """
    Fit per-training-point bandwidths for LCP reconstruction.

    sigma_i is solved over training row i's own k neighbors (self excluded)
    so that its kernel weights reach target_perplexity. fixed_sigma skips
    the search and uses one bandwidth everywhere.
    """
    train = as_feature_matrix(train, "train")
    n = train.shape[0]
    if not 1 <= k <= n - 1:
        raise ParameterError("k", f"must satisfy 1 <= k <= {n - 1}, got {k}")
    if weighting not in LCP_WEIGHTINGS:
        raise ParameterError("weighting", f"unknown weighting {weighting!r}, expected one of {LCP_WEIGHTINGS}")

    if fixed_sigma is not None:
        if not np.isfinite(fixed_sigma) or fixed_sigma <= 0:
            raise ParameterError("sigma", f"must be > 0, got {fixed_sigma}")
        return LcpScorer(train=train, k=int(k), sigmas=np.full(n, float(fixed_sigma)),
                         perplexity=None, weighting=weighting)

    if k == 1:
        # a single neighbor always gets weight 1
        logger.info("LCP with k=1: bandwidth search skipped")
        return LcpScorer(train=train, k=1, sigmas=np.ones(n), perplexity=None, weighting=weighting)

    if target_perplexity is None:
        target_perplexity = default_perplexity(k)
    if not 1.0 < target_perplexity <= k:
        raise ParameterError("perplexity", f"must satisfy 1 < perplexity <= k={k}, got {target_perplexity}")

    _, sq = kneighbors(train, train, k, exclude_self=True)
    sigmas, _, degenerate = _sigma_search_batch(sq, float(target_perplexity), tol, max_iter)
    n_degenerate = int(degenerate.sum())
    if n_degenerate:
        logger.warning("⚠️ %d of %d training rows have degenerate bandwidths", n_degenerate, n)
    logger.info("Fitted LCP: k=%d, perplexity=%.4g, n_train=%d", k, target_perplexity, n)
    return LcpScorer(train=train, k=int(k), sigmas=sigmas, perplexity=float(target_perplexity),
                     weighting=weighting, degenerate_count=n_degenerate)


def lcp_score(s: LcpScorer, queries) -> ScoreReport:
    return s.score(queries)


def lcp_residuals(s: LcpScorer, queries) -> np.ndarray:
    return s.residuals(queries)


@dataclass(frozen=True)
class ResidualSummary:
    """Per-dimension distribution statistics of reconstruction residuals"""
    mean: np.ndarray
    std: np.ndarray
    skewness: np.ndarray
    kurtosis: np.ndarray
    normality_p: np.ndarray

    def rows(self):
        for i in range(self.mean.size):
            yield {
                "dim": i,
                "mean": float(self.mean[i]),
                "std": float(self.std[i]),
                "skewness": float(self.skewness[i]),
                "kurtosis": float(self.kurtosis[i]),
                "normality_p": float(self.normality_p[i]),
            }


def residual_summary(residuals) -> ResidualSummary:
    """Mean, spread, shape and D'Agostino-Pearson normality p-value per dimension"""
    r = as_feature_matrix(residuals, "residuals")
    with warnings.catch_warnings(), np.errstate(all="ignore"):
        warnings.simplefilter("ignore")
        skewness = stats.skew(r, axis=0)
        kurt = stats.kurtosis(r, axis=0)
        if r.shape[0] >= 8:
            p = stats.normaltest(r, axis=0).pvalue
        else:
            p = np.full(r.shape[1], np.nan)
    return ResidualSummary(mean=r.mean(axis=0), std=r.std(axis=0), skewness=np.asarray(skewness),
                           kurtosis=np.asarray(kurt), normality_p=np.asarray(p))


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def fit_scorer(kind: str, train, k: int = DEFAULT_K, sigma: Optional[float] = None,
               perplexity: Optional[float] = None, weighting: str = "kernel",
               jitter: float = 0.0, jitter_cap: float = JITTER_CAP,
               kd_subsample: int = KD_SUBSAMPLE, seed: int = 0,
               lcp_sigma: Optional[float] = None) -> FittedScorer:
    """Fit any scorer kind from one uniform parameter set"""
    if kind == "kd":
        return kd_fit(train, sigma=sigma, subsample=kd_subsample, seed=seed)
    if kind == "md":
        return md_fit(train, jitter=jitter, jitter_cap=jitter_cap)
    if kind == "knn":
        return knn_fit(train, k=k)
    if kind == "lof":
        return lof_fit(train, k=k)
    if kind == "lcp":
        return lcp_fit(train, k=k, target_perplexity=perplexity, weighting=weighting, fixed_sigma=lcp_sigma)
    raise ParameterError("kind", f"unknown scorer kind {kind!r}, expected one of {SCORER_KINDS}")
