#!/usr/bin/env python3
"""
Exact brute-force k-nearest-neighbor search

Distances are squared Euclidean. Ties are broken by the lower training
index, so results never depend on sort stability or on chunking.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from utils.errors import DimensionMismatchError, ParameterError
from utils.linalg import as_feature_matrix, as_real_vector, pairwise_sq_distances

DEFAULT_K = 20
QUERY_CHUNK = 1024


@dataclass(frozen=True)
class NeighborList:
    """Sorted neighbors of one query"""
    indices: np.ndarray
    sq_distances: np.ndarray

    def __len__(self) -> int:
        return int(self.indices.size)


def _check_k(k: int, available: int) -> None:
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
        raise ParameterError("k", f"must be an integer, got {k!r}")
    if k < 1 or k > available:
        raise ParameterError("k", f"must satisfy 1 <= k <= {available}, got {k}")


def _select_rows(d: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """k smallest entries per row, ordered by (distance, column index)"""
    n_rows, n_cols = d.shape
    idx = np.empty((n_rows, k), dtype=np.int64)
    dist = np.empty((n_rows, k), dtype=np.float64)
    columns = np.arange(n_cols)
    for r in range(n_rows):
        row = d[r]
        if k < n_cols:
            kth = np.partition(row, k - 1)[k - 1]
            candidates = columns[row <= kth]
        else:
            candidates = columns
        order = np.lexsort((candidates, row[candidates]))[:k]
        chosen = candidates[order]
        idx[r] = chosen
        dist[r] = row[chosen]
    return idx, dist


def kneighbors(train, queries, k: int, exclude_self: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batched exact kNN.

    Returns (indices, sq_distances), both of shape (n_queries, k). With
    exclude_self the queries must be the training rows themselves and query i
    never returns training row i.
    """
    train = as_feature_matrix(train, "train")
    queries = as_feature_matrix(queries, "queries")
    if train.shape[1] != queries.shape[1]:
        raise DimensionMismatchError("kneighbors", train.shape, queries.shape)
    if exclude_self:
        if queries.shape[0] != train.shape[0]:
            raise ParameterError("exclude_self", "queries must be the training rows themselves")
        _check_k(k, train.shape[0] - 1)
    else:
        _check_k(k, train.shape[0])

    n = queries.shape[0]
    indices = np.empty((n, k), dtype=np.int64)
    sq = np.empty((n, k), dtype=np.float64)
    for start in range(0, n, QUERY_CHUNK):
        stop = min(start + QUERY_CHUNK, n)
        d = pairwise_sq_distances(queries[start:stop], train)
        if exclude_self:
            rows = np.arange(stop - start)
            d[rows, rows + start] = np.inf
        indices[start:stop], sq[start:stop] = _select_rows(d, k)
    return indices, sq


def knn_query(train, query, k: int, exclude_self: bool = False,
              self_index: Optional[int] = None) -> NeighborList:
    """k nearest training rows of a single query vector"""
    train = as_feature_matrix(train, "train")
    query = as_real_vector(query, "query")
    if query.size != train.shape[1]:
        raise DimensionMismatchError("knn_query", train.shape, query.shape)
    if exclude_self and self_index is None:
        raise ParameterError("self_index", "required when exclude_self is set")
    if exclude_self and not 0 <= self_index < train.shape[0]:
        raise ParameterError("self_index", f"out of range for {train.shape[0]} training rows")

    _check_k(k, train.shape[0] - 1 if exclude_self else train.shape[0])
    d = pairwise_sq_distances(query.reshape(1, -1), train)
    if exclude_self:
        d[0, self_index] = np.inf
    idx, dist = _select_rows(d, k)
    return NeighborList(indices=idx[0], sq_distances=dist[0])
