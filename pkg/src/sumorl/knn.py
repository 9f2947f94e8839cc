"""Exact k-nearest-neighbour search.

The index is a median-split kd-tree whose leaves are scanned with the same
vectorised distance routine used by :func:`brute_force_knn`, so tree results
are identical to an exhaustive scan, ids and distances alike. Ties are broken
by the smaller point id.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import EmptyDatasetError, ParameterError, ShapeError

LEAF_SIZE = 32
MAX_TREE_DIM = 16
# Batched queries scan blocks of queries against all points when the index is
# at most this large; a vectorised scan beats a per-query tree walk there.
SCAN_MAX_POINTS = 50_000
SCAN_BLOCK_ELEMENTS = 4_000_000
# Pruning slack absorbs the rounding gap between box bounds and leaf distances.
_REL_SLACK = 1e-9
_ABS_SLACK = 1e-12


class Metric(str, Enum):
    EUCLIDEAN = "euclidean"
    MANHATTAN = "manhattan"
    COSINE = "cosine"


class SearchVectorMode(str, Enum):
    SAS = "sas"
    SA = "sa"
    SS = "ss"


def search_vectors(s, a, s_next, mode=SearchVectorMode.SAS, r=None):
    """Concatenate transition parts according to ``mode``; append ``r`` if given."""
    mode = SearchVectorMode(mode)
    parts = {
        SearchVectorMode.SAS: (s, a, s_next),
        SearchVectorMode.SA: (s, a),
        SearchVectorMode.SS: (s, s_next),
    }[mode]
    parts = [np.atleast_2d(np.asarray(p, dtype=np.float64)) for p in parts]
    if r is not None:
        parts.append(np.asarray(r, dtype=np.float64).reshape(-1, 1))
    return np.concatenate(parts, axis=1)


def distances(metric, points, q, point_norms=None):
    """Distances from each row of ``points`` to the vector ``q``."""
    metric = Metric(metric)
    if metric is Metric.EUCLIDEAN:
        diff = points - q
        return np.sqrt(np.sum(diff * diff, axis=1))
    if metric is Metric.MANHATTAN:
        return np.sum(np.abs(points - q), axis=1)
    q_norm = np.sqrt(np.sum(q * q))
    if q_norm == 0.0:
        raise ParameterError("cosine distance is undefined for a zero query vector")
    if point_norms is None:
        point_norms = np.sqrt(np.sum(points * points, axis=1))
    return 1.0 - np.sum(points * q, axis=1) / (point_norms * q_norm)


def _select(dist, ids, k):
    order = np.lexsort((ids, dist))[:k]
    return ids[order], dist[order]


def brute_force_knn(points, q, k, metric=Metric.EUCLIDEAN):
    """Exhaustive-scan reference: ``(ids, distances)`` of the ``k`` nearest rows."""
    points = np.asarray(points, dtype=np.float64)
    d = distances(metric, points, np.asarray(q, dtype=np.float64))
    return _select(d, np.arange(points.shape[0]), k)


class SearchIndex:
    """Immutable exact KNN index over a point set."""

    def __init__(self, points, metric=Metric.EUCLIDEAN, leaf_size=LEAF_SIZE):
        try:
            points = np.array(points, dtype=np.float64, ndmin=2)
        except ValueError:
            raise ShapeError("points do not share one dimension") from None
        if points.shape[0] == 0 or points.size == 0:
            raise EmptyDatasetError("cannot build an index over zero points")
        if points.ndim != 2:
            raise ShapeError("points must form a 2-D array")
        if not np.all(np.isfinite(points)):
            raise ValueError("points contain non-finite values")
        self.metric = Metric(metric)
        self.points = points
        self.points.setflags(write=False)
        self.n, self.dim = points.shape
        self._norms = None
        if self.metric is Metric.COSINE:
            self._norms = np.sqrt(np.sum(points * points, axis=1))
            if np.any(self._norms == 0.0):
                raise ParameterError("cosine metric requires nonzero stored vectors")
        self.use_tree = self.dim <= MAX_TREE_DIM and self.n > leaf_size
        if self.use_tree:
            self._build(leaf_size)

    def __len__(self):
        return self.n

    def _tree_space(self, x):
        # Cosine tree bounds are computed on the unit sphere.
        if self.metric is Metric.COSINE:
            return x / np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
        return x

    def _build(self, leaf_size):
        space = self._tree_space(self.points)
        perm = np.arange(self.n)
        # node arrays: split dim (-1 for leaves), split value, children, slice bounds
        split_dim, split_val, left, right, lo, hi = [], [], [], [], [], []

        def make(start, stop):
            node = len(split_dim)
            split_dim.append(-1)
            split_val.append(0.0)
            left.append(-1)
            right.append(-1)
            lo.append(start)
            hi.append(stop)
            if stop - start <= leaf_size:
                return node
            block = space[perm[start:stop]]
            spread = block.max(axis=0) - block.min(axis=0)
            dim = int(np.argmax(spread))
            if spread[dim] == 0.0:
                return node
            mid = (stop - start) // 2
            order = np.argpartition(block[:, dim], mid)
            perm[start:stop] = perm[start:stop][order]
            split_dim[node] = dim
            split_val[node] = float(space[perm[start + mid], dim])
            left[node] = make(start, start + mid)
            right[node] = make(start + mid, stop)
            return node

        make(0, self.n)
        self._split_dim = split_dim
        self._split_val = split_val
        self._left = left
        self._right = right
        self._lo = lo
        self._hi = hi
        self._perm = perm
        self._leaf_points = self.points[perm]
        self._leaf_norms = None if self._norms is None else self._norms[perm]

    def _check_query(self, q, k):
        q = np.asarray(q, dtype=np.float64).reshape(-1)
        if q.shape[0] != self.dim:
            raise ShapeError(f"query has dimension {q.shape[0]}, index has {self.dim}")
        if not np.all(np.isfinite(q)):
            raise ValueError("query contains non-finite values")
        k = int(k)
        if k < 1 or k > self.n:
            raise ParameterError(f"k={k} must satisfy 1 <= k <= N={self.n}")
        return q, k

    def query(self, q, k=1):
        """Return ``(ids, distances)`` of the ``k`` nearest points, nearest first."""
        q, k = self._check_query(q, k)
        if not self.use_tree:
            d = distances(self.metric, self.points, q, self._norms)
            return _select(d, np.arange(self.n), k)
        if self.metric is Metric.COSINE and not np.any(q):
            raise ParameterError("cosine distance is undefined for a zero query vector")
        tq = self._tree_space(q).tolist()
        manhattan = self.metric is Metric.MANHATTAN
        cosine = self.metric is Metric.COSINE
        best_ids = np.empty(0, dtype=np.int64)
        best_d = np.empty(0)
        limit = np.inf
        # rd: lower bound on the distance to a node's cell, accumulated per axis
        # (sum of |offset| for manhattan, sum of offset^2 otherwise).
        stack = [(0, 0.0, [0.0] * self.dim)]
        split_dim, split_val = self._split_dim, self._split_val
        left, right = self._left, self._right
        while stack:
            node, rd, off = stack.pop()
            if rd > limit:
                continue
            dim = split_dim[node]
            if dim < 0:
                lo, hi = self._lo[node], self._hi[node]
                norms = None if self._leaf_norms is None else self._leaf_norms[lo:hi]
                d = distances(self.metric, self._leaf_points[lo:hi], q, norms)
                best_ids, best_d = _select(np.concatenate([best_d, d]),
                                           np.concatenate([best_ids, self._perm[lo:hi]]), k)
                if best_d.shape[0] == k:
                    kth = float(best_d[-1])
                    kth += _REL_SLACK * abs(kth) + _ABS_SLACK
                    if manhattan:
                        limit = kth
                    elif cosine:
                        limit = 2.0 * kth
                    else:
                        limit = kth * kth
                continue
            gap = tq[dim] - split_val[node]
            if gap <= 0:
                near, far = left[node], right[node]
            else:
                near, far = right[node], left[node]
            new = abs(gap) if manhattan else gap * gap
            far_rd = rd - off[dim] + new
            if far_rd <= limit:
                far_off = list(off)
                far_off[dim] = new
                stack.append((far, far_rd, far_off))
            stack.append((near, rd, off))
        return best_ids, best_d

    def _block_distances(self, queries):
        # Same element-wise arithmetic as distances(), broadcast over a block.
        if self.metric is Metric.EUCLIDEAN:
            diff = self.points[None, :, :] - queries[:, None, :]
            return np.sqrt(np.sum(diff * diff, axis=2))
        if self.metric is Metric.MANHATTAN:
            return np.sum(np.abs(self.points[None, :, :] - queries[:, None, :]), axis=2)
        q_norm = np.sqrt(np.sum(queries * queries, axis=1))
        if np.any(q_norm == 0.0):
            raise ParameterError("cosine distance is undefined for a zero query vector")
        dots = np.sum(self.points[None, :, :] * queries[:, None, :], axis=2)
        return 1.0 - dots / (self._norms[None, :] * q_norm[:, None])

    def _scan_many(self, queries, k):
        m = queries.shape[0]
        ids = np.empty((m, k), dtype=np.int64)
        dist = np.empty((m, k))
        block = max(1, SCAN_BLOCK_ELEMENTS // (self.n * self.dim))
        all_ids = np.arange(self.n)
        for start in range(0, m, block):
            d = self._block_distances(queries[start:start + block])
            kth = np.partition(d, k - 1, axis=1)[:, k - 1]
            for row, (dr, bound) in enumerate(zip(d, kth)):
                # Every point tied with the k-th distance competes on id.
                cand = np.flatnonzero(dr <= bound)
                ids[start + row], dist[start + row] = _select(dr[cand], all_ids[cand], k)
        return ids, dist

    def query_many(self, queries, k=1):
        """Batched :meth:`query`; returns arrays of shape ``(M, k)``."""
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        k = int(k)
        if queries.shape[0] and (not self.use_tree or self.n <= SCAN_MAX_POINTS):
            if queries.ndim != 2 or queries.shape[1] != self.dim:
                raise ShapeError(f"queries must have shape (M, {self.dim})")
            if k < 1 or k > self.n:
                raise ParameterError(f"k={k} must satisfy 1 <= k <= N={self.n}")
            if not np.all(np.isfinite(queries)):
                raise ValueError("query contains non-finite values")
            return self._scan_many(queries, k)
        ids = np.empty((queries.shape[0], k), dtype=np.int64)
        dist = np.empty((queries.shape[0], k))
        for i, q in enumerate(queries):
            ids[i], dist[i] = self.query(q, k)
        return ids, dist

    def self_knn_distances(self, k=1):
        """Distance from every stored point to its k-th nearest *other* stored point."""
        k = int(k)
        if self.n < 2:
            raise ParameterError("self-excluded KNN needs at least two points")
        if k < 1 or k > self.n - 1:
            raise ParameterError(f"k={k} must satisfy 1 <= k <= N-1={self.n - 1}")
        ids, d = self.query_many(self.points, k + 1)
        out = np.empty(self.n)
        for i in range(self.n):
            keep = ids[i] != i
            out[i] = d[i][keep][k - 1]
        return out


def build(points, metric=Metric.EUCLIDEAN, k_max=None):
    """Build a :class:`SearchIndex`; ``k_max`` only validates the intended query size."""
    if k_max is not None and int(k_max) < 1:
        raise ParameterError("k_max must be at least 1")
    return SearchIndex(points, metric)
