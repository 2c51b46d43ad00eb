"""Exact k-d tree nearest-neighbour search over a fixed point set.

The tree is stored as flat arrays so the query loop can be compiled with
numba. Splits are at the median of the widest-spread axis. Ties in squared
distance resolve to the lowest point index, which makes results identical to
``np.argmin`` over a linear scan.
"""
from __future__ import annotations

import numba
import numpy as np

LEAF_SIZE = 8


class KDTree:
    """Static k-d tree for exact nearest-neighbour queries.

    Parameters
    ----------
    points : (n, k) array_like
        Data points. A private contiguous copy is kept.
    leaf_size : int
        Maximum number of points per leaf bucket.
    """

    def __init__(self, points, leaf_size: int = LEAF_SIZE):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or len(pts) == 0:
            raise ValueError("points must be a non-empty (n, k) array")
        self.points = pts
        self.leaf_size = max(1, int(leaf_size))
        n = len(pts)
        self.perm = np.arange(n, dtype=np.int64)
        dims, splits, lefts, rights, starts, ends = [], [], [], [], [], []

        def new_node():
            dims.append(-1)
            splits.append(0.0)
            lefts.append(-1)
            rights.append(-1)
            starts.append(0)
            ends.append(0)
            return len(dims) - 1

        root = new_node()
        stack = [(root, 0, n)]
        while stack:
            node, lo, hi = stack.pop()
            starts[node], ends[node] = lo, hi
            if hi - lo <= self.leaf_size:
                continue
            idx = self.perm[lo:hi]
            sub = pts[idx]
            spread = sub.max(axis=0) - sub.min(axis=0)
            dim = int(np.argmax(spread))
            if spread[dim] == 0:
                continue  # all points identical: keep as an oversized leaf
            mid = (hi - lo) // 2
            order = np.argpartition(sub[:, dim], mid, kind="introselect")
            self.perm[lo:hi] = idx[order]
            dims[node] = dim
            splits[node] = pts[self.perm[lo + mid], dim]
            left, right = new_node(), new_node()
            lefts[node], rights[node] = left, right
            stack.append((left, lo, lo + mid))
            stack.append((right, lo + mid, hi))

        self.dim = np.array(dims, dtype=np.int64)
        self.split = np.array(splits, dtype=np.float64)
        self.left = np.array(lefts, dtype=np.int64)
        self.right = np.array(rights, dtype=np.int64)
        self.start = np.array(starts, dtype=np.int64)
        self.end = np.array(ends, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.points)

    def _arrays(self):
        return (self.points, self.perm, self.dim, self.split,
                self.left, self.right, self.start, self.end)

    def query(self, q) -> tuple[int, float]:
        """Return ``(index, squared_distance)`` of the nearest point to ``q``."""
        q = np.ascontiguousarray(q, dtype=np.float64)
        i, d2 = _query_one(q, *self._arrays())
        return int(i), float(d2)

    def query_many(self, queries) -> tuple[np.ndarray, np.ndarray]:
        qs = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
        return _query_many(qs, *self._arrays())


def linear_scan(points, q) -> tuple[int, float]:
    """Brute-force nearest neighbour; the reference the tree must reproduce."""
    pts = np.asarray(points, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    d2 = np.zeros(len(pts))
    for k in range(pts.shape[1]):
        diff = pts[:, k] - q[k]
        d2 = d2 + diff * diff
    i = int(np.argmin(d2))
    return i, float(d2[i])


@numba.njit(cache=True)
def _query_one(q, points, perm, dim, split, left, right, start, end):
    k = points.shape[1]
    best_i = -1
    best_d2 = np.inf
    stack = np.empty(128, dtype=np.int64)
    bounds = np.empty(128, dtype=np.float64)
    top = 0
    stack[0] = 0
    bounds[0] = 0.0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if bounds[top] > best_d2:
            continue
        d = dim[node]
        if d < 0:
            for j in range(start[node], end[node]):
                p = perm[j]
                d2 = 0.0
                for c in range(k):
                    diff = points[p, c] - q[c]
                    d2 = d2 + diff * diff
                if d2 < best_d2 or (d2 == best_d2 and p < best_i):
                    best_d2 = d2
                    best_i = p
            continue
        delta = q[d] - split[node]
        plane = delta * delta
        if delta < 0:
            near, far = left[node], right[node]
        else:
            near, far = right[node], left[node]
        # far pushed first so the near side is explored first
        stack[top] = far
        bounds[top] = plane
        top += 1
        stack[top] = near
        bounds[top] = 0.0
        top += 1
    return best_i, best_d2


@numba.njit(cache=True)
def _query_many(qs, points, perm, dim, split, left, right, start, end):
    n = qs.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for i in range(n):
        idx[i], dist[i] = _query_one(qs[i], points, perm, dim, split, left, right, start, end)
    return idx, dist
