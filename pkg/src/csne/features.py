"""Polarity and signed-wedge features of node pairs.

Wedge features of a pair {i, j} count the length-two paths i-k-j in a
reference graph, split by the signs of the two legs. They are defined for any
pair, linked or not, so held-out pairs are scored against the training graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import SignedGraph


@dataclass(frozen=True)
class PairFeatures:
    f_pp: int
    f_pm: int
    f_mm: int

    @property
    def common(self):
        return self.f_pp + self.f_pm + self.f_mm


@dataclass(frozen=True)
class StatisticSet:
    """Observed constraint targets on the {-1, +1} scale.

    ``polarity[l]`` is the sign sum around node ``l``; ``triangle`` holds
    the (c_pp, c_pm, c_mm) targets, all zero when triangles are disabled.
    """

    polarity: np.ndarray
    triangle: tuple = (0, 0, 0)
    use_triangles: bool = False

    @property
    def vector(self):
        """All targets in multiplier order (nodes first, then the three triangle terms)."""
        tri = self.triangle if self.use_triangles else ()
        return np.concatenate((np.asarray(self.polarity, dtype=np.float64), np.asarray(tri, dtype=np.float64)))


def polarity(g: SignedGraph, node: int) -> int:
    if not 0 <= node < g.n:
        raise IndexError(f"node {node} out of range for graph with {g.n} nodes")
    _, sg = g.adjacency(node)
    return int(sg.sum())


def polarities(g: SignedGraph) -> np.ndarray:
    out = np.zeros(g.n, dtype=np.int64)
    np.add.at(out, g.edges[:, 0], g.signs)
    np.add.at(out, g.edges[:, 1], g.signs)
    return out


def wedge_features(g: SignedGraph, i: int, j: int) -> PairFeatures:
    """Signed wedge counts for one pair via sorted-adjacency intersection."""
    if i == j:
        raise ValueError("wedge features need two distinct nodes")
    for v in (i, j):
        if not 0 <= v < g.n:
            raise IndexError(f"node {v} out of range for graph with {g.n} nodes")
    ni, si = g.adjacency(i)
    nj, sj = g.adjacency(j)
    _, ki, kj = np.intersect1d(ni, nj, assume_unique=True, return_indices=True)
    a, b = si[ki], sj[kj]
    pp = int(np.sum((a > 0) & (b > 0)))
    mm = int(np.sum((a < 0) & (b < 0)))
    return PairFeatures(pp, len(ki) - pp - mm, mm)


def pair_features(g: SignedGraph, pairs) -> np.ndarray:
    """Wedge features of many pairs at once, as an (k, 3) int array.

    Rows are (f_pp, f_pm, f_mm). Same counts as :func:`wedge_features`, with
    the intersections done as sparse row products.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    if np.any(pairs[:, 0] == pairs[:, 1]):
        raise ValueError("wedge features need two distinct nodes")
    ap, am = g.matrix("+"), g.matrix("-")
    i, j = pairs[:, 0], pairs[:, 1]

    def count(a, b):
        return np.asarray(a[i].multiply(b[j]).sum(axis=1)).ravel()

    out = np.empty((len(pairs), 3), dtype=np.int64)
    out[:, 0] = count(ap, ap)
    out[:, 1] = count(ap, am) + count(am, ap)
    out[:, 2] = count(am, am)
    return out


def observed_statistics(g: SignedGraph, use_triangles=True, features=None) -> StatisticSet:
    """Empirical targets of the polarity and (optionally) triangle statistics.

    ``features`` may pass precomputed edge-aligned wedge features of ``g``.
    """
    tri = (0, 0, 0)
    if use_triangles:
        f = pair_features(g, g.edges) if features is None else features
        tri = tuple(int(v) for v in f.T @ g.signs.astype(np.int64))
    return StatisticSet(polarities(g), tri, bool(use_triangles))
