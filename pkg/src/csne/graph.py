"""Signed graph container, edge-list ingestion and preprocessing.

Edge files are read into raw directed records, collapsed into an undirected
signed graph, and usually restricted to the largest connected component
before any modelling happens.
"""

from __future__ import annotations

import gzip
import io
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)

DEFAULT_COMMENTS = ("#", "%")
CONFLICT_POLICIES = ("sum", "first", "drop")


class ParseError(ValueError):
    """Raised for malformed edge-list input."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class RawRecord:
    source: str
    target: str
    sign: int


@dataclass
class ParseResult:
    records: list
    dropped_zero: int = 0


def label_key(label):
    """Sort key placing integer-like labels first, in numeric order."""
    try:
        return (0, int(label), "")
    except ValueError:
        return (1, 0, label)


def _parse_sign(token, weighted, lineno):
    if token in ("+", "-"):
        return 1 if token == "+" else -1
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"non-numeric weight {token!r}", lineno) from None
    if not np.isfinite(value):
        raise ParseError(f"non-finite weight {token!r}", lineno)
    if not weighted and value not in (-1.0, 1.0):
        raise ParseError(f"sign must be -1 or 1, got {token!r}", lineno)
    return int(np.sign(value))


def parse_edge_list(stream, delimiter=None, weighted=True, comments=DEFAULT_COMMENTS,
                    header=False, columns=(0, 1, 2)) -> ParseResult:
    """Parse a signed edge list into raw directed records.

    Parameters
    ----------
    stream : text stream or str
        Source of lines. A ``str`` is treated as the file contents.
    delimiter : str, optional
        Field separator. ``None`` splits on commas and any whitespace.
    weighted : bool
        If True the sign column may hold any integer weight and is reduced by
        ``sign(w)``; zero weights are dropped and counted. If False the column
        must be exactly -1 or 1 (``+`` and ``-`` are accepted either way).
    comments : tuple of str
        Lines starting with any of these prefixes are skipped.
    header : bool
        Skip the first non-comment line.
    columns : tuple of int
        Positions of the source, target and sign fields. Extra fields such as
        timestamps are ignored.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    need = max(columns) + 1
    records = []
    dropped = 0
    skipped_header = not header
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line or line.startswith(tuple(comments)):
            continue
        if not skipped_header:
            skipped_header = True
            continue
        if delimiter is None:
            fields = line.replace(",", " ").split()
        else:
            fields = [f.strip() for f in line.split(delimiter)]
        if len(fields) < need:
            raise ParseError(f"expected at least {need} fields, got {len(fields)}", lineno)
        s = _parse_sign(fields[columns[2]], weighted, lineno)
        if s == 0:
            dropped += 1
            continue
        records.append(RawRecord(fields[columns[0]], fields[columns[1]], s))
    if not records and not dropped:
        raise ParseError("empty input: no edge records found")
    if dropped:
        logger.info("dropped %d zero-weight records", dropped)
    return ParseResult(records, dropped)


def parse_wiki_rfa(stream) -> ParseResult:
    """Parse the SRC/TGT/VOT block format of the Wikipedia adminship votes.

    Neutral votes and records with an empty source are dropped.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    records = []
    dropped = 0
    cur = {}
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\n")
        if ":" not in line:
            continue
        key, _, value = line.partition(":")
        if key in ("SRC", "TGT", "VOT"):
            cur[key] = value.strip()
        if key == "VOT":
            src, tgt = cur.get("SRC", ""), cur.get("TGT", "")
            try:
                vote = int(cur["VOT"])
            except ValueError:
                raise ParseError(f"non-numeric vote {cur['VOT']!r}", lineno) from None
            if vote == 0 or not src or not tgt:
                dropped += 1
            else:
                records.append(RawRecord(src, tgt, 1 if vote > 0 else -1))
            cur = {}
    if not records:
        raise ParseError("empty input: no vote records found")
    return ParseResult(records, dropped)


@dataclass(frozen=True, eq=False)
class SignedGraph:
    """Immutable undirected signed graph over dense node indices.

    ``edges`` is an (m, 2) int array with ``edges[:, 0] < edges[:, 1]``, sorted
    lexicographically; ``signs`` holds the matching values in {-1, +1}.
    ``labels[i]`` is the original id of node ``i``.
    """

    n: int
    edges: np.ndarray
    signs: np.ndarray
    labels: tuple = ()
    _index: dict = field(default=None, repr=False)
    _csr: tuple = field(default=None, repr=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        signs = np.asarray(self.signs, dtype=np.int8).ravel()
        if len(edges) != len(signs):
            raise ValueError("edges and signs differ in length")
        if len(edges):
            lo, hi = edges.min(axis=1), edges.max(axis=1)
            if np.any(lo == hi):
                raise ValueError("self-loops are not allowed")
            if lo.min() < 0 or hi.max() >= self.n:
                raise ValueError("edge endpoint out of range")
            if not np.all(np.abs(signs) == 1):
                raise ValueError("signs must be -1 or +1")
            order = np.lexsort((hi, lo))
            edges = np.column_stack((lo, hi))[order]
            signs = signs[order]
            if np.any(np.all(edges[1:] == edges[:-1], axis=1)):
                raise ValueError("duplicate edges are not allowed")
        labels = tuple(self.labels) if self.labels else tuple(str(i) for i in range(self.n))
        if len(labels) != self.n:
            raise ValueError("labels must have one entry per node")
        edges.setflags(write=False)
        signs.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_edges(cls, n, edges, signs, labels=()):
        return cls(n, np.asarray(edges, dtype=np.int64).reshape(-1, 2), signs, labels)

    @property
    def m(self):
        return len(self.edges)

    @property
    def index(self):
        """Map from original label to dense node index."""
        if self._index is None:
            object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(self.labels)})
        return self._index

    def node(self, label):
        try:
            return self.index[label]
        except KeyError:
            raise KeyError(f"unknown node label {label!r}") from None

    def csr(self):
        """Symmetric adjacency in CSR form as ``(indptr, indices, signs, edge_ids)``.

        Neighbors of each node are sorted; ``edge_ids`` points back into
        ``edges`` so per-edge arrays can be gathered per adjacency entry.
        """
        if self._csr is None:
            m = self.m
            rows = np.concatenate((self.edges[:, 0], self.edges[:, 1]))
            cols = np.concatenate((self.edges[:, 1], self.edges[:, 0]))
            eids = np.concatenate((np.arange(m), np.arange(m)))
            order = np.lexsort((cols, rows))
            rows, cols, eids = rows[order], cols[order], eids[order]
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(np.bincount(rows, minlength=self.n), out=indptr[1:])
            sg = np.asarray(self.signs)[eids]
            object.__setattr__(self, "_csr", (indptr, cols, sg, eids))
        return self._csr

    def adjacency(self, i):
        """Sorted neighbor indices and signs of node ``i``."""
        indptr, cols, sg, _ = self.csr()
        return cols[indptr[i]:indptr[i + 1]], sg[indptr[i]:indptr[i + 1]]

    def degrees(self):
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def matrix(self, which=None):
        """Sparse symmetric adjacency; ``which`` selects '+' or '-' edges only."""
        if which is None:
            mask = np.ones(self.m, dtype=bool)
            vals = self.signs.astype(np.float64)
        else:
            mask = self.signs == (1 if which == "+" else -1)
            vals = np.ones(int(mask.sum()))
        e = self.edges[mask]
        a = sp.coo_matrix((vals, (e[:, 0], e[:, 1])), shape=(self.n, self.n))
        return (a + a.T).tocsr()

    def sign_of(self, i, j):
        """Sign of edge {i, j}, or 0 when the pair is unlinked."""
        nbrs, sg = self.adjacency(i)
        k = np.searchsorted(nbrs, j)
        if k < len(nbrs) and nbrs[k] == j:
            return int(sg[k])
        return 0

    def subgraph(self, edge_mask):
        """Graph on the same node set keeping only the masked edges."""
        edge_mask = np.asarray(edge_mask, dtype=bool)
        return SignedGraph(self.n, self.edges[edge_mask], self.signs[edge_mask], self.labels)

    def __eq__(self, other):
        if not isinstance(other, SignedGraph):
            return NotImplemented
        return (self.n == other.n and self.labels == other.labels
                and np.array_equal(self.edges, other.edges)
                and np.array_equal(self.signs, other.signs))

    __hash__ = None


def to_undirected(records: Iterable[RawRecord], policy="sum") -> SignedGraph:
    """Collapse directed records into an undirected signed graph.

    ``policy`` decides how several records on one unordered pair merge:
    ``sum`` takes the sign of the summed signs and drops zero sums,
    ``first`` keeps the first record seen, and ``drop`` removes any pair whose
    records disagree. Self-loops are always removed.
    """
    if policy not in CONFLICT_POLICIES:
        raise ValueError(f"unknown conflict policy {policy!r}; choose from {CONFLICT_POLICIES}")
    merged = {}
    loops = 0
    for r in records:
        if r.source == r.target:
            loops += 1
            continue
        key = (r.source, r.target) if label_key(r.source) <= label_key(r.target) else (r.target, r.source)
        if policy == "sum":
            merged[key] = merged.get(key, 0) + r.sign
        elif policy == "first":
            merged.setdefault(key, r.sign)
        else:
            prev = merged.get(key)
            merged[key] = r.sign if prev is None or prev == r.sign else 0
    if loops:
        logger.info("removed %d self-loop records", loops)
    pairs = [(k, int(np.sign(v))) for k, v in merged.items() if v != 0]
    labels = sorted({lab for (u, v), _ in pairs for lab in (u, v)}, key=label_key)
    idx = {lab: i for i, lab in enumerate(labels)}
    edges = np.array([(idx[u], idx[v]) for (u, v), _ in pairs], dtype=np.int64).reshape(-1, 2)
    signs = np.array([s for _, s in pairs], dtype=np.int8)
    return SignedGraph(len(labels), edges, signs, tuple(labels))


def components(g: SignedGraph):
    """Sign-blind connected component id per node."""
    a = sp.coo_matrix((np.ones(g.m), (g.edges[:, 0], g.edges[:, 1])), shape=(g.n, g.n))
    return connected_components(a, directed=False)


def is_connected(g: SignedGraph):
    return g.n > 0 and components(g)[0] == 1


def largest_connected_component(g: SignedGraph) -> SignedGraph:
    """Induced subgraph on the largest sign-blind component.

    Ties go to the component holding the smallest original label. Nodes are
    re-indexed densely in their original relative order.
    """
    if g.n == 0 or g.m == 0:
        raise ValueError("graph has no edges")
    ncomp, comp = components(g)
    if ncomp == 1:
        return g
    sizes = np.bincount(comp)
    best = None
    for c in np.flatnonzero(sizes == sizes.max()):
        smallest = min((g.labels[i] for i in np.flatnonzero(comp == c)), key=label_key)
        if best is None or label_key(smallest) < label_key(best[1]):
            best = (c, smallest)
    keep = comp == best[0]
    remap = np.full(g.n, -1, dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    emask = keep[g.edges[:, 0]]
    labels = tuple(lab for lab, k in zip(g.labels, keep) if k)
    return SignedGraph(len(labels), remap[g.edges[emask]], g.signs[emask], labels)


def load_graph(path, fmt="edges", policy="sum", lcc=True, **parse_opts) -> SignedGraph:
    """Read, undirect and (optionally) restrict a dataset to its largest component.

    Files ending in ``.gz`` are decompressed on the fly.
    """
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as fh:
        if fmt == "wiki-rfa":
            parsed = parse_wiki_rfa(fh)
        else:
            parsed = parse_edge_list(fh, **parse_opts)
    g = to_undirected(parsed.records, policy)
    return largest_connected_component(g) if lcc else g


def write_edges(g: SignedGraph, fh, edge_ids: Sequence[int] | None = None):
    ids = range(g.m) if edge_ids is None else edge_ids
    for e in ids:
        i, j = g.edges[e]
        fh.write(f"{g.labels[i]}\t{g.labels[j]}\t{int(g.signs[e])}\n")


@dataclass(frozen=True)
class TriangleCensus:
    t_ppp: int = 0
    t_ppm: int = 0
    t_pmm: int = 0
    t_mmm: int = 0

    @property
    def t_total(self):
        return self.t_ppp + self.t_ppm + self.t_pmm + self.t_mmm

    @property
    def balanced(self):
        return self.t_ppp + self.t_pmm


def _oriented(g: SignedGraph, sign):
    # upper-triangular adjacency: row i holds neighbors k > i
    mask = g.signs == sign
    e = g.edges[mask]
    return sp.csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(g.n, g.n))


def triangle_census(g: SignedGraph) -> TriangleCensus:
    """Count triangles by sign pattern, each triangle exactly once.

    For every edge (i, j) with i < j the common neighbors k > j are found by
    intersecting the forward adjacency rows of i and j, so a triangle i<j<k is
    seen only from its lowest edge.
    """
    if g.m == 0:
        return TriangleCensus()
    up, um = _oriented(g, 1), _oriented(g, -1)
    i, j = g.edges[:, 0], g.edges[:, 1]

    def common(a, b):
        return np.asarray(a[i].multiply(b[j]).sum(axis=1)).ravel().astype(np.int64)

    n_pp = common(up, up)
    n_mm = common(um, um)
    n_pm = common(up, um) + common(um, up)
    pos = g.signs > 0
    neg = ~pos
    return TriangleCensus(
        t_ppp=int(n_pp[pos].sum()),
        t_ppm=int(n_pm[pos].sum() + n_pp[neg].sum()),
        t_pmm=int(n_mm[pos].sum() + n_pm[neg].sum()),
        t_mmm=int(n_mm[neg].sum()),
    )


@dataclass(frozen=True)
class GraphStats:
    n: int
    m: int
    density: float
    positive_fraction: float
    balanced_fraction: float | None
    census: TriangleCensus | None = None

    def rows(self):
        bal = "NA" if self.balanced_fraction is None else f"{self.balanced_fraction:.4f}"
        return [
            ("n", str(self.n)),
            ("m", str(self.m)),
            ("edges_per_node", f"{self.density:.4f}"),
            ("positive_fraction", f"{self.positive_fraction:.4f}"),
            ("balanced_triangle_fraction", bal),
        ]


def stats(g: SignedGraph) -> GraphStats:
    census = triangle_census(g)
    t = census.t_total
    return GraphStats(
        n=g.n,
        m=g.m,
        density=g.m / g.n if g.n else 0.0,
        positive_fraction=float(np.mean(g.signs > 0)) if g.m else 0.0,
        balanced_fraction=census.balanced / t if t else None,
        census=census,
    )
