"""Sign-prediction evaluation: connected train/test splits, AUC and repeated runs."""

from __future__ import annotations

import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from . import embedding as emb_mod
from . import maxent
from .graph import SignedGraph, is_connected, load_graph

logger = logging.getLogger(__name__)

METHODS = ("prior-pol", "prior-pol-tri", "csne-pol", "csne-pol-tri")


@dataclass
class EvalSplit:
    train: SignedGraph
    test_edges: np.ndarray
    test_signs: np.ndarray
    train_fraction: float
    seed: int
    train_ids: np.ndarray = field(repr=False, default=None)
    test_ids: np.ndarray = field(repr=False, default=None)


def random_spanning_tree(g: SignedGraph, rng) -> np.ndarray:
    """Edge ids of a uniformly random spanning tree (Wilson's algorithm).

    Signs are ignored. The graph must be connected.
    """
    rng = np.random.default_rng(rng)
    indptr, nbrs, _, eids = g.csr()
    n = g.n
    in_tree = np.zeros(n, dtype=bool)
    nxt = np.full(n, -1, dtype=np.int64)
    nxt_edge = np.full(n, -1, dtype=np.int64)
    order = rng.permutation(n)
    in_tree[order[0]] = True
    tree = []
    buf = rng.random(1 << 16)
    pos = 0
    indptr_l, nbrs_l, eids_l = indptr.tolist(), nbrs.tolist(), eids.tolist()
    for start in order.tolist():
        u = start
        while not in_tree[u]:
            if pos == len(buf):
                buf = rng.random(1 << 16)
                pos = 0
            a = indptr_l[u]
            k = a + int(buf[pos] * (indptr_l[u + 1] - a))
            pos += 1
            nxt[u] = nbrs_l[k]
            nxt_edge[u] = eids_l[k]
            u = nbrs_l[k]
        u = start
        while not in_tree[u]:
            in_tree[u] = True
            tree.append(nxt_edge[u])
            u = nxt[u]
    return np.array(sorted(tree), dtype=np.int64)


def split_edges(g: SignedGraph, train_fraction=0.8, seed=0) -> EvalSplit:
    """Split edges into train and test so that the train graph stays connected.

    A uniform random spanning tree is placed in the train set first; the
    remaining edges are shuffled and fill the train budget of
    ``round(train_fraction * m)`` edges. Signs play no role in the selection.
    """
    if not 0 < train_fraction <= 1:
        raise ValueError("train_fraction must be in (0, 1]")
    if not is_connected(g):
        raise ValueError("graph must be connected to build a connected train split")
    m, n = g.m, g.n
    n_train = int(math.floor(train_fraction * m + 0.5))
    if n_train < n - 1:
        raise ValueError(f"train fraction {train_fraction} leaves {n_train} edges but a connected train graph "
                         f"needs {n - 1}; minimum feasible fraction is {(n - 1) / m:.4f}")
    rng = np.random.default_rng(seed)
    tree = random_spanning_tree(g, rng)
    rest = np.setdiff1d(np.arange(m), tree)
    rng.shuffle(rest)
    extra = n_train - len(tree)
    train_ids = np.sort(np.concatenate((tree, rest[:extra])))
    test_ids = np.sort(rest[extra:])
    if len(test_ids) == 0:
        warnings.warn("split leaves no test edges", RuntimeWarning, stacklevel=2)
    mask = np.zeros(m, dtype=bool)
    mask[train_ids] = True
    return EvalSplit(g.subgraph(mask), g.edges[test_ids], g.signs[test_ids].astype(np.int64),
                     train_fraction, seed, train_ids, test_ids)


def auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank statistic.

    ``labels`` are signs in {-1, +1} (or 0/1); tied scores share average ranks.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    pos = labels > 0
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined with a single class")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class ReportRow:
    method: str
    dataset: str
    repeat: int
    seed: int
    auc: float
    fit_seconds: float
    predict_seconds: float


@dataclass
class Report:
    rows: list = field(default_factory=list)

    HEADER = ("method", "dataset", "repeat", "seed", "auc", "fit_seconds", "predict_seconds")

    def aggregate(self):
        """(method, dataset) -> (auc mean, auc sample std, mean fit seconds)."""
        groups = {}
        for r in self.rows:
            groups.setdefault((r.method, r.dataset), []).append(r)
        out = {}
        for key, rows in groups.items():
            a = np.array([r.auc for r in rows])
            std = float(a.std(ddof=1)) if len(a) > 1 else 0.0
            out[key] = (float(a.mean()), std, float(np.mean([r.fit_seconds for r in rows])))
        return out

    def format(self, timings=True):
        lines = ["\t".join(self.HEADER if timings else self.HEADER[:5])]
        for r in self.rows:
            fields = [r.method, r.dataset, str(r.repeat), str(r.seed), f"{r.auc:.6f}"]
            if timings:
                fields += [f"{r.fit_seconds:.4f}", f"{r.predict_seconds:.4f}"]
            lines.append("\t".join(fields))
        lines.append("")
        lines.append("method\tdataset\tauc_mean\tauc_std" + ("\tfit_seconds_mean" if timings else ""))
        for (method, ds), (mean, std, fit_s) in self.aggregate().items():
            lines.append(f"{method}\t{ds}\t{mean:.6f}\t{std:.6f}" + (f"\t{fit_s:.4f}" if timings else ""))
        return "\n".join(lines) + "\n"


@dataclass
class MethodResult:
    auc: float
    fit_seconds: float
    predict_seconds: float
    prior: maxent.MaxEntModel
    embedding: emb_mod.Embedding | None = None


def run_method(split: EvalSplit, method, prior_config=None, csne_config=None, csne_callback=None) -> MethodResult:
    """Fit one method on a split and score its test pairs."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    tri = method.endswith("-tri")
    prior_config = replace(prior_config or maxent.MaxEntConfig(), use_triangles=tri)
    t0 = time.perf_counter()
    prior = maxent.fit(split.train, config=prior_config)
    emb = None
    if method.startswith("csne"):
        emb = emb_mod.fit_csne(split.train, prior, csne_config or emb_mod.CsneConfig(seed=split.seed),
                               callback=csne_callback)
    fit_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    # rank by log-odds: same order as the probabilities, without ties from saturation
    if emb is None:
        scores = prior.scores(split.test_edges)
    else:
        scores = emb_mod.predict_logits(emb, prior, split.test_edges)
    pred_s = time.perf_counter() - t0
    return MethodResult(auc(scores, split.test_signs), fit_s, pred_s, prior, emb)


def _one_repeat(g, name, method, r, seed, train_fraction, prior_config, csne_config):
    s = seed + r
    try:
        split = split_edges(g, train_fraction, s)
        cfg = replace(csne_config, seed=s) if csne_config is not None else emb_mod.CsneConfig(seed=s)
        res = run_method(split, method, prior_config, cfg)
    except Exception as exc:
        raise RuntimeError(f"repeat {r} ({method} on {name}) failed: {exc}") from exc
    logger.info("%s %s repeat %d: auc=%.4f fit=%.2fs", method, name, r, res.auc, res.fit_seconds)
    return ReportRow(method, name, r, s, res.auc, res.fit_seconds, res.predict_seconds)


def run_experiment(data, methods=("prior-pol-tri",), repeats=3, train_fraction=0.8, seed=0,
                   prior_config=None, csne_config=None, dataset=None, parallel=False, **load_opts) -> Report:
    """Repeat split / fit / score for each method and collect a :class:`Report`.

    ``data`` is a :class:`SignedGraph` or a path to an edge file, which is
    loaded and reduced to its largest component. Repeat ``r`` uses seed
    ``seed + r`` for both the split and the embedding initialization.
    """
    if isinstance(methods, str):
        methods = (methods,)
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    if isinstance(data, SignedGraph):
        g, name = data, dataset or "graph"
    else:
        g = load_graph(data, **load_opts)
        name = dataset or os.path.splitext(os.path.basename(str(data)))[0]
    jobs = [(g, name, method, r, seed, train_fraction, prior_config, csne_config)
            for method in methods for r in range(repeats)]
    if parallel:
        with ProcessPoolExecutor() as pool:
            rows = list(pool.map(_one_repeat, *zip(*jobs)))
    else:
        rows = [_one_repeat(*job) for job in jobs]
    return Report(rows)
