"""Conditional signed network embedding.

Edge lengths are modelled as half-normal with spread ``sigma1`` for positive
and ``sigma2`` for negative edges. Combined with the MaxEnt prior through
Bayes' rule, the posterior log-odds of a positive sign for a pair at
distance d with prior p is

    logit(p) + log(sigma2 / sigma1) + d**2 / 2 * (1 / sigma2**2 - 1 / sigma1**2)

Node coordinates maximize the log-posterior of the observed training signs
with block stochastic gradient ascent, one node row per block.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .graph import SignedGraph
from .maxent import PROB_EPS, MaxEntModel

logger = logging.getLogger(__name__)

class ConfigError(ValueError):
    pass


@dataclass
class CsneConfig:
    dim: int = 20
    sigma1: float = 1.0
    sigma2: float = 2.0
    iterations: int = 500
    lr: float = 0.05
    seed: int = 0
    init_scale: float | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dim must be at least 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be at least 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        check_sigmas(self.sigma1, self.sigma2)

    @property
    def scale(self):
        return 1.0 / np.sqrt(self.dim) if self.init_scale is None else self.init_scale


def check_sigmas(sigma1, sigma2, allow_equal=False):
    if sigma1 <= 0 or sigma2 <= 0:
        raise ConfigError("spread parameters must be positive")
    if sigma1 > sigma2 or (sigma1 == sigma2 and not allow_equal):
        raise ConfigError(f"need sigma1 < sigma2, got sigma1={sigma1}, sigma2={sigma2}")


@dataclass
class Embedding:
    X: np.ndarray
    sigma1: float = 1.0
    sigma2: float = 2.0
    labels: tuple = ()
    trace: list = field(default_factory=list)

    def __post_init__(self):
        check_sigmas(self.sigma1, self.sigma2)
        if not np.all(np.isfinite(self.X)):
            raise ValueError("embedding contains non-finite coordinates")

    @property
    def d(self):
        return self.X.shape[1]

    def save(self, fh):
        fh.write(f"# csne d={self.d} sigma1={self.sigma1!r} sigma2={self.sigma2!r}\n")
        for lab, row in zip(self.labels, self.X):
            fh.write(lab + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, fh, graph: SignedGraph | None = None):
        header = fh.readline()
        if not header.startswith("# csne"):
            raise ValueError("not a csne embedding file")
        opts = dict(tok.split("=", 1) for tok in header[2:].split()[1:])
        d = int(opts["d"])
        rows = {}
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != d + 1:
                raise ValueError(f"line {lineno}: expected {d} coordinates")
            rows[parts[0]] = [float(v) for v in parts[1:]]
        labels = tuple(rows) if graph is None else graph.labels
        missing = [lab for lab in labels if lab not in rows]
        if missing:
            raise ValueError(f"embedding lacks node {missing[0]!r}")
        X = np.array([rows[lab] for lab in labels], dtype=np.float64).reshape(len(labels), d)
        return cls(X, float(opts["sigma1"]), float(opts["sigma2"]), labels)


def pair_distance(X, i, j) -> float:
    return float(np.linalg.norm(X[i] - X[j]))


def _clamped_logit(p):
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return np.log(p) - np.log1p(-p)


def posterior_logit(prior_p, dist, sigma1, sigma2):
    """Posterior log-odds of a positive sign given prior and embedded distance."""
    k = 1.0 / sigma2 ** 2 - 1.0 / sigma1 ** 2
    return _clamped_logit(prior_p) + np.log(sigma2 / sigma1) + 0.5 * np.square(dist) * k


def posterior(prior_p, dist, sigma1=1.0, sigma2=2.0):
    """P(a_ij = 1 | X) from the prior probability and the pair distance.

    Works elementwise on arrays. ``sigma1 == sigma2`` is accepted and gives
    back the prior.
    """
    check_sigmas(sigma1, sigma2, allow_equal=True)
    out = expit(posterior_logit(np.asarray(prior_p, dtype=np.float64), dist, sigma1, sigma2))
    return float(out) if np.ndim(out) == 0 else out


class _Problem:
    """Per-adjacency-entry arrays for fast node-block updates."""

    def __init__(self, g: SignedGraph, prior, sigma1, sigma2):
        check_sigmas(sigma1, sigma2, allow_equal=True)
        self.g = g
        self.k = 1.0 / sigma2 ** 2 - 1.0 / sigma1 ** 2
        prior = np.asarray(prior, dtype=np.float64)
        if prior.shape != (g.m,):
            raise ValueError("need one prior probability per training edge")
        # constant part of the posterior logit, per edge
        self.base = _clamped_logit(prior) + np.log(sigma2 / sigma1)
        self.indptr, self.nbrs, self.nsign, eids = g.csr()
        self.nbase = self.base[eids]
        self.pos = self.nsign > 0
        self.deg = np.diff(self.indptr)

    def step_sizes(self, lr):
        """Per-node step: ``lr``, capped at the inverse curvature bound |k| * degree."""
        bound = np.abs(self.k) * np.maximum(self.deg, 1)
        with np.errstate(divide="ignore"):
            return np.minimum(lr, 1.0 / bound)

    def edge_logits(self, X):
        e = self.g.edges
        with np.errstate(over="ignore", invalid="ignore"):
            d2 = np.sum(np.square(X[e[:, 0]] - X[e[:, 1]]), axis=1)
        return self.base + 0.5 * self.k * d2

    def log_likelihood(self, X):
        z = self.edge_logits(X)
        terms = log_expit(np.where(self.g.signs > 0, z, -z))
        if not np.all(np.isfinite(terms)):
            bad = int(np.flatnonzero(~np.isfinite(terms))[0])
            i, j = self.g.edges[bad]
            raise FloatingPointError(
                f"non-finite log-likelihood term for pair ({self.g.labels[i]}, {self.g.labels[j]})")
        return float(terms.sum())

    def node_gradient(self, i, X):
        a, b = self.indptr[i], self.indptr[i + 1]
        if a == b:
            return np.zeros(X.shape[1])
        diff = X[i] - X[self.nbrs[a:b]]
        z = self.nbase[a:b] + 0.5 * self.k * np.einsum("ij,ij->i", diff, diff)
        post = expit(z)
        # d/dz log sigma(z) = 1 - sigma(z); d/dz log(1 - sigma(z)) = -sigma(z)
        coef = np.where(self.pos[a:b], 1.0 - post, -post) * self.k
        return coef @ diff


def _edge_prior(prior: MaxEntModel | np.ndarray, g: SignedGraph):
    if isinstance(prior, MaxEntModel):
        if prior.graph is g or prior.graph == g:
            return prior.edge_probabilities()
        return prior.probabilities(g.edges)
    return np.asarray(prior, dtype=np.float64)


def log_likelihood(X, g: SignedGraph, prior, sigma1=1.0, sigma2=2.0) -> float:
    """Log-posterior of the observed signs of ``g`` under embedding ``X``.

    ``prior`` is a fitted :class:`MaxEntModel` or an edge-aligned array of
    prior probabilities.
    """
    return _Problem(g, _edge_prior(prior, g), sigma1, sigma2).log_likelihood(np.asarray(X, dtype=np.float64))


def gradient_node(i, X, g: SignedGraph, prior, sigma1=1.0, sigma2=2.0):
    """Gradient of :func:`log_likelihood` with respect to row ``i`` of ``X``.

    Positive neighbors pull ``x_i`` closer, negative neighbors push it away.
    """
    return _Problem(g, _edge_prior(prior, g), sigma1, sigma2).node_gradient(i, np.asarray(X, dtype=np.float64))


def fit_csne(g: SignedGraph, prior, config: CsneConfig | None = None, callback=None, X0=None, **kwargs) -> Embedding:
    """Learn node coordinates by block stochastic gradient ascent.

    Every iteration visits all nodes once in a fresh random order and moves
    each row along its own gradient, using the latest coordinates of its
    neighbors. ``callback(iteration, X)`` runs after each pass; the per-pass
    log-likelihood is stored in ``Embedding.trace``.
    """
    config = config or CsneConfig()
    if kwargs:
        config = CsneConfig(**{**config.__dict__, **kwargs})
    rng = np.random.default_rng(config.seed)
    if X0 is None:
        X = rng.normal(0.0, config.scale, size=(g.n, config.dim))
    else:
        X = np.array(X0, dtype=np.float64)
    prob = _Problem(g, _edge_prior(prior, g), config.sigma1, config.sigma2)
    trace = []
    lr = config.lr
    steps = prob.step_sizes(lr)
    for it in range(1, config.iterations + 1):
        for i in rng.permutation(g.n):
            X[i] += steps[i] * prob.node_gradient(i, X)
        try:
            ll = prob.log_likelihood(X)
        except FloatingPointError as exc:
            raise FloatingPointError(f"{exc} at iteration {it}; try a smaller learning rate (e.g. {lr / 2:g})") from None
        if not np.all(np.isfinite(X)):
            raise FloatingPointError(f"embedding diverged at iteration {it}; try a smaller learning rate (e.g. {lr / 2:g})")
        trace.append(ll)
        if callback is not None:
            callback(it, X)
    logger.debug("csne fit: %d iterations, final log-likelihood %.6g", config.iterations, trace[-1])
    return Embedding(X, config.sigma1, config.sigma2, g.labels, trace)


def predict_logits(emb: Embedding, prior: MaxEntModel, pairs, tri=None):
    """Posterior log-odds of a positive sign for each pair."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    p = prior.probabilities(pairs, tri)
    d = np.linalg.norm(emb.X[pairs[:, 0]] - emb.X[pairs[:, 1]], axis=1)
    return posterior_logit(p, d, emb.sigma1, emb.sigma2)


def predict_pairs(emb: Embedding, prior: MaxEntModel, pairs, tri=None):
    """Posterior probability of a positive sign for each pair."""
    return expit(predict_logits(emb, prior, pairs, tri))


def predict(emb: Embedding, prior: MaxEntModel, i, j) -> float:
    if i == j:
        raise ValueError("predict needs two distinct nodes")
    if not (0 <= i < len(emb.X) and 0 <= j < len(emb.X)):
        raise KeyError(f"unknown node index in pair ({i}, {j})")
    return float(predict_pairs(emb, prior, [(i, j)])[0])
