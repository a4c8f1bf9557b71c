"""Maximum-entropy prior over edge signs.

The MaxEnt distribution constrained on node polarities and signed triangle
statistics factorizes into one Bernoulli per node pair whose log-odds are a
linear function of the pair's features::

    s_ij = lam_i + lam_j + f_pp * lam_pp + f_pm * lam_pm + f_mm * lam_mm

The multipliers minimize the convex dual

    L(lam) = sum_e log(1 + exp(s_e)) - sum_k t_k lam_k

where t_k are the targets on the {0, 1} recoding b = (a + 1) / 2 of the
observed signs. This is exactly a logistic-regression likelihood, fitted here
with damped Newton steps on a sparse Hessian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize
from scipy.special import expit

from .features import StatisticSet, observed_statistics, pair_features
from .graph import SignedGraph

logger = logging.getLogger(__name__)


@dataclass
class MaxEntConfig:
    use_triangles: bool = True
    max_iter: int = 20
    tol: float = 1e-6
    l2: float = 0.0

    def __post_init__(self):
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


@dataclass
class FitInfo:
    iterations: int = 0
    grad_norm: float = float("nan")
    dual_value: float = float("nan")
    converged: bool = False
    solver: str = "newton"
    grad_history: list = field(default_factory=list)


# reported probabilities stay this far from 0 and 1 even for diverged multipliers
PROB_EPS = 1e-12


def _bounded(p):
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def logistic(s):
    """Numerically stable logistic function."""
    return expit(s)


def feature_matrix(g: SignedGraph, tri=None):
    """Sparse (m, n [+ 3]) design matrix of the training edges.

    Each row has ones at both endpoints; triangle feature columns follow when
    ``tri`` (edge-aligned wedge counts) is given.
    """
    m = g.m
    rows = np.repeat(np.arange(m), 2)
    cols = g.edges.ravel()
    vals = np.ones(2 * m)
    ncol = g.n
    if tri is not None:
        rows = np.concatenate((rows, np.repeat(np.arange(m), 3)))
        cols = np.concatenate((cols, np.tile(np.arange(g.n, g.n + 3), m)))
        vals = np.concatenate((vals, np.asarray(tri, dtype=np.float64).ravel()))
        ncol += 3
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, ncol))


@dataclass
class MaxEntModel:
    """Fitted multipliers plus the training graph they refer to."""

    lambda_node: np.ndarray
    lambda_tri: np.ndarray
    use_triangles: bool
    graph: SignedGraph
    stats: StatisticSet
    edge_tri: np.ndarray | None = None
    info: FitInfo = field(default_factory=FitInfo)
    l2: float = 0.0

    @property
    def lambda_pp(self):
        return float(self.lambda_tri[0])

    @property
    def lambda_pm(self):
        return float(self.lambda_tri[1])

    @property
    def lambda_mm(self):
        return float(self.lambda_tri[2])

    @property
    def params(self):
        if self.use_triangles:
            return np.concatenate((self.lambda_node, self.lambda_tri))
        return self.lambda_node.copy()

    def features(self, pairs):
        """Wedge features of ``pairs`` against the training graph."""
        return pair_features(self.graph, pairs)

    def scores(self, pairs, tri=None):
        """Log-odds of a positive sign for each pair in ``pairs``."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        s = self.lambda_node[pairs[:, 0]] + self.lambda_node[pairs[:, 1]]
        if self.use_triangles:
            if tri is None:
                tri = self.features(pairs)
            s = s + np.asarray(tri, dtype=np.float64) @ self.lambda_tri
        return s

    def probabilities(self, pairs, tri=None):
        return _bounded(logistic(self.scores(pairs, tri)))

    def edge_scores(self):
        return self.scores(self.graph.edges, self.edge_tri)

    def edge_probabilities(self):
        return _bounded(logistic(self.edge_scores()))


def score(model: MaxEntModel, i, j, features=None) -> float:
    """Linear predictor of pair {i, j}; ``features`` is an optional (f_pp, f_pm, f_mm)."""
    if i == j:
        raise ValueError("score needs two distinct nodes")
    s = model.lambda_node[i] + model.lambda_node[j]
    if model.use_triangles:
        if features is None:
            features = model.features([(i, j)])[0]
        s += float(np.dot([features[0], features[1], features[2]], model.lambda_tri))
    return float(s)


def prior_probability(model: MaxEntModel, i, j, features=None) -> float:
    return float(_bounded(logistic(score(model, i, j, features))))


def _dual(F, theta, target, l2):
    s = F @ theta
    return float(np.sum(np.logaddexp(0.0, s)) - target @ theta + 0.5 * l2 * theta @ theta), s


def dual_value(model: MaxEntModel) -> float:
    """Regularized dual objective at the model's multipliers."""
    F, target = _design(model.graph, model.stats, model.edge_tri)
    return _dual(F, model.params, target, model.l2)[0]


def dual(theta, g: SignedGraph, stats: StatisticSet, l2=0.0, tri=None):
    """Dual value and gradient at ``theta`` (node multipliers, then triangle ones)."""
    if stats.use_triangles and tri is None:
        tri = pair_features(g, g.edges)
    F, target = _design(g, stats, tri)
    theta = np.asarray(theta, dtype=np.float64)
    value, s = _dual(F, theta, target, l2)
    return value, F.T @ logistic(s) - target + l2 * theta


def _design(g, stats, tri):
    F = feature_matrix(g, tri if stats.use_triangles else None)
    colsum = np.asarray(F.sum(axis=0)).ravel()
    # {0,1} recoding of the {-1,+1} targets: sum_e f_e (a_e + 1) / 2
    target = 0.5 * (stats.vector + colsum)
    return F, target


def fit(g: SignedGraph, stats: StatisticSet | None = None, config: MaxEntConfig | None = None,
        callback=None, **kwargs) -> MaxEntModel:
    """Fit the MaxEnt multipliers by damped Newton on the dual.

    Nodes whose training edges all share one sign have no finite optimum;
    their multipliers drift off linearly under plain Newton. After a full
    step, coordinates that are saturated or repeat their previous move are
    pushed further while the dual keeps dropping, which brings the gradient
    below ``tol`` well inside the default 20 iterations.

    Parameters
    ----------
    g : SignedGraph
        Training graph; only its edges enter the objective.
    stats : StatisticSet, optional
        Constraint targets. Computed from ``g`` when omitted.
    config : MaxEntConfig, optional
        Keyword arguments override individual config fields.
    callback : callable, optional
        Called as ``callback(iteration, model)`` after every Newton step.
    """
    config = config or MaxEntConfig()
    if kwargs:
        config = MaxEntConfig(**{**config.__dict__, **kwargs})
    if g.m == 0:
        raise ValueError("cannot fit a prior on a graph without edges")
    tri = pair_features(g, g.edges) if config.use_triangles else None
    if stats is None:
        stats = observed_statistics(g, config.use_triangles, features=tri)
    if stats.use_triangles != config.use_triangles:
        raise ValueError("statistic set and config disagree on triangle use")

    F, target = _design(g, stats, tri)
    k = F.shape[1]
    theta = np.zeros(k)
    l2 = config.l2
    info = FitInfo()
    model = MaxEntModel(theta[:g.n], np.zeros(3), config.use_triangles, g, stats, tri, info, l2)

    def sync(t):
        model.lambda_node = t[:g.n].copy()
        if config.use_triangles:
            model.lambda_tri = t[g.n:].copy()

    value, s = _dual(F, theta, target, l2)
    prev_step = None
    for it in range(config.max_iter + 1):
        p = logistic(s)
        grad = F.T @ p - target + l2 * theta
        gnorm = float(np.max(np.abs(grad)))
        info.grad_history.append(gnorm)
        info.grad_norm, info.dual_value, info.iterations = gnorm, value, it
        if gnorm <= config.tol:
            info.converged = True
            break
        if it == config.max_iter:
            break
        w = p * (1.0 - p)
        step = _newton_direction(F, w, grad, l2)
        if step is None or not np.all(np.isfinite(step)) or step @ grad >= 0:
            logger.info("Newton solve unusable at iteration %d, switching to L-BFGS", it)
            theta, value, used = _lbfgs(F, theta, target, l2, config, config.max_iter - it)
            s = F @ theta
            info.solver = "newton+lbfgs"
            p = logistic(s)
            grad = F.T @ p - target + l2 * theta
            info.grad_norm = float(np.max(np.abs(grad)))
            info.grad_history.append(info.grad_norm)
            info.iterations = it + used
            info.dual_value = value
            info.converged = info.grad_norm <= config.tol
            break
        t = 1.0
        slope = float(step @ grad)
        while True:
            cand = theta + t * step
            new_value, new_s = _dual(F, cand, target, l2)
            if not np.isfinite(new_value):
                raise FloatingPointError(f"non-finite dual value at iteration {it + 1}")
            if new_value <= value + 1e-4 * t * slope or t < 1e-10:
                break
            # near the optimum the predicted decrease drops below roundoff in the dual value
            if new_value - value <= 1e-12 * max(1.0, abs(value)):
                new_grad = F.T @ logistic(new_s) - target + l2 * cand
                if np.max(np.abs(new_grad)) < gnorm:
                    break
            t *= 0.5
        if t == 1.0:
            mask = _saturated(F, w)
            if prev_step is not None:
                # coordinates repeating last step are sliding along a recession direction;
                # ones that reversed are oscillating and must not be pushed
                mask = (mask | _repeating(step, prev_step)) & (step * prev_step >= 0)
            cand, new_value, new_s = _stretch(F, cand, step, mask, target, l2, new_value, new_s)
        prev_step = t * step
        theta, value, s = cand, new_value, new_s
        sync(theta)
        if callback is not None:
            callback(it + 1, model)
    sync(theta)
    logger.debug("maxent fit: %d iterations, |grad|=%.3g, dual=%.6g", info.iterations, info.grad_norm, info.dual_value)
    return model


def _saturated(F, w, cutoff=1e-3):
    """Coordinates all of whose edges have curvature p(1-p) below ``cutoff``."""
    A = abs(F).tocsc()
    peak = np.asarray(A.multiply(w[:, None]).max(axis=0).todense()).ravel()
    return (A.getnnz(axis=0) > 0) & (peak < cutoff)


def _repeating(step, prev, lo=0.5, hi=2.0):
    """Components with the same sign and a comparable size as in the previous step."""
    with np.errstate(divide="ignore", invalid="ignore"):
        r = step / prev
    return (r >= lo) & (r <= hi)


def _stretch(F, theta, step, mask, target, l2, value, s, max_factor=64):
    """Extra move along (part of) an accepted full Newton step.

    Separated multipliers diverge, and a Newton step only advances them by
    about one unit. The masked part of ``step`` is added again with doubling
    length while the dual keeps dropping.
    """
    d = np.where(mask, step, 0.0)
    if not d.any():
        return theta, value, s
    best = (theta, value, s)
    a = 1.0
    while a <= max_factor:
        cand = theta + a * d
        v, cand_s = _dual(F, cand, target, l2)
        if not v < best[1]:
            break
        best = (cand, v, cand_s)
        a *= 2
    return best


def _newton_direction(F, w, grad, l2):
    """Solve (F' W F + l2 I) step = -grad by Jacobi-preconditioned CG.

    Returns None when CG fails to reach its tolerance.
    """
    k = F.shape[1]
    H = (F.T @ sp.diags(w) @ F).tocsr()
    diag = H.diagonal()
    # tiny ridge keeps the system definite on bipartite components and zero-weight coordinates
    mu = 1e-10 * max(1.0, float(diag.max())) + l2
    if mu > 0:
        H = H + sp.identity(k, format="csr") * mu
        diag = diag + mu
    precond = sp.diags(1.0 / np.maximum(diag, 1e-300))
    gnorm = float(np.linalg.norm(grad))
    rtol = min(1e-2, max(1e-10, 0.1 * gnorm))
    step, status = spla.cg(H, -grad, rtol=rtol, atol=0.0, maxiter=max(100, 10 * k), M=precond)
    return step if status == 0 else None


def _lbfgs(F, theta, target, l2, config, budget):
    def fun(t):
        v, s = _dual(F, t, target, l2)
        return v, F.T @ logistic(s) - target + l2 * t

    res = minimize(fun, theta, jac=True, method="L-BFGS-B",
                   options={"maxiter": max(budget, 1), "gtol": config.tol})
    if not np.isfinite(res.fun):
        raise FloatingPointError("non-finite dual value in L-BFGS fallback")
    return res.x, float(res.fun), int(res.nit)


def constraint_residuals(model: MaxEntModel, g: SignedGraph | None = None, stats: StatisticSet | None = None):
    """Expected minus observed statistics on the {-1, +1} scale.

    One entry per node, then (pp, pm, mm) when triangles are used.
    """
    g = g if g is not None else model.graph
    stats = stats if stats is not None else model.stats
    tri = model.edge_tri if g is model.graph else (pair_features(g, g.edges) if model.use_triangles else None)
    F = feature_matrix(g, tri if model.use_triangles else None)
    p = logistic(model.scores(g.edges, tri))
    return F.T @ (2.0 * p - 1.0) - stats.vector


def save_model(model: MaxEntModel, fh, header_extra=""):
    g = model.graph
    fh.write(f"# maxent triangles={int(model.use_triangles)} l2={float(model.l2)!r} "
             f"iterations={model.info.iterations} grad_norm={float(model.info.grad_norm)!r}{header_extra}\n")
    for lab, lam in zip(g.labels, model.lambda_node):
        fh.write(f"{lab}\t{float(lam)!r}\n")
    for name, v in zip(("lambda_pp", "lambda_pm", "lambda_mm"), model.lambda_tri):
        fh.write(f"{name}\t{float(v)!r}\n")


def load_model(fh, graph: SignedGraph) -> MaxEntModel:
    """Read multipliers written by :func:`save_model` for the given training graph."""
    header = fh.readline()
    if not header.startswith("# maxent"):
        raise ValueError("not a maxent model file")
    opts = dict(tok.split("=", 1) for tok in header[2:].split()[1:] if "=" in tok)
    use_tri = opts.get("triangles", "0") == "1"
    lam = np.zeros(graph.n)
    tri = np.zeros(3)
    names = {"lambda_pp": 0, "lambda_pm": 1, "lambda_mm": 2}
    for lineno, line in enumerate(fh, start=2):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected label<TAB>value")
        key, val = parts
        if key in names:
            tri[names[key]] = float(val)
        else:
            lam[graph.node(key)] = float(val)
    stats = observed_statistics(graph, use_tri)
    edge_tri = pair_features(graph, graph.edges) if use_tri else None
    return MaxEntModel(lam, tri, use_tri, graph, stats, edge_tri, FitInfo(), float(opts.get("l2", 0.0)))
