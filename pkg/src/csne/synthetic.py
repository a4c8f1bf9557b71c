"""Random signed graphs with planted structure, for tests and demos."""

from __future__ import annotations

import numpy as np

from .graph import SignedGraph, largest_connected_component


def random_signed_graph(n, p, rng, p_pos=0.5):
    """Erdos-Renyi graph with independent uniform signs."""
    rng = np.random.default_rng(rng)
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    edges = np.column_stack((iu[0][keep], iu[1][keep]))
    signs = np.where(rng.random(len(edges)) < p_pos, 1, -1)
    return SignedGraph(n, edges, signs)


def planted_factions(n=600, avg_degree=8.0, factions=(0.7, 0.3), noise=0.1,
                     disliked=0.1, exponent=2.5, seed=0):
    """Heavy-tailed signed graph with factions and node-level polarity.

    Edges follow a Chung-Lu model with Pareto weights. A pair inside one
    faction is positive and across factions negative, each flipped with
    probability ``noise``; edges touching a "disliked" node are negative
    with probability 0.7. Returns the largest connected component.
    """
    rng = np.random.default_rng(seed)
    w = rng.pareto(exponent - 1.0, size=n) + 1.0
    w *= avg_degree * n / (2.0 * w.sum())
    total = w.sum()
    group = rng.choice(len(factions), size=n, p=np.asarray(factions) / np.sum(factions))
    bad = rng.random(n) < disliked
    iu, ju = np.triu_indices(n, 1)
    prob = np.minimum(1.0, w[iu] * w[ju] / total)
    keep = rng.random(len(iu)) < prob
    i, j = iu[keep], ju[keep]
    sign = np.where(group[i] == group[j], 1, -1)
    flip = rng.random(len(i)) < noise
    sign = np.where(flip, -sign, sign)
    hate = (bad[i] | bad[j]) & (rng.random(len(i)) < 0.7)
    sign = np.where(hate, -1, sign)
    g = SignedGraph(n, np.column_stack((i, j)), sign, tuple(str(v) for v in range(n)))
    return largest_connected_component(g)
