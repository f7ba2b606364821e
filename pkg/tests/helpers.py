"""Shared builders for randomized test instances."""

import numpy as np

from weaksal.features import ImageFeatures, RegionSaliency
from weaksal.mrf import RegionGraph
from weaksal.model import ModelParams

E_DIM = 6  # small global descriptor for unit tests; model code is size-agnostic


def random_graph(rng, n, extra_edge_prob=0.2):
    """Connected random region graph (a tree plus extra edges)."""
    edges, weights = [], []
    for j in range(1, n):
        edges.append((int(rng.integers(j)), j))
        weights.append(float(rng.uniform(0.05, 1.0)))
    for j in range(n):
        for k in range(j + 1, n):
            if (j, k) not in edges and rng.random() < extra_edge_prob:
                edges.append((j, k))
                weights.append(float(rng.uniform(0.05, 1.0)))
    if not edges:
        return RegionGraph(n, np.empty((0, 2), dtype=np.intp), np.empty(0))
    order = np.lexsort((np.array(edges)[:, 1], np.array(edges)[:, 0]))
    return RegionGraph(n, np.array(edges, dtype=np.intp)[order],
                       np.array(weights)[order])


def random_features(rng, n, e_dim=E_DIM):
    sal = rng.random((n, 35))
    regional = RegionSaliency(sal=sal, fg=rng.normal(size=(n, 35)),
                              bg=rng.normal(size=(n, 35)))
    is_border = np.zeros(n, dtype=bool)
    is_border[rng.choice(n, size=max(1, n // 3), replace=False)] = True
    return ImageFeatures(regional=regional, global_desc=rng.normal(size=e_dim),
                         areas=rng.integers(1, 50, size=n),
                         is_border=is_border, graph=random_graph(rng, n))


def random_params(rng, e_dim=E_DIM):
    return ModelParams(w_global=rng.normal(size=(2, e_dim)),
                       w_regional=rng.normal(size=(2, 35)),
                       fg_prior=rng.normal(size=2), bg_prior=rng.normal(size=2),
                       pairwise=float(rng.uniform(0, 1.5)))


def termwise_reference_score(w, feats, y, h):
    """Literal four-term expansion of the joint score, evaluated with loops."""
    total = 0.0
    for a in (0, 1):
        if y == a:
            total += float(np.dot(w.w_global[a], feats.global_desc))
    for a in (0, 1):
        if y != a:
            continue
        for j in range(feats.n_regions):
            if h[j] == 1:
                total += float(np.dot(w.w_regional[a], feats.regional.fg[j]))
                total += w.fg_prior[a]
            else:
                total += float(np.dot(w.w_regional[a], feats.regional.bg[j]))
                total += w.bg_prior[a]
    for (j, k), v in zip(feats.graph.edges, feats.graph.weights):
        if h[j] != h[k]:
            total -= w.pairwise * v
    return total


def toy_training_set(rng, n_samples=8, n_regions=3, gap=2.0, e_dim=E_DIM):
    """Cleanly separable instances: the global descriptor carries the class."""
    instances, labels = [], []
    for i in range(n_samples):
        y = i % 2
        feats = random_features(rng, n_regions, e_dim=e_dim)
        feats.global_desc = (rng.normal(scale=0.1, size=e_dim)
                             + (gap if y else -gap) * np.ones(e_dim))
        instances.append(feats)
        labels.append(y)
    return instances, labels
