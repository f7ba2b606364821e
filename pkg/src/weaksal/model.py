"""The latent-variable max-margin model.

The score of (image, existence label y, hidden region labels h) is a linear
function of a joint feature vector: a global block gated by y, a regional
block summing foreground/background transforms over h, two per-class prior
counters, and a smoothness term that charges label disagreement across
graph edges.  Maximizing over h is exact graph-cut inference; the training
loss folds into the unaries, so loss-augmented inference is the same cut.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateInput, DimensionMismatch, NonSubmodularError
from .features import N_REGIONAL
from .mrf import EnergyProblem, max_benefit_labeling


@dataclass
class ModelParams:
    """Weights of all factors, two classes each plus one shared smoothness
    weight.  `pairwise` must stay nonnegative for inference to be exact;
    training projects it after every step."""

    w_global: np.ndarray     # (2, E)
    w_regional: np.ndarray   # (2, 35)
    fg_prior: np.ndarray     # (2,)
    bg_prior: np.ndarray     # (2,)
    pairwise: float

    @property
    def global_dim(self):
        return self.w_global.shape[1]

    @property
    def n_params(self):
        return 2 * (self.global_dim + N_REGIONAL + 2) + 1

    @classmethod
    def zeros(cls, global_dim):
        return cls(w_global=np.zeros((2, global_dim)),
                   w_regional=np.zeros((2, N_REGIONAL)),
                   fg_prior=np.zeros(2), bg_prior=np.zeros(2), pairwise=0.0)

    def to_vector(self):
        return np.concatenate([
            self.w_global.ravel(), self.w_regional.ravel(),
            self.fg_prior, self.bg_prior, [self.pairwise]])

    @classmethod
    def from_vector(cls, vec, global_dim):
        vec = np.asarray(vec, dtype=np.float64)
        expected = 2 * (global_dim + N_REGIONAL + 2) + 1
        if len(vec) != expected:
            raise DimensionMismatch(f"expected {expected} parameters, got {len(vec)}")
        e = global_dim
        pos = 0
        w_global = vec[pos:pos + 2 * e].reshape(2, e).copy()
        pos += 2 * e
        w_regional = vec[pos:pos + 2 * N_REGIONAL].reshape(2, N_REGIONAL).copy()
        pos += 2 * N_REGIONAL
        fg = vec[pos:pos + 2].copy()
        bg = vec[pos + 2:pos + 4].copy()
        return cls(w_global=w_global, w_regional=w_regional, fg_prior=fg,
                   bg_prior=bg, pairwise=float(vec[-1]))


def joint_feature(feats, y, h):
    """Joint feature vector laid out exactly like ModelParams.to_vector().

    The class-y global slot receives the global descriptor; the class-y
    regional slot sums the foreground transform over h=1 regions and the
    background transform over h=0 regions; the class-y priors count those
    regions; the smoothness slot gets minus the total disagreement weight.
    """
    h = np.asarray(h, dtype=bool)
    n = feats.n_regions
    if len(h) != n:
        raise DimensionMismatch(f"labeling length {len(h)} for {n} regions")
    e = len(feats.global_desc)
    vec = np.zeros(2 * (e + N_REGIONAL + 2) + 1)
    vec[y * e:(y + 1) * e] = feats.global_desc
    reg = 2 * e + y * N_REGIONAL
    vec[reg:reg + N_REGIONAL] = (feats.regional.fg[h].sum(axis=0)
                                 + feats.regional.bg[~h].sum(axis=0))
    vec[2 * (e + N_REGIONAL) + y] = int(h.sum())
    vec[2 * (e + N_REGIONAL) + 2 + y] = int(n - h.sum())
    graph = feats.graph
    if len(graph.edges):
        cut = h[graph.edges[:, 0]] != h[graph.edges[:, 1]]
        vec[-1] = -float(np.sum(graph.weights[cut]))
    return vec


def score_labeling(w, feats, y, h):
    """Model score of (y, h), computed term by term (not via joint_feature)."""
    h = np.asarray(h, dtype=bool)
    n1 = int(h.sum())
    total = float(w.w_global[y] @ feats.global_desc)
    total += float(np.sum(feats.regional.fg[h] @ w.w_regional[y]))
    total += w.fg_prior[y] * n1
    total += float(np.sum(feats.regional.bg[~h] @ w.w_regional[y]))
    total += w.bg_prior[y] * (feats.n_regions - n1)
    graph = feats.graph
    if len(graph.edges):
        cut = h[graph.edges[:, 0]] != h[graph.edges[:, 1]]
        total -= w.pairwise * float(np.sum(graph.weights[cut]))
    return total


def _unaries(w, feats, y):
    u1 = feats.regional.fg @ w.w_regional[y] + w.fg_prior[y]
    u0 = feats.regional.bg @ w.w_regional[y] + w.bg_prior[y]
    return u0, u1


def infer_h(w, feats, y):
    """Best hidden labeling and score for a fixed existence label."""
    if w.pairwise < 0:
        raise NonSubmodularError("pairwise weight must be nonnegative")
    u0, u1 = _unaries(w, feats, y)
    prob = EnergyProblem(u0, u1, feats.graph.edges,
                         w.pairwise * feats.graph.weights)
    h, val = max_benefit_labeling(prob)
    return h, val + float(w.w_global[y] @ feats.global_desc)


def infer(w, feats):
    """Joint prediction: run the cut for both existence labels and keep the
    argmax; an exact tie resolves to no-existence (y = 0)."""
    h0, s0 = infer_h(w, feats, 0)
    h1, s1 = infer_h(w, feats, 1)
    if s1 > s0:
        return 1, h1, (s0, s1)
    return 0, h0, (s0, s1)


def labeling_loss(y_true, y, h, areas, is_border):
    """Training loss: 0/1 existence error plus an area-weighted penalty on
    hidden labels that contradict the supervision.

    For a background image every h=1 region is penalized; for a salient
    image only h=1 regions inside the border set are.  Both cases are
    normalized so the penalty lies in [0, 1], hence the total in [0, 2].
    """
    h = np.asarray(h, dtype=bool)
    areas = np.asarray(areas, dtype=np.float64)
    if y_true == 0:
        alpha = float(areas[h].sum() / areas.sum())
    else:
        z1 = areas[is_border].sum()
        if z1 <= 0:
            raise DegenerateInput("salient image with empty border set")
        alpha = float(areas[h & np.asarray(is_border, bool)].sum() / z1)
    return float(y_true != y) + alpha


def loss_augmented_infer(w, feats, y_true):
    """For each candidate y, the labeling maximizing score + loss.

    The area penalty is linear in h, so it folds into the label-1 unaries;
    the 0/1 term is a constant added to the value.  Returns
    ((h_0, value_0), (h_1, value_1)).
    """
    if w.pairwise < 0:
        raise NonSubmodularError("pairwise weight must be nonnegative")
    areas = np.asarray(feats.areas, dtype=np.float64)
    if y_true == 0:
        bonus = areas / areas.sum()
    else:
        z1 = areas[feats.is_border].sum()
        if z1 <= 0:
            raise DegenerateInput("salient image with empty border set")
        bonus = np.where(feats.is_border, areas / z1, 0.0)

    out = []
    pen = w.pairwise * feats.graph.weights
    for y in (0, 1):
        u0, u1 = _unaries(w, feats, y)
        prob = EnergyProblem(u0, u1 + bonus, feats.graph.edges, pen)
        h, val = max_benefit_labeling(prob)
        val += float(w.w_global[y] @ feats.global_desc) + float(y_true != y)
        out.append((h, val))
    return tuple(out)
