"""Training: regularized risk minimization for the latent model and the
plain linear existence baseline.

Both models expose the objective only through (value, subgradient) pairs,
so one optimizer core serves them: either plain subgradient descent with a
1/(lambda*t) schedule, or a proximal bundle method that accumulates cutting
planes of the risk term and minimizes the exactly-kept quadratic plus the
piecewise-linear lower model each round.  The latent risk is non-convex (a
max sits inside the hinge), so the best-observed iterate is returned rather
than the last one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix as cvx_matrix
from cvxopt import solvers as cvx_solvers

from .exceptions import DimensionMismatch
from .model import ModelParams, infer_h, joint_feature, loss_augmented_infer

_QP_OPTIONS = {"show_progress": False}


@dataclass
class TrainConfig:
    lam: float = 1e-2
    max_iters: int = 200
    tol: float = 1e-4
    optimizer: str = "bundle"
    seed: int = 0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.optimizer not in ("bundle", "subgradient"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainTrace:
    objective: list = field(default_factory=list)
    risk: list = field(default_factory=list)
    norm_w: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def append(self, objective, risk, norm_w, seconds):
        self.objective.append(float(objective))
        self.risk.append(float(risk))
        self.norm_w.append(float(norm_w))
        self.seconds.append(float(seconds))

    def __len__(self):
        return len(self.objective)

    def to_csv(self):
        lines = ["iter,objective,risk,norm_w,seconds"]
        for i in range(len(self.objective)):
            lines.append(f"{i},{self.objective[i]!r},{self.risk[i]!r},"
                         f"{self.norm_w[i]!r},{self.seconds[i]:.3f}")
        return "\n".join(lines) + "\n"


def objective_and_subgradient(w, instances, labels, lam):
    """Regularized risk and its subgradient over a batch.

    Per sample, the hinge risk is the loss-augmented best score over
    (y, h) minus the best score at the true label; its subgradient is the
    joint-feature difference of the two maximizers.  Samples accumulate in
    list order so results are reproducible.
    """
    if len(instances) == 0:
        raise ValueError("empty batch")
    if len(instances) != len(labels):
        raise DimensionMismatch("instance/label count mismatch")
    w_vec = w.to_vector()
    grad = lam * w_vec
    total_risk = 0.0
    m = len(instances)
    for feats, y_true in zip(instances, labels):
        y_true = int(y_true)
        augmented = loss_augmented_infer(w, feats, y_true)
        y_star = 1 if augmented[1][1] > augmented[0][1] else 0
        h_star, aug_value = augmented[y_star]
        h_fit, fit_score = infer_h(w, feats, y_true)
        total_risk += aug_value - fit_score
        grad += (joint_feature(feats, y_star, h_star)
                 - joint_feature(feats, y_true, h_fit)) / m
    risk = total_risk / m
    objective = 0.5 * lam * float(w_vec @ w_vec) + risk
    return objective, grad, risk


def _project_pairwise(vec):
    if vec[-1] < 0:
        vec = vec.copy()
        vec[-1] = 0.0
    return vec


def _identity(vec):
    return vec


def minimize(fun, dim, cfg, project=_identity):
    """Driver shared by both training paths.

    `fun` maps a parameter vector to (objective, subgradient, risk).
    Returns (best_w, trace); the best iterate is the one with the lowest
    observed objective.
    """
    if cfg.optimizer == "subgradient":
        return _subgradient(fun, dim, cfg, project)
    return _bundle(fun, dim, cfg, project)


def _subgradient(fun, dim, cfg, project):
    start = time.perf_counter()
    trace = TrainTrace()
    w = np.zeros(dim)
    best_val, best_w = np.inf, w.copy()
    for t in range(1, cfg.max_iters + 1):
        val, grad, risk = fun(w)
        if val < best_val:
            best_val, best_w = val, w.copy()
        trace.append(val, risk, np.linalg.norm(w), time.perf_counter() - start)
        w = project(w - grad / (cfg.lam * t))
    return best_w, trace


def _bundle(fun, dim, cfg, project):
    start = time.perf_counter()
    trace = TrainTrace()
    trace.iterates = []                  # diagnostics for invariant checks
    w = np.zeros(dim)
    best_val, best_w = np.inf, w.copy()
    # planes (a_i, b_i) lower-bound the risk term; the zero plane encodes
    # risk >= 0, and the quadratic lam/2 ||w||^2 is kept exact
    offsets = [0.0]
    slopes = np.zeros((1, dim))
    gram = np.zeros((1, 1))
    for _ in range(cfg.max_iters):
        val, grad, risk = fun(w)
        if val < best_val:
            best_val, best_w = val, w.copy()
        trace.append(val, risk, np.linalg.norm(w), time.perf_counter() - start)
        trace.iterates.append(w.copy())
        slope = grad - cfg.lam * w
        offsets.append(risk - float(slope @ w))
        cross = slopes @ slope
        slopes = np.vstack([slopes, slope])
        k = len(offsets)
        new_gram = np.empty((k, k))
        new_gram[:k - 1, :k - 1] = gram
        new_gram[:k - 1, -1] = cross
        new_gram[-1, :k - 1] = cross
        new_gram[-1, -1] = float(slope @ slope)
        gram = new_gram

        w, model_min = _bundle_step(offsets, slopes, gram, cfg.lam)
        w = project(w)
        gap = best_val - model_min
        if gap <= cfg.tol * max(1.0, abs(best_val)):
            break
    trace.plane_offsets = offsets
    trace.plane_slopes = slopes
    return best_w, trace


def _bundle_step(offsets, slopes, gram, lam):
    """Minimize lam/2 ||w||^2 + max_i (a_i + <b_i, w>) through its dual:
    a simplex-constrained QP over plane weights."""
    k = len(offsets)
    a = np.asarray(offsets)
    p = cvx_matrix(gram / lam + 1e-12 * np.eye(k))
    q = cvx_matrix(-a)
    g = cvx_matrix(-np.eye(k))
    h = cvx_matrix(np.zeros(k))
    eq_a = cvx_matrix(np.ones((1, k)))
    eq_b = cvx_matrix(np.ones(1))
    sol = cvx_solvers.qp(p, q, g, h, eq_a, eq_b, options=_QP_OPTIONS)
    alpha = np.asarray(sol["x"]).ravel()
    w = -(slopes.T @ alpha) / lam
    model_min = float(a @ alpha) - 0.5 * lam * float(w @ w)
    return w, model_min


def evaluate_bundle_model(offsets, slopes, lam, w):
    """Value of the piecewise lower model at w (used by invariant tests)."""
    return (0.5 * lam * float(w @ w)
            + max(a + float(b @ w) for a, b in zip(offsets, slopes)))


def train(instances, labels, cfg=None):
    """Fit the latent model on (features, existence label) pairs.

    Requires both classes in the batch.  The smoothness weight is projected
    to stay nonnegative after every optimizer step, keeping inference
    exact.  Returns (ModelParams, TrainTrace).
    """
    cfg = cfg or TrainConfig()
    labels = [int(y) for y in labels]
    if len(instances) == 0:
        raise ValueError("empty training set")
    if len(set(labels)) < 2:
        raise ValueError("training set must contain both classes")
    e_dim = len(instances[0].global_desc)
    for feats in instances:
        if len(feats.global_desc) != e_dim:
            raise DimensionMismatch("inconsistent global descriptor lengths")

    def fun(vec):
        w = ModelParams.from_vector(vec, e_dim)
        return objective_and_subgradient(w, instances, labels, cfg.lam)

    dim = ModelParams.zeros(e_dim).n_params
    best, trace = minimize(fun, dim, cfg, project=_project_pairwise)
    return ModelParams.from_vector(best, e_dim), trace


def train_linear_svm(features, labels, cfg=None):
    """Plain hinge-loss linear classifier on the global descriptor.

    Same optimizer machinery, no latent block.  Returns (weights, bias);
    the prediction is 1 when <weights, x> + bias > 0.
    """
    cfg = cfg or TrainConfig()
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if x.ndim != 2 or len(x) != len(y):
        raise DimensionMismatch("features must be (M, E) with matching labels")
    if len(np.unique(y)) < 2:
        raise ValueError("training set must contain both classes")
    signs = np.where(y > 0, 1.0, -1.0)
    augmented = np.hstack([x, np.ones((len(x), 1))])

    def fun(vec):
        margins = signs * (augmented @ vec)
        active = margins < 1.0
        risk = float(np.mean(np.maximum(0.0, 1.0 - margins)))
        grad = cfg.lam * vec - (signs[active, None]
                                * augmented[active]).sum(axis=0) / len(y)
        objective = 0.5 * cfg.lam * float(vec @ vec) + risk
        return objective, grad, risk

    best, _ = minimize(fun, augmented.shape[1], cfg)
    return best[:-1], float(best[-1])


def linear_svm_predict(weights, bias, features):
    """Existence labels from the linear baseline."""
    scores = np.asarray(features, dtype=np.float64) @ weights + bias
    return (scores > 0).astype(np.int64)
