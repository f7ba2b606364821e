"""Scikit-learn style wrappers so the pipeline composes with the wider
ecosystem: a stateless feature extractor, the chi-square kernel map
transformer, the latent detector/classifier, and the linear baseline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .config import Config
from .diffusion import diffuse
from .exceptions import DimensionMismatch
from .features import chi2_map, extract_features
from .learn import TrainConfig, train, train_linear_svm
from .model import infer


class SaliencyFeatureExtractor(BaseEstimator, TransformerMixin):
    """Images in, per-image feature records out.  Stateless; `fit` only
    exists for pipeline compatibility."""

    def __init__(self, config=None):
        self.config = config

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        """X: iterable of RGB float images or paths.  Returns a list of
        ImageFeatures (chi-square mapping is a separate transformer)."""
        from .imaging import load_image

        cfg = self.config or Config()
        out = []
        for item in X:
            img = item if isinstance(item, np.ndarray) else load_image(item)
            feats, _ = extract_features(img, cfg)
            out.append(feats)
        return out


class Chi2KernelMap(BaseEstimator, TransformerMixin):
    """Explicit additive chi-square kernel expansion of feature rows.

    `fit` records per-dimension minima so arbitrary real inputs can be
    shifted into the nonnegative orthant; values below the training minimum
    clip to zero at transform time.
    """

    def __init__(self, order=2, period=0.6):
        self.order = order
        self.period = period

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionMismatch("expected a 2-D feature matrix")
        self.shift_ = np.minimum(X.min(axis=0), 0.0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        if not hasattr(self, "shift_"):
            raise NotFittedError("Chi2KernelMap must be fitted first")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(f"expected (M, {self.n_features_in_}) input")
        shifted = np.maximum(X - self.shift_, 0.0)
        return np.stack([chi2_map(row, order=self.order, period=self.period)
                         for row in shifted])


class LatentSaliencyClassifier(BaseEstimator, ClassifierMixin):
    """Joint existence prediction and latent region saliency.

    fit consumes a list of ImageFeatures plus 0/1 existence labels; predict
    returns existence labels; predict_region_saliency returns the diffused
    per-region scores of each instance.
    """

    def __init__(self, lam=1e-2, max_iters=200, tol=1e-4, optimizer="bundle",
                 gamma=10.0):
        self.lam = lam
        self.max_iters = max_iters
        self.tol = tol
        self.optimizer = optimizer
        self.gamma = gamma

    def fit(self, X, y):
        cfg = TrainConfig(lam=self.lam, max_iters=self.max_iters, tol=self.tol,
                          optimizer=self.optimizer)
        self.params_, self.trace_ = train(list(X), list(y), cfg)
        self.classes_ = np.array([0, 1])
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("LatentSaliencyClassifier must be fitted first")

    def predict(self, X):
        self._check_fitted()
        return np.array([infer(self.params_, feats)[0] for feats in X])

    def decision_function(self, X):
        self._check_fitted()
        out = []
        for feats in X:
            _, _, (s0, s1) = infer(self.params_, feats)
            out.append(s1 - s0)
        return np.array(out)

    def predict_region_saliency(self, X, force_black_on_background=False):
        self._check_fitted()
        out = []
        for feats in X:
            y_star, h_star, _ = infer(self.params_, feats)
            if force_black_on_background and y_star == 0:
                out.append(np.zeros(feats.n_regions))
            else:
                out.append(diffuse(h_star, feats.graph, gamma=self.gamma))
        return out


class LinearExistenceSVM(BaseEstimator, ClassifierMixin):
    """Hinge-loss linear classifier on the global descriptor (the baseline
    the latent model is compared against)."""

    def __init__(self, lam=1e-2, max_iters=200, tol=1e-4, optimizer="bundle"):
        self.lam = lam
        self.max_iters = max_iters
        self.tol = tol
        self.optimizer = optimizer

    def fit(self, X, y):
        cfg = TrainConfig(lam=self.lam, max_iters=self.max_iters, tol=self.tol,
                          optimizer=self.optimizer)
        self.coef_, self.intercept_ = train_linear_svm(X, y, cfg)
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        if not hasattr(self, "coef_"):
            raise NotFittedError("LinearExistenceSVM must be fitted first")
        return np.asarray(X, dtype=np.float64) @ self.coef_ + self.intercept_

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.int64)
