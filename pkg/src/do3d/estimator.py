"""scikit-learn style wrapper around :func:`do3d.optim.fit_staged`."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import ContractError
from .loss import LossWeights
from .optim import DEFAULT_ITERATIONS, LR_GEOMETRY, LR_MOTION, default_schedule, fit_staged, \
    reconstruct

__all__ = ["DecomposedSceneFitter"]


def _check_pair(pair):
    for attr in ("K", "image_t", "image_s", "instances"):
        if not hasattr(pair, attr):
            raise ContractError(f"expected a rendered pair, missing {attr!r}")
    return pair


class DecomposedSceneFitter(BaseEstimator):
    """Fit depth, ego-motion and object motion to one frame pair.

    ``fit`` takes a rendered (or loaded) pair; only images and masks are
    used.  ``predict`` returns the fitted depth map and ``transform`` the
    synthesized target frame.
    """

    def __init__(self, iterations=DEFAULT_ITERATIONS, lr_geometry=LR_GEOMETRY,
                 lr_motion=LR_MOTION, w_ph=1.0, w_ds=0.001, w_m=1.0, alpha=0.85,
                 init_depth=10.0, lambda_def=0.0, stages=(1, 2, 3, 4), filter_margin=0.0):
        self.iterations = iterations
        self.lr_geometry = lr_geometry
        self.lr_motion = lr_motion
        self.w_ph = w_ph
        self.w_ds = w_ds
        self.w_m = w_m
        self.alpha = alpha
        self.init_depth = init_depth
        self.lambda_def = lambda_def
        self.stages = stages
        self.filter_margin = filter_margin

    def _weights(self):
        return LossWeights(self.w_ph, self.w_ds, self.w_m, self.alpha)

    def fit(self, X, y=None):
        pair = _check_pair(X)
        if len(self.iterations) != 4:
            raise ContractError("iterations needs one entry per stage")
        sched = default_schedule(self.iterations, self.lr_geometry, self.lr_motion)
        self.state_, self.history_, self.report_ = fit_staged(
            pair, sched, self._weights(), init_depth=self.init_depth,
            stages=tuple(self.stages), lambda_def=self.lambda_def,
            filter_margin=self.filter_margin)
        self.n_features_in_ = int(np.prod(pair.image_t.shape[:2]))
        return self

    def predict(self, X=None):
        check_is_fitted(self, "state_")
        return self.state_.depth

    def transform(self, X):
        check_is_fitted(self, "state_")
        pair = _check_pair(X)
        image, _ = reconstruct(self.state_, pair, "def")
        return image

    def score(self, X, y=None):
        """Negative photometric loss of the synthesized target frame."""
        from .loss import photometric_loss
        pair = _check_pair(X)
        image, valid = reconstruct(self.state_, pair, "def")
        return -photometric_loss(image, pair.image_t, valid, self.alpha)
