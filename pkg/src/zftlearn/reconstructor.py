"""Scikit-learn style estimator around the diffusion reconstructor.

``SZFTReconstructor`` exposes the train/reconstruct pipeline through the
fit/transform protocol so it composes with sklearn tooling (pipelines,
cloning, grid search over the architecture and schedule hyperparameters).

Sample layout: one row per window.  ``X`` flattens per-token
``[p(3), q(4), wrench(6)]`` blocks to ``tokens * 13`` features; the fit
target ``y`` flattens per-token equilibrium poses ``[p0(3), q0(4)]`` to
``tokens * 7``.  ``transform`` (alias ``predict``) returns reconstructed
equilibrium poses in the ``y`` layout.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dataio import WindowSet
from .denoiser import DenoiserConfig, TrainConfig, reconstruct_szft, train
from .errors import ShapeError


def _split_windows(X: np.ndarray, tokens: int):
    if X.shape[1] != tokens * 13:
        raise ShapeError(
            f"X has {X.shape[1]} features, expected tokens*13 = {tokens * 13}"
        )
    blocks = X.reshape(X.shape[0], tokens, 13)
    return blocks[:, :, 0:3], blocks[:, :, 3:7], blocks[:, :, 7:13]


def _split_targets(y: np.ndarray, tokens: int):
    if y.shape[1] != tokens * 7:
        raise ShapeError(
            f"y has {y.shape[1]} features, expected tokens*7 = {tokens * 7}"
        )
    blocks = y.reshape(y.shape[0], tokens, 7)
    return blocks[:, :, 0:3], blocks[:, :, 3:7]


def _check_unit_quats(q: np.ndarray, name: str, atol: float = 1e-6):
    norms = np.linalg.norm(q, axis=-1)
    worst = float(np.max(np.abs(norms - 1.0)))
    if worst > atol:
        raise ValueError(
            f"{name} contains non-unit quaternions (max |norm-1| = {worst:.3g})"
        )


class SZFTReconstructor(BaseEstimator, TransformerMixin):
    """Diffusion-based equilibrium-trajectory reconstructor.

    Parameters mirror the denoiser and training configuration; all are
    plain constructor attributes so ``get_params``/``set_params``/``clone``
    behave as sklearn expects.
    """

    def __init__(self, hidden=64, heads=4, layers=2, tokens=16, steps=50,
                 schedule_kind="cosine", beta_min=1e-4, beta_max=0.3,
                 theta_weight=5.0, sigma_gauss=0.0005, dt=0.005,
                 lr=1e-4, batch_size=64, epochs=30, val_fraction=0.15,
                 inference_steps=None, seed=0):
        self.hidden = hidden
        self.heads = heads
        self.layers = layers
        self.tokens = tokens
        self.steps = steps
        self.schedule_kind = schedule_kind
        self.beta_min = beta_min
        self.beta_max = beta_max
        self.theta_weight = theta_weight
        self.sigma_gauss = sigma_gauss
        self.dt = dt
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.val_fraction = val_fraction
        self.inference_steps = inference_steps
        self.seed = seed

    def _validate_X(self, X):
        X = check_array(X, dtype=np.float64)
        obs_p, obs_q, wrench = _split_windows(X, self.tokens)
        _check_unit_quats(obs_q, "X observed quaternions")
        return obs_p, obs_q, wrench

    def fit(self, X, y):
        """Train on windows X with equilibrium-pose targets y."""
        obs_p, obs_q, wrench = self._validate_X(X)
        y = check_array(y, dtype=np.float64)
        if y.shape[0] != X.shape[0]:
            raise ShapeError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        eq_p, eq_q = _split_targets(y, self.tokens)
        _check_unit_quats(eq_q, "y equilibrium quaternions")
        windows = WindowSet(
            obs_p=obs_p, obs_q=obs_q, eq_p=eq_p, eq_q=eq_q, wrench=wrench,
            episode=np.arange(X.shape[0]), dt=self.dt,
        )
        config = DenoiserConfig(
            hidden=self.hidden, heads=self.heads, layers=self.layers,
            tokens=self.tokens, steps=self.steps,
            schedule_kind=self.schedule_kind, beta_min=self.beta_min,
            beta_max=self.beta_max, theta_weight=self.theta_weight,
            sigma_gauss=self.sigma_gauss, dt=self.dt,
        )
        tcfg = TrainConfig(
            lr=self.lr, batch_size=self.batch_size, epochs=self.epochs,
            seed=self.seed, val_fraction=self.val_fraction,
        )
        self.params_, self.training_log_ = train(windows, config, tcfg)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Reconstruct equilibrium poses for windows X."""
        check_is_fitted(self, "params_")
        obs_p, obs_q, wrench = self._validate_X(X)
        rec_p, rec_q = reconstruct_szft(
            self.params_, obs_p, obs_q, wrench, steps=self.inference_steps
        )
        out = np.concatenate([rec_p, rec_q], axis=-1)
        return out.reshape(X.shape[0], self.tokens * 7)

    def predict(self, X):
        return self.transform(X)
