"""Scikit-learn style estimator wrapping the dual-filter fuzzy model.

``X`` is a 3-d array of trials with shape (n_trials, channels, timesteps);
``y`` holds arbitrary hashable class labels, mapped to contiguous indices
the way sklearn classifiers do. The estimator follows the usual contract:
constructor stores hyperparameters verbatim, ``fit`` returns ``self``,
fitted state lives in trailing-underscore attributes, and
``get_params``/``set_params`` come from ``BaseEstimator`` so the model
composes with pipelines and search utilities.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .data import Dataset, Trial
from .membership import MfFamily
from .model import ModelShape, _forward_batch
from .training import TrainConfig, evaluate, fit, init_params
from .validation import DimensionError, InvalidInputError


def check_trials(X) -> np.ndarray:
    """Validate and convert trials to a finite float64 (n, C, T) array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise DimensionError(f"X must have shape (n_trials, channels, timesteps), got {X.shape}")
    if X.shape[0] == 0:
        raise InvalidInputError("X is empty")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("X contains non-finite entries")
    return X


class DuoClassifier(ClassifierMixin, BaseEstimator):
    """Dual-filter fuzzy rule classifier for channels-by-time trials.

    Parameters mirror :class:`fuzzyduo.training.TrainConfig` plus the model
    shape (rules per filter, membership family, width tying).
    """

    def __init__(
        self,
        rules_spatial: int = 5,
        rules_temporal: int = 5,
        family: str = "modified_laplace",
        tie_widths: bool = False,
        epochs: int = 100,
        batch_size: int = 32,
        learning_rate: float = 1e-3,
        optimizer: str = "adam",
        adam_betas: tuple[float, float] = (0.9, 0.999),
        adam_eps: float = 1e-8,
        seed: int = 0,
        shuffle: bool = True,
    ):
        self.rules_spatial = rules_spatial
        self.rules_temporal = rules_temporal
        self.family = family
        self.tie_widths = tie_widths
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.adam_betas = adam_betas
        self.adam_eps = adam_eps
        self.seed = seed
        self.shuffle = shuffle

    def fit(self, X, y):
        X = check_trials(X)
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise DimensionError(f"y must have shape ({X.shape[0]},), got {y.shape}")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if self.classes_.shape[0] < 2:
            raise InvalidInputError("need at least 2 classes")
        shape = ModelShape(
            num_channels=X.shape[1],
            num_timesteps=X.shape[2],
            num_classes=self.classes_.shape[0],
            rules_spatial=self.rules_spatial,
            rules_temporal=self.rules_temporal,
            family=MfFamily.from_tag(self.family),
            tie_widths=self.tie_widths,
        )
        config = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            adam_betas=tuple(self.adam_betas),
            adam_eps=self.adam_eps,
            seed=self.seed,
            shuffle=self.shuffle,
        )
        dataset = Dataset(
            trials=[Trial(signal=x, label=int(l)) for x, l in zip(X, encoded)],
            num_classes=self.classes_.shape[0],
            channel_names=[f"ch{i + 1}" for i in range(X.shape[1])],
            sampling_rate_hz=1.0,
        )
        initial = init_params(shape, self.seed)
        self.params_, self.history_ = fit(dataset, config, initial)
        self.n_features_in_ = X.shape[1] * X.shape[2]
        return self

    def _check_fitted_input(self, X) -> np.ndarray:
        if not hasattr(self, "params_"):
            raise NotFittedError("DuoClassifier is not fitted; call fit first")
        X = check_trials(X)
        expected = (self.params_.num_channels, self.params_.num_timesteps)
        if X.shape[1:] != expected:
            raise DimensionError(f"X trials have shape {X.shape[1:]}, model expects {expected}")
        return X

    def decision_function(self, X) -> np.ndarray:
        X = self._check_fitted_input(X)
        logits, _, _, _ = _forward_batch(X, self.params_)
        return logits

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

    def evaluate(self, X, y) -> tuple[float, float]:
        """(accuracy, mean cross-entropy) with labels mapped through classes_."""
        X = self._check_fitted_input(X)
        y = np.asarray(y)
        index = {label: i for i, label in enumerate(self.classes_)}
        try:
            encoded = [index[label] for label in y]
        except KeyError as exc:
            raise InvalidInputError(f"unseen label {exc.args[0]!r}") from exc
        dataset = Dataset(
            trials=[Trial(signal=x, label=l) for x, l in zip(X, encoded)],
            num_classes=self.classes_.shape[0],
            channel_names=[f"ch{i + 1}" for i in range(X.shape[1])],
            sampling_rate_hz=1.0,
        )
        return evaluate(dataset, self.params_)
