"""Scikit-learn compatible front end for low-rank tensor regression."""

from __future__ import annotations

import math

from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .decomp import SketchSpec
from .errors import ShapeError
from .layer import forward, init_model
from .training import (
    STREAM_INIT,
    STREAM_MASKS,
    STREAM_SHUFFLE,
    TrainConfig,
    fit_model,
    named_stream,
)
from .validation import check_tensor_batch, check_targets

__all__ = ["TensorRegressor"]


class TensorRegressor(RegressorMixin, BaseEstimator):
    """Low-rank tensor regression trained by mini-batch SGD.

    The regression weight over ``input_shape + (n_outputs,)`` is kept in
    decomposed form and optionally rank-sketched during training (Bernoulli
    keep masks or with-replacement component selection), which acts as a
    regularizer on the decomposition rank.

    Parameters
    ----------
    rank : int or tuple
        Decomposition rank; a tuple gives per-mode Tucker ranks.
    decomposition : {"cp", "tucker"}
    scheme : {"none", "bernoulli", "replacement"}
        Rank-sketching scheme applied during training.
    rate : float
        Keep rate in (0, 1]; the probability a component survives.
    objective : {"stochastic", "deterministic"}
        Optimize the sketched loss directly, or its closed-form regularized
        counterpart (CP only).
    scale_mode : {"inverted", "none"}
        Whether sketched outputs are rescaled by ``1 / rate`` at train time.
    epochs, batch_size, lr, lr_decay_factor, lr_decay_epochs
        SGD schedule; the learning rate is multiplied by ``lr_decay_factor``
        at each epoch listed in ``lr_decay_epochs``.
    input_shape : tuple, optional
        Tensor shape of one sample.  Allows 2-D ``X`` (rows are flattened
        samples) to be reshaped, so the estimator drops into ordinary
        scikit-learn pipelines.
    random_state : int
        Seed for initialization, mask draws and shuffling.

    Attributes
    ----------
    model_ : TensorRegressionLayer
        The fitted decomposed weight and bias.
    curve_ : LossCurve
        Per-epoch objective and training loss records.
    """

    def __init__(
        self,
        rank=4,
        decomposition="cp",
        scheme="none",
        rate=1.0,
        objective="stochastic",
        scale_mode="inverted",
        epochs=50,
        batch_size=64,
        lr=1e-2,
        lr_decay_factor=0.1,
        lr_decay_epochs=(),
        input_shape=None,
        random_state=0,
    ):
        self.rank = rank
        self.decomposition = decomposition
        self.scheme = scheme
        self.rate = rate
        self.objective = objective
        self.scale_mode = scale_mode
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_decay_factor = lr_decay_factor
        self.lr_decay_epochs = lr_decay_epochs
        self.input_shape = input_shape
        self.random_state = random_state

    def fit(self, X, y):
        X = check_tensor_batch(X, self.input_shape)
        y2, self._y_was_1d = check_targets(y, X.shape[0])
        seed = 0 if self.random_state is None else int(self.random_state)
        config = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr_initial=self.lr,
            lr_decay_factor=self.lr_decay_factor,
            lr_decay_epochs=tuple(self.lr_decay_epochs),
            rate=self.rate,
            scheme=self.scheme,
            objective=self.objective,
            seed=seed,
        )
        sketch = SketchSpec(
            self.scheme, self.rate, tie_modes=(self.decomposition == "cp")
        )
        self.model_ = init_model(
            X.shape[1:],
            y2.shape[1],
            self.rank,
            decomposition=self.decomposition,
            sketch=sketch,
            scale_mode=self.scale_mode,
            rng=named_stream(seed, STREAM_INIT),
        )
        self.curve_ = fit_model(
            self.model_,
            X,
            y2,
            config,
            rng_masks=named_stream(seed, STREAM_MASKS),
            rng_shuffle=named_stream(seed, STREAM_SHUFFLE),
        )
        self.input_shape_ = X.shape[1:]
        self.n_features_in_ = math.prod(self.input_shape_)
        self.n_outputs_ = y2.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_tensor_batch(X, self.input_shape_)
        if X.shape[1:] != self.input_shape_:
            raise ShapeError(
                f"X shape {X.shape} does not match fitted input {self.input_shape_}"
            )
        y = forward(self.model_, X)
        return y.ravel() if self._y_was_1d else y
