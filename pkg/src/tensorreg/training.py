"""Synthetic data generation, SGD with step decay, and experiment loops.

All randomness flows from integer seeds through named substreams (weight,
train data, test data, init, masks, shuffle), so switching the training
objective never perturbs the data or the initialization.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .decomp import KruskalTensor, SketchSpec, draw_sketch, kruskal_to_full
from .errors import ConfigError, DivergedError
from .layer import (
    forward,
    grad_arrays,
    init_model,
    iter_params,
    mse_loss,
    objective_and_grads,
    sample_masked_objective_grads,
    weight_ranks,
)
from .tensor import inner_contract

__all__ = [
    "SyntheticSpec",
    "TrainConfig",
    "LossCurve",
    "named_stream",
    "generate_synthetic",
    "sgd_step",
    "lr_at",
    "epoch_batches",
    "fit_model",
    "run_experiment",
]

# substream indices under a top-level seed
STREAM_WEIGHT = 0
STREAM_TRAIN = 1
STREAM_TEST = 2
STREAM_INIT = 3
STREAM_MASKS = 4
STREAM_SHUFFLE = 5

DIVERGENCE_LIMIT = 1e12


def named_stream(seed, index):
    """Independent generator for substream ``index`` of ``seed``."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Low-rank ground-truth regression problem.

    The default instance is the reference synthetic benchmark: a
    ``(25, 25, 25)`` rank-15 weight, 10000 training and 1000 test samples.
    """

    weight_shape: tuple = (25, 25, 25)
    output_dim: int = 1
    true_rank: int = 15
    n_train: int = 10000
    n_test: int = 1000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "weight_shape", tuple(int(d) for d in self.weight_shape)
        )
        if (
            any(d < 1 for d in self.weight_shape)
            or not self.weight_shape
            or self.output_dim < 1
            or self.true_rank < 1
            or self.n_train < 1
            or self.n_test < 0
        ):
            raise ConfigError(f"invalid synthetic spec {self}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    lr_initial: float
    lr_decay_factor: float = 0.1
    lr_decay_epochs: tuple = ()
    rate: float = 1.0
    scheme: str = "bernoulli"
    objective: str = "stochastic"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "lr_decay_epochs", tuple(int(e) for e in self.lr_decay_epochs)
        )
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(
                f"epochs and batch_size must be positive, got "
                f"{self.epochs}, {self.batch_size}"
            )
        if self.lr_initial <= 0.0 or self.lr_decay_factor <= 0.0:
            raise ConfigError("learning rates must be positive")
        if not 0.0 < self.rate <= 1.0:
            raise ConfigError(f"keep rate must be in (0, 1], got {self.rate}")
        if self.scheme not in ("none", "bernoulli", "replacement"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.objective not in ("stochastic", "deterministic"):
            raise ConfigError(f"unknown objective {self.objective!r}")


@dataclass
class LossCurve:
    """Per-epoch training records."""

    epoch: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    test_mse: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def append(self, epoch, objective, train_loss, test_mse, seconds):
        if self.epoch and epoch <= self.epoch[-1]:
            raise ConfigError("epoch indices must be strictly increasing")
        self.epoch.append(int(epoch))
        self.objective.append(float(objective))
        self.train_loss.append(float(train_loss))
        self.test_mse.append(float(test_mse))
        self.seconds.append(float(seconds))

    def __len__(self):
        return len(self.epoch)


def generate_synthetic(spec):
    """Draw a synthetic regression problem from independent seed streams.

    The ground-truth weight is a rank-``true_rank`` Kruskal tensor over
    ``weight_shape + (output_dim,)`` with standard-normal factors;
    activations are i.i.d. standard normal and labels are their exact
    contraction with the materialized weight.

    Returns ``((x_train, y_train), (x_test, y_test), true_weight)``.
    """
    n_modes = len(spec.weight_shape)
    rng_w = named_stream(spec.seed, STREAM_WEIGHT)
    dims = spec.weight_shape + (spec.output_dim,)
    true_weight = KruskalTensor(
        [rng_w.standard_normal((d, spec.true_rank)) for d in dims]
    )
    full = kruskal_to_full(true_weight)

    def _draw(rng, n):
        x = rng.standard_normal((n,) + spec.weight_shape)
        return x, inner_contract(x, full, n_modes)

    train = _draw(named_stream(spec.seed, STREAM_TRAIN), spec.n_train)
    test = _draw(named_stream(spec.seed, STREAM_TEST), spec.n_test)
    return train, test, true_weight


def sgd_step(model, grads, lr):
    """In-place descent step ``p <- p - lr * grad`` on every parameter."""
    if lr < 0.0:
        raise ConfigError(f"learning rate must be non-negative, got {lr}")
    for p, g in zip(iter_params(model), grad_arrays(grads), strict=True):
        p -= lr * g
    return model


def lr_at(config, epoch):
    """Step-decayed learning rate in effect during ``epoch``."""
    if not 0 <= epoch < config.epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {config.epochs})")
    n_decays = sum(1 for d in config.lr_decay_epochs if d <= epoch)
    return config.lr_initial * config.lr_decay_factor**n_decays


def epoch_batches(n, batch_size, rng):
    """Seeded permutation of ``range(n)`` cut into batches; the final
    partial batch is kept."""
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def fit_model(model, x, y, config, rng_masks, rng_shuffle, x_val=None, y_val=None):
    """Mini-batch SGD on the configured objective; mutates ``model``.

    The stochastic objective draws fresh Bernoulli masks per sample for
    Kruskal weights (standard dropout practice, and what keeps the sampled
    and closed-form objectives interchangeable at the configured learning
    rates); replacement sketches and Tucker weights draw once per batch.
    The deterministic objective never draws.  Per epoch the curve records
    the mean optimized objective, the evaluation-mode MSE on the training
    set, the evaluation-mode MSE on the validation set (NaN if absent) and
    the wall-clock seconds.  Raises
    :class:`~tensorreg.errors.DivergedError` on a non-finite or runaway
    objective.
    """
    n = x.shape[0]
    stochastic = config.objective == "stochastic"
    draws_active = stochastic and model.sketch.scheme != "none"
    per_sample = (
        draws_active and model.is_kruskal and model.sketch.scheme == "bernoulli"
    )
    ranks = weight_ranks(model)
    curve = LossCurve()
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        lr = lr_at(config, epoch)
        total = 0.0
        for idx in epoch_batches(n, config.batch_size, rng_shuffle):
            if per_sample:
                masks = (
                    rng_masks.random((len(idx), ranks[0])) < config.rate
                ).astype(np.float64)
                obj, grads = sample_masked_objective_grads(
                    model, x[idx], y[idx], masks
                )
            else:
                draw = (
                    draw_sketch(model.sketch, ranks, rng_masks)
                    if draws_active
                    else None
                )
                obj, grads = objective_and_grads(
                    model, x[idx], y[idx], draw, config.objective
                )
            if not math.isfinite(obj) or obj > DIVERGENCE_LIMIT:
                raise DivergedError(epoch, obj)
            sgd_step(model, grads, lr)
            total += obj * len(idx)
        train_loss = mse_loss(forward(model, x), y)
        test = (
            mse_loss(forward(model, x_val), y_val)
            if x_val is not None
            else float("nan")
        )
        curve.append(epoch, total / n, train_loss, test, time.perf_counter() - t0)
    return curve


def run_experiment(spec, config, return_model=False):
    """Train a fresh model on synthetic data and record its loss curve.

    The model rank equals the spec's true rank (the well-specified setting)
    and its weight is a Kruskal tensor.  Data comes from ``spec.seed``
    streams; initialization, masks and shuffling come from ``config.seed``
    streams, so stochastic and deterministic runs of the same seeds see
    identical data, initialization and batch order.
    """
    (x_tr, y_tr), (x_te, y_te), _ = generate_synthetic(spec)
    sketch = SketchSpec(config.scheme, config.rate, tie_modes=True)
    model = init_model(
        spec.weight_shape,
        spec.output_dim,
        spec.true_rank,
        decomposition="cp",
        sketch=sketch,
        rng=named_stream(config.seed, STREAM_INIT),
    )
    curve = fit_model(
        model,
        x_tr,
        y_tr,
        config,
        rng_masks=named_stream(config.seed, STREAM_MASKS),
        rng_shuffle=named_stream(config.seed, STREAM_SHUFFLE),
        x_val=x_te,
        y_val=y_te,
    )
    if return_model:
        return curve, model
    return curve
