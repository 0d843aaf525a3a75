"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeError

__all__ = ["check_tensor_batch", "check_targets"]


def check_tensor_batch(x, input_shape=None, name="X"):
    """Coerce a batch of activations to ``(n_samples, *input_shape)``.

    2-D input is reshaped to ``input_shape`` when one is given (the flat
    feature count must match); otherwise the array is used as-is with its
    leading mode as the batch.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim < 2:
        raise ShapeError(f"{name} must have at least 2 modes, got shape {x.shape}")
    if input_shape is not None:
        input_shape = tuple(int(d) for d in input_shape)
        if x.ndim == 2 and x.shape[1] == math.prod(input_shape):
            return x.reshape((x.shape[0],) + input_shape)
        if x.shape[1:] != input_shape:
            raise ShapeError(
                f"{name} shape {x.shape} does not match input shape {input_shape}"
            )
    return x


def check_targets(y, n_samples, name="y"):
    """Coerce targets to ``(n_samples, n_outputs)``.

    Returns the 2-D array and whether the input was 1-D (so predictions can
    be raveled back).
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    was_1d = y.ndim == 1
    if was_1d:
        y = y.reshape(-1, 1)
    if y.ndim != 2:
        raise ShapeError(f"{name} must be 1-D or 2-D, got shape {y.shape}")
    if y.shape[0] != n_samples:
        raise ShapeError(
            f"{name} has {y.shape[0]} rows but there are {n_samples} samples"
        )
    return y, was_1d
