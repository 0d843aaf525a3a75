"""Dense tensor algebra: unfoldings, mode products and contractions.

Tensors are C-contiguous float64 numpy arrays.  With row-major storage the
flat offset of element ``(i_0, ..., i_{N-1})`` of a tensor of shape
``(I_0, ..., I_{N-1})`` is ``sum_k i_k * prod_{m>k} I_m``, so
:func:`vectorize` is the identity on the underlying buffer and the mode-0
unfolding is a plain reshape.

Shape mismatches always raise :class:`~tensorreg.errors.ShapeError`;
operands are never silently broadcast.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ModeError, ShapeError

__all__ = [
    "as_tensor",
    "unfold",
    "fold",
    "vectorize",
    "mode_dot",
    "inner_contract",
    "khatri_rao",
    "matmul",
    "transpose",
    "outer",
    "axpy",
    "frobenius_norm_sq",
]


def as_tensor(data, shape=None):
    """Coerce ``data`` to a C-contiguous float64 array.

    Parameters
    ----------
    data : array_like
        Anything :func:`numpy.asarray` accepts.
    shape : tuple of int, optional
        If given, reshape the flat data to this shape; the element count
        must match exactly.
    """
    t = np.asarray(data, dtype=np.float64)
    if t.ndim > 0 and not t.flags["C_CONTIGUOUS"]:
        # ascontiguousarray would promote order-0 tensors to order 1
        t = np.ascontiguousarray(t)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in shape):
            raise ShapeError(f"dimensions must be positive, got {shape}")
        if t.size != math.prod(shape):
            raise ShapeError(f"cannot view {t.size} values as shape {shape}")
        t = t.reshape(shape)
    return t


def _check_mode(t, mode):
    if not isinstance(mode, (int, np.integer)):
        raise ModeError(f"mode must be an integer, got {mode!r}")
    if not 0 <= mode < t.ndim:
        raise ModeError(f"mode {mode} out of range for an order-{t.ndim} tensor")
    return int(mode)


def unfold(t, mode):
    """Mode-``mode`` unfolding of ``t`` as an ``(I_mode, prod(I_other))`` matrix.

    Element ``(i_0, ..., i_{N-1})`` lands in row ``i_mode`` and column
    ``sum_{k != mode} i_k * prod_{m > k, m != mode} I_m``, i.e. the remaining
    indices are enumerated in row-major order.
    """
    t = as_tensor(t)
    mode = _check_mode(t, mode)
    return np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1)


def fold(m, mode, shape):
    """Inverse of :func:`unfold`: refold a matrix into a tensor of ``shape``."""
    m = as_tensor(m)
    shape = tuple(int(s) for s in shape)
    if m.ndim != 2:
        raise ShapeError(f"expected a matrix, got order {m.ndim}")
    if not 0 <= mode < len(shape):
        raise ModeError(f"mode {mode} out of range for shape {shape}")
    rest = shape[:mode] + shape[mode + 1 :]
    if m.shape != (shape[mode], math.prod(rest)):
        raise ShapeError(
            f"matrix {m.shape} does not refold to shape {shape} along mode {mode}"
        )
    return np.moveaxis(m.reshape((shape[mode],) + rest), 0, mode)


def vectorize(t):
    """Flatten ``t`` to a vector, last index varying fastest."""
    return as_tensor(t).reshape(-1)


def mode_dot(t, m, mode):
    """Contract mode ``mode`` of ``t`` with the columns of matrix ``m``.

    Computed as ``fold(m @ unfold(t, mode), mode, new_shape)`` where the
    result shape replaces ``I_mode`` by the row count of ``m``.
    """
    t = as_tensor(t)
    m = as_tensor(m)
    mode = _check_mode(t, mode)
    if m.ndim != 2:
        raise ShapeError(f"mode_dot needs a matrix, got order {m.ndim}")
    if m.shape[1] != t.shape[mode]:
        raise ShapeError(
            f"matrix has {m.shape[1]} columns but mode {mode} has size {t.shape[mode]}"
        )
    new_shape = t.shape[:mode] + (m.shape[0],) + t.shape[mode + 1 :]
    return fold(m @ unfold(t, mode), mode, new_shape)


def inner_contract(x, w, n_modes):
    """Contract the last ``n_modes`` modes of ``x`` with the first of ``w``.

    The result keeps the leading modes of ``x`` followed by the trailing
    modes of ``w``; contracting every mode of both operands yields an
    order-0 tensor (shape ``()``).
    """
    x = as_tensor(x)
    w = as_tensor(w)
    n_modes = int(n_modes)
    if n_modes < 0:
        raise ShapeError("n_modes must be non-negative")
    if n_modes > x.ndim or n_modes > w.ndim:
        raise ShapeError(
            f"cannot contract {n_modes} modes of tensors with orders "
            f"{x.ndim} and {w.ndim}"
        )
    if n_modes and x.shape[x.ndim - n_modes :] != w.shape[:n_modes]:
        raise ShapeError(
            f"shared modes disagree: {x.shape[x.ndim - n_modes:]} vs "
            f"{w.shape[:n_modes]}"
        )
    return np.tensordot(x, w, axes=n_modes)


def khatri_rao(factors):
    """Column-wise Khatri-Rao product of a list of matrices.

    All factors must share the same column count ``R``.  Column ``r`` of the
    result is the Kronecker product of the ``r``-th columns, with earlier
    factors varying slowest, so that for a rank-``R`` sum of outer products
    ``vectorize(full) == khatri_rao(factors) @ weights``.
    """
    factors = [as_tensor(f) for f in factors]
    if not factors:
        raise ShapeError("khatri_rao needs at least one factor")
    for f in factors:
        if f.ndim != 2:
            raise ShapeError(f"factors must be matrices, got order {f.ndim}")
    r = factors[0].shape[1]
    if any(f.shape[1] != r for f in factors):
        raise ShapeError(
            f"factors must share a column count, got {[f.shape[1] for f in factors]}"
        )
    out = factors[0]
    for f in factors[1:]:
        out = (out[:, None, :] * f[None, :, :]).reshape(-1, r)
    return out


def matmul(a, b):
    """Matrix product with explicit shape checking."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs matrices, got orders {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    return a @ b


def transpose(m):
    m = as_tensor(m)
    if m.ndim != 2:
        raise ShapeError(f"transpose needs a matrix, got order {m.ndim}")
    return np.ascontiguousarray(m.T)


def outer(u, v):
    u = as_tensor(u)
    v = as_tensor(v)
    if u.ndim != 1 or v.ndim != 1:
        raise ShapeError("outer needs two vectors")
    return np.outer(u, v)


def axpy(alpha, x, y):
    """``alpha * x + y`` for congruent tensors."""
    x = as_tensor(x)
    y = as_tensor(y)
    if x.shape != y.shape:
        raise ShapeError(f"axpy shapes disagree: {x.shape} vs {y.shape}")
    return float(alpha) * x + y


def frobenius_norm_sq(t):
    """Sum of squared entries."""
    t = as_tensor(t)
    return float(np.sum(t * t))
