"""Low-rank tensor regression: forward passes, objectives and gradients.

The regression weight is kept in decomposed form (Kruskal or Tucker) over
``(I_0, ..., I_{N-1}, O)``; a batch of activations ``(B, I_0, ..., I_{N-1})``
maps to outputs ``(B, O)`` by contracting all ``N`` activation modes.  Every
pass works directly on the factors; the full weight tensor is never
materialized.

Training-time sketching multiplies the sketched contraction by the inverse
keep rate (``scale_mode="inverted"``), so its expectation matches the plain
forward pass; evaluation always uses the unsketched weight with no scaling.

Gradients are derived by hand and are exact for the chosen objective:

* ``stochastic`` - squared error of the sketched forward pass with a fixed
  draw (the draw is treated as a constant).
* ``deterministic`` - squared error of the plain forward pass plus
  :func:`cp_dropout_penalty`, the closed form whose gradient matches the
  expected Bernoulli-masked objective on whitened inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .decomp import (
    KruskalTensor,
    SketchSpec,
    TuckerTensor,
    apply_sketch_kruskal,
    apply_sketch_tucker,
)
from .errors import (
    ConfigError,
    EnumerationLimitError,
    ShapeError,
    UnsupportedDecompositionError,
)
from .tensor import as_tensor, fold, khatri_rao, unfold

__all__ = [
    "TensorRegressionLayer",
    "Gradients",
    "init_model",
    "forward",
    "forward_sketched",
    "mse_loss",
    "cp_dropout_penalty",
    "expected_dropout_loss",
    "backward",
    "sample_masked_objective_grads",
    "iter_params",
    "grad_arrays",
    "clone_model",
    "weight_ranks",
]

SCALE_MODES = ("inverted", "none")
OBJECTIVES = ("stochastic", "deterministic")

ENUMERATION_MAX_RANK = 20


@dataclass
class TensorRegressionLayer:
    """Trainable regression weight in decomposed form plus a bias vector."""

    weight: KruskalTensor | TuckerTensor
    bias: np.ndarray
    sketch: SketchSpec = field(default_factory=SketchSpec)
    scale_mode: str = "inverted"

    def __post_init__(self):
        if not isinstance(self.weight, (KruskalTensor, TuckerTensor)):
            raise UnsupportedDecompositionError(
                f"weight must be Kruskal or Tucker, got {type(self.weight).__name__}"
            )
        self.bias = as_tensor(self.bias)
        if self.bias.ndim != 1:
            raise ShapeError("bias must be a vector")
        if self.weight.shape[-1] != self.bias.shape[0]:
            raise ShapeError(
                f"weight output mode {self.weight.shape[-1]} does not match "
                f"bias length {self.bias.shape[0]}"
            )
        if self.scale_mode not in SCALE_MODES:
            raise ConfigError(f"unknown scale_mode {self.scale_mode!r}")
        if (
            isinstance(self.weight, KruskalTensor)
            and self.sketch.scheme != "none"
            and not self.sketch.tie_modes
        ):
            raise ConfigError("Kruskal weights require a tied sketch (tie_modes)")

    @property
    def input_shape(self):
        return self.weight.shape[:-1]

    @property
    def output_dim(self):
        return self.weight.shape[-1]

    @property
    def is_kruskal(self):
        return isinstance(self.weight, KruskalTensor)


@dataclass
class Gradients:
    """Per-parameter gradients, shape-congruent with the model."""

    factors: list
    core: np.ndarray | None
    bias: np.ndarray


def init_model(
    input_shape,
    output_dim,
    rank,
    decomposition="cp",
    sketch=None,
    scale_mode="inverted",
    rng=None,
):
    """Create a randomly initialized model.

    Factor (and core) entries are i.i.d. Gaussian with a standard deviation
    chosen so the reconstructed weight has roughly unit total Frobenius
    norm; the bias starts at zero.
    """
    input_shape = tuple(int(d) for d in input_shape)
    output_dim = int(output_dim)
    if any(d < 1 for d in input_shape) or output_dim < 1 or not input_shape:
        raise ConfigError(
            f"invalid model dimensions {input_shape} -> {output_dim}"
        )
    rng = np.random.default_rng(rng)
    dims = input_shape + (output_dim,)
    n_modes = len(dims)
    if sketch is None:
        sketch = SketchSpec()

    if decomposition == "cp":
        r = int(rank)
        if r < 1:
            raise ConfigError(f"rank must be positive, got {rank}")
        sigma = (r * math.prod(dims)) ** (-1.0 / (2.0 * n_modes))
        factors = [rng.normal(0.0, sigma, size=(d, r)) for d in dims]
        weight = KruskalTensor(factors)
    elif decomposition == "tucker":
        ranks = (int(rank),) * n_modes if np.isscalar(rank) else tuple(
            int(r) for r in rank
        )
        if len(ranks) != n_modes or any(r < 1 for r in ranks):
            raise ConfigError(f"invalid Tucker ranks {ranks} for {n_modes} modes")
        sigma = (math.prod(ranks) * math.prod(dims)) ** (
            -1.0 / (2.0 * (n_modes + 1))
        )
        core = rng.normal(0.0, sigma, size=ranks)
        factors = [rng.normal(0.0, sigma, size=(d, r)) for d, r in zip(dims, ranks)]
        weight = TuckerTensor(core, factors)
    else:
        raise ConfigError(f"unknown decomposition {decomposition!r}")

    return TensorRegressionLayer(
        weight, np.zeros(output_dim), sketch=sketch, scale_mode=scale_mode
    )


def weight_ranks(model):
    """Per-mode ranks of the decomposed weight, as sketching sees them."""
    if model.is_kruskal:
        return (model.weight.rank,) * model.weight.order
    return model.weight.ranks


def iter_params(model):
    """Yield the trainable parameter arrays in a fixed order."""
    yield from model.weight.factors
    if not model.is_kruskal:
        yield model.weight.core
    yield model.bias


def grad_arrays(grads):
    """Gradient arrays in the same order as :func:`iter_params`."""
    yield from grads.factors
    if grads.core is not None:
        yield grads.core
    yield grads.bias


def clone_model(model):
    """Deep copy of a model (parameters are fresh arrays)."""
    if model.is_kruskal:
        w = model.weight.weights
        weight = KruskalTensor(
            [f.copy() for f in model.weight.factors],
            None if w is None else w.copy(),
        )
    else:
        weight = TuckerTensor(
            model.weight.core.copy(), [f.copy() for f in model.weight.factors]
        )
    return TensorRegressionLayer(
        weight, model.bias.copy(), sketch=model.sketch, scale_mode=model.scale_mode
    )


def _check_batch(model, x):
    x = as_tensor(x)
    expected = model.input_shape
    if x.ndim != len(expected) + 1 or x.shape[1:] != expected:
        raise ShapeError(
            f"activations {x.shape} do not match input shape {expected} "
            "(leading batch mode expected)"
        )
    return x


def _contract_kruskal(factors, weights, x):
    # (B, O) contraction of the batch with the decomposed weight, no bias
    fin, v = factors[:-1], factors[-1]
    z = x.reshape(x.shape[0], -1) @ khatri_rao(fin)
    return (z * weights) @ v.T


def _contract_tucker(core, factors, x):
    fin, v = factors[:-1], factors[-1]
    c = x
    for f in fin:
        c = np.tensordot(c, f, axes=([1], [0]))
    c2 = c.reshape(x.shape[0], -1)
    g_out = unfold(core, core.ndim - 1)
    return (c2 @ g_out.T) @ v.T


def _contract(weight, x):
    if isinstance(weight, KruskalTensor):
        return _contract_kruskal(weight.factors, weight.effective_weights(), x)
    return _contract_tucker(weight.core, weight.factors, x)


def forward(model, x):
    """Evaluation-mode forward pass: unsketched weight, no scaling."""
    x = _check_batch(model, x)
    return _contract(model.weight, x) + model.bias


def _sketch_scale(model, draw):
    if draw is None or draw.scheme == "none":
        return 1.0
    if model.scale_mode == "inverted":
        return 1.0 / model.sketch.rate
    return 1.0


def forward_sketched(model, x, draw):
    """Training-mode forward pass with a fixed sketch draw.

    The sketched contraction is multiplied by the inverse keep rate when
    ``scale_mode`` is ``"inverted"``; the bias is never scaled.  A ``None``
    draw (or a ``"none"`` scheme) falls back to :func:`forward`.
    """
    if draw is None or draw.scheme == "none":
        return forward(model, x)
    x = _check_batch(model, x)
    if model.is_kruskal:
        sketched = apply_sketch_kruskal(model.weight, draw)
    else:
        sketched = apply_sketch_tucker(model.weight, draw)
    return _sketch_scale(model, draw) * _contract(sketched, x) + model.bias


def mse_loss(y_pred, y_true):
    """Sum of squared errors divided by the batch size (leading mode)."""
    y_pred = as_tensor(y_pred)
    y_true = as_tensor(y_true)
    if y_pred.shape != y_true.shape:
        raise ShapeError(
            f"prediction shape {y_pred.shape} does not match targets {y_true.shape}"
        )
    d = y_pred - y_true
    return float((d * d).sum() / y_pred.shape[0])


def _column_norms_sq(factors):
    return np.stack([np.sum(f * f, axis=0) for f in factors])


def cp_dropout_penalty(weight, rate):
    """Deterministic counterpart of Bernoulli rank dropout on a Kruskal weight.

    Returns ``((1 - rate) / rate) * sum_r prod_i ||U_i[:, r]||^2`` (scaled by
    the squared component weights when present).  Defined for Kruskal
    weights only.
    """
    if not isinstance(weight, KruskalTensor):
        raise UnsupportedDecompositionError(
            "the dropout penalty is defined for Kruskal weights only"
        )
    if not 0.0 < rate <= 1.0:
        raise ConfigError(f"keep rate must be in (0, 1], got {rate}")
    norms = _column_norms_sq(weight.factors)
    lam_sq = weight.effective_weights() ** 2
    return float((1.0 - rate) / rate * np.sum(lam_sq * np.prod(norms, axis=0)))


def _penalty_grads(weight, rate):
    coef = (1.0 - rate) / rate
    norms = _column_norms_sq(weight.factors)  # (n_factors, R)
    lam_sq = weight.effective_weights() ** 2
    grads = []
    for i, f in enumerate(weight.factors):
        others = np.prod(np.delete(norms, i, axis=0), axis=0)
        grads.append(2.0 * coef * (lam_sq * others)[None, :] * f)
    return grads


def _bernoulli_mask_weights(rate, n_kept, n_dropped):
    return rate**n_kept * (1.0 - rate) ** n_dropped


def expected_dropout_loss(model, x, y, method="closed_form", per_sample=False):
    """Exact expectation of the Bernoulli-masked squared loss over all masks.

    Two equivalent routes are provided: ``"enumerate"`` sums the loss of
    every one of the ``2^R`` masks weighted by its probability, and
    ``"closed_form"`` evaluates the per-sample identity

    ``E = ||y - y_hat||^2 / B
       + ((1 - rate) / rate) / B * sum_s sum_r (lam_r z_{s,r})^2 ||v_r||^2``

    where ``z_s`` is the activation contracted with the input factors and
    ``v_r`` the output-factor columns.  Requires a Kruskal weight and
    inverted scaling; with ``per_sample=True`` the per-sample expectations
    are returned instead of their mean.
    """
    if not isinstance(model.weight, KruskalTensor):
        raise UnsupportedDecompositionError(
            "expected_dropout_loss needs a Kruskal weight"
        )
    if model.sketch.scheme == "replacement":
        raise ConfigError("mask enumeration applies to the Bernoulli scheme only")
    if model.scale_mode != "inverted":
        raise ConfigError("expected_dropout_loss assumes inverted scaling")
    x = _check_batch(model, x)
    y = as_tensor(y)
    rate = model.sketch.rate if model.sketch.scheme == "bernoulli" else 1.0
    kt = model.weight
    fin, v = kt.factors[:-1], kt.factors[-1]
    lam = kt.effective_weights()
    r = kt.rank
    z = x.reshape(x.shape[0], -1) @ khatri_rao(fin)
    if y.shape != (x.shape[0], v.shape[0]):
        raise ShapeError(
            f"targets {y.shape} do not match batch {(x.shape[0], v.shape[0])}"
        )

    if method == "closed_form":
        resid = (z * lam) @ v.T + model.bias - y
        vnorm = np.sum(v * v, axis=0)
        distort = (1.0 - rate) / rate * ((z * lam) ** 2 @ vnorm)
        per = (resid * resid).sum(axis=1) + distort
    elif method == "enumerate":
        if r > ENUMERATION_MAX_RANK:
            raise EnumerationLimitError(
                f"rank {r} exceeds the enumeration limit {ENUMERATION_MAX_RANK}"
            )
        scale = 1.0 / rate
        zl = z * lam
        per = np.zeros(x.shape[0])
        for bits in range(2**r):
            mask = np.array(
                [(bits >> j) & 1 for j in range(r)], dtype=np.float64
            )
            n_kept = int(mask.sum())
            p = _bernoulli_mask_weights(rate, n_kept, r - n_kept)
            if p == 0.0:
                continue
            e = scale * ((zl * mask) @ v.T) + model.bias - y
            per += p * (e * e).sum(axis=1)
    else:
        raise ConfigError(f"unknown method {method!r}")

    if per_sample:
        return per
    return float(per.mean())


def _scatter_columns(target, idx, vals):
    np.add.at(target.T, idx, vals.T)


def _cp_core_grads(x, y, bias, factors, coeff, scale):
    """Squared loss and gradients of ``scale * V (coeff * z) + bias``.

    ``coeff`` is the per-component coefficient, either shared across the
    batch (shape ``(R,)``) or per sample (shape ``(B, R)``); the same
    broadcasting covers both.
    """
    b = x.shape[0]
    fin, v = factors[:-1], factors[-1]
    z = x.reshape(b, -1) @ khatri_rao(fin)
    yhat = scale * ((z * coeff) @ v.T) + bias
    e = yhat - y
    obj = float((e * e).sum() / b)

    db = (2.0 / b) * e.sum(axis=0)
    dv = (2.0 * scale / b) * (e.T @ (z * coeff))
    wrow = (2.0 * scale / b) * ((e @ v) * coeff)  # (B, R) per-sample weights
    dfin = []
    for k in range(len(fin)):
        others = fin[:k] + fin[k + 1 :]
        xk = np.moveaxis(x, k + 1, 1).reshape(b, x.shape[k + 1], -1)
        krm = khatri_rao(others) if others else np.ones((1, z.shape[1]))
        mk = np.matmul(xk, krm)  # (B, I_k, R)
        dfin.append(np.einsum("bir,br->ir", mk, wrow))
    return obj, dfin, dv, db


def _cp_objective_grads(model, x, y, draw, objective):
    kt = model.weight
    lam = kt.effective_weights()

    if objective == "deterministic" or draw is None or draw.scheme == "none":
        factors, coeff, scale = kt.factors, lam, 1.0
        idx = None
    elif draw.scheme == "bernoulli":
        if not draw.tied:
            raise ConfigError("Kruskal weights need a tied draw")
        factors, coeff = kt.factors, lam * draw.mask(0)
        scale = _sketch_scale(model, draw)
        idx = None
    else:  # replacement: gather components, keep duplicates
        if not draw.tied:
            raise ConfigError("Kruskal weights need a tied draw")
        idx = draw.indices(0)
        factors = [f[:, idx] for f in kt.factors]
        coeff = lam[idx]
        scale = _sketch_scale(model, draw)

    obj, dfin, dv, db = _cp_core_grads(x, y, model.bias, factors, coeff, scale)

    if idx is not None:
        full = [np.zeros_like(f) for f in kt.factors]
        for tgt, g in zip(full[:-1], dfin):
            _scatter_columns(tgt, idx, g)
        _scatter_columns(full[-1], idx, dv)
        dfin, dv = full[:-1], full[-1]

    dfactors = list(dfin) + [dv]
    if objective == "deterministic":
        obj += cp_dropout_penalty(kt, model.sketch.rate)
        for g, pg in zip(dfactors, _penalty_grads(kt, model.sketch.rate)):
            g += pg
    return obj, Gradients(dfactors, None, db)


def sample_masked_objective_grads(model, x, y, masks):
    """Stochastic objective and gradients with one Bernoulli mask per sample.

    ``masks`` is a 0/1 matrix of shape ``(batch, rank)``; row ``s`` masks the
    components used for sample ``s``.  The sketched contraction is rescaled
    exactly as in :func:`forward_sketched`.  Defined for Kruskal weights.
    """
    if not model.is_kruskal:
        raise UnsupportedDecompositionError(
            "per-sample masking is defined for Kruskal weights only"
        )
    x = _check_batch(model, x)
    y = as_tensor(y)
    masks = as_tensor(masks)
    if masks.shape != (x.shape[0], model.weight.rank):
        raise ShapeError(
            f"masks {masks.shape} do not match "
            f"({x.shape[0]}, {model.weight.rank})"
        )
    scale = 1.0 / model.sketch.rate if model.scale_mode == "inverted" else 1.0
    coeff = model.weight.effective_weights() * masks
    obj, dfin, dv, db = _cp_core_grads(
        x, y, model.bias, model.weight.factors, coeff, scale
    )
    return obj, Gradients(list(dfin) + [dv], None, db)


def _tucker_objective_grads(model, x, y, draw, scale):
    tt = model.weight
    bias = model.bias
    b = x.shape[0]

    if draw is None or draw.scheme == "none":
        us, core = tt.factors, tt.core
        masks = idxs = None
    elif draw.scheme == "bernoulli":
        sk = apply_sketch_tucker(tt, draw)
        us, core = sk.factors, sk.core
        masks, idxs = draw.per_mode, None
    else:
        sk = apply_sketch_tucker(tt, draw)
        us, core = sk.factors, sk.core
        masks, idxs = None, draw.per_mode

    fin, v = us[:-1], us[-1]
    c = x
    for f in fin:
        c = np.tensordot(c, f, axes=([1], [0]))
    c2 = c.reshape(b, -1)
    g_out = unfold(core, core.ndim - 1)
    s = c2 @ g_out.T
    yhat = scale * (s @ v.T) + bias
    e = yhat - y
    obj = float((e * e).sum() / b)

    db = (2.0 / b) * e.sum(axis=0)
    dv = (2.0 * scale / b) * (e.T @ s)
    ds = (2.0 * scale / b) * (e @ v)  # (B, R_out)
    dcore = fold(ds.T @ c2, core.ndim - 1, core.shape)
    h = (ds @ g_out).reshape(c.shape)  # (B, R_0, ..., R_{N-1})
    dfin = []
    for k in range(len(fin)):
        p = np.moveaxis(x, k + 1, 1)
        for j, f in enumerate(fin):
            if j != k:
                p = np.tensordot(p, f, axes=([2], [0]))
        hm = np.moveaxis(h, k + 1, 1)
        axes = ([0] + list(range(2, p.ndim)), [0] + list(range(2, hm.ndim)))
        dfin.append(np.tensordot(p, hm, axes=axes))
    dfactors = list(dfin) + [dv]

    if masks is not None:
        dfactors = [g * m[None, :] for g, m in zip(dfactors, masks)]
        full_core = dcore
        for k, m in enumerate(masks):
            full_core = full_core * m.reshape(
                (1,) * k + (-1,) + (1,) * (tt.order - k - 1)
            )
        dcore = full_core
    elif idxs is not None:
        full = [np.zeros_like(f) for f in tt.factors]
        for tgt, g, idx in zip(full, dfactors, idxs):
            _scatter_columns(tgt, idx, g)
        dfactors = full
        full_core = np.zeros_like(tt.core)
        np.add.at(full_core, np.ix_(*idxs), dcore)
        dcore = full_core

    return obj, Gradients(dfactors, dcore, db)


def objective_and_grads(model, x, y, draw=None, objective="stochastic"):
    """Objective value and exact gradients in one pass.

    ``stochastic`` differentiates the (optionally sketched and scaled)
    squared loss at the given fixed draw; ``deterministic`` differentiates
    the plain squared loss plus :func:`cp_dropout_penalty` and is defined
    for Kruskal weights only.
    """
    if objective not in OBJECTIVES:
        raise ConfigError(f"unknown objective {objective!r}")
    x = _check_batch(model, x)
    y = as_tensor(y)
    if y.shape != (x.shape[0], model.output_dim):
        raise ShapeError(
            f"targets {y.shape} do not match ({x.shape[0]}, {model.output_dim})"
        )
    if model.is_kruskal:
        return _cp_objective_grads(model, x, y, draw, objective)
    if objective == "deterministic":
        raise UnsupportedDecompositionError(
            "the deterministic objective is defined for Kruskal weights only"
        )
    return _tucker_objective_grads(model, x, y, draw, _sketch_scale(model, draw))


def backward(model, x, y_true, draw=None, objective="stochastic"):
    """Gradients of the selected objective; see :func:`objective_and_grads`."""
    _, grads = objective_and_grads(model, x, y_true, draw, objective)
    return grads
