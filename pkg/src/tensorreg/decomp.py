"""Factorized tensor types and randomized rank sketching.

Two decomposed forms are supported: :class:`KruskalTensor` (sum of rank-1
outer products, optionally weighted) and :class:`TuckerTensor` (core tensor
projected along every mode).  Rank sketching draws either per-component
Bernoulli keep masks or with-replacement column selections and applies them
by masking / gathering factor columns and core slices; the underlying
selection matrices are never materialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import as_tensor, khatri_rao, mode_dot

__all__ = [
    "KruskalTensor",
    "TuckerTensor",
    "SketchSpec",
    "SketchDraw",
    "kruskal_to_full",
    "tucker_to_full",
    "super_diagonal_core",
    "draw_sketch",
    "apply_sketch_kruskal",
    "apply_sketch_tucker",
]

SCHEMES = ("none", "bernoulli", "replacement")


@dataclass
class KruskalTensor:
    """Rank-``R`` sum of outer products.

    Parameters
    ----------
    factors : list of ndarray
        One ``I_k x R`` matrix per mode; all must share the column count.
    weights : ndarray, optional
        Per-component weights of length ``R``.  ``None`` is equivalent to
        all ones.
    """

    factors: list
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.factors = [as_tensor(f) for f in self.factors]
        if not self.factors:
            raise ShapeError("a Kruskal tensor needs at least one factor")
        for f in self.factors:
            if f.ndim != 2:
                raise ShapeError(f"factors must be matrices, got order {f.ndim}")
        r = self.factors[0].shape[1]
        if r < 1:
            raise ShapeError("rank must be at least 1")
        if any(f.shape[1] != r for f in self.factors):
            raise ShapeError(
                f"factor ranks disagree: {[f.shape[1] for f in self.factors]}"
            )
        if self.weights is not None:
            self.weights = as_tensor(self.weights)
            if self.weights.shape != (r,):
                raise ShapeError(
                    f"weights must have length {r}, got shape {self.weights.shape}"
                )

    @property
    def rank(self):
        return self.factors[0].shape[1]

    @property
    def shape(self):
        return tuple(f.shape[0] for f in self.factors)

    @property
    def order(self):
        return len(self.factors)

    def effective_weights(self):
        """Weights vector with ``None`` normalized to all ones."""
        if self.weights is None:
            return np.ones(self.rank)
        return self.weights


@dataclass
class TuckerTensor:
    """Core tensor plus one projection factor per mode."""

    core: np.ndarray
    factors: list

    def __post_init__(self):
        self.core = as_tensor(self.core)
        self.factors = [as_tensor(f) for f in self.factors]
        if self.core.ndim != len(self.factors):
            raise ShapeError(
                f"core order {self.core.ndim} does not match "
                f"{len(self.factors)} factors"
            )
        for k, f in enumerate(self.factors):
            if f.ndim != 2:
                raise ShapeError(f"factors must be matrices, got order {f.ndim}")
            if f.shape[1] != self.core.shape[k]:
                raise ShapeError(
                    f"factor {k} has {f.shape[1]} columns but core mode {k} "
                    f"has size {self.core.shape[k]}"
                )

    @property
    def ranks(self):
        return self.core.shape

    @property
    def shape(self):
        return tuple(f.shape[0] for f in self.factors)

    @property
    def order(self):
        return len(self.factors)


@dataclass(frozen=True)
class SketchSpec:
    """Description of one rank-sketching scheme.

    ``scheme`` is one of ``"none"``, ``"bernoulli"`` (per-component keep
    masks) or ``"replacement"`` (uniform column selection with replacement).
    ``rate`` is the keep probability / keep rate in ``(0, 1]``.  With
    ``tie_modes`` a single draw is shared by every mode, which is required
    for Kruskal weights; independent per-mode draws are the Tucker case.
    """

    scheme: str = "none"
    rate: float = 1.0
    tie_modes: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown sketch scheme {self.scheme!r}")
        if not 0.0 < self.rate <= 1.0:
            raise ConfigError(f"keep rate must be in (0, 1], got {self.rate}")


@dataclass
class SketchDraw:
    """One realized sketch: per-mode keep masks or index selections.

    For ``bernoulli`` each entry of ``per_mode`` is a 0/1 float vector of
    length ``R_k``; for ``replacement`` it is an int index array with values
    in ``[0, R_k)``.  Tied draws share the same underlying array object.
    """

    scheme: str
    per_mode: tuple | None
    tied: bool = False

    def mask(self, k):
        return self.per_mode[k]

    def indices(self, k):
        return self.per_mode[k]


def _keep_count(rate, rank):
    # round-half-up so the count is stable across platforms
    return max(1, int(math.floor(rate * rank + 0.5)))


def draw_sketch(spec, ranks, rng):
    """Draw one sketch realization for the given per-mode ranks.

    Deterministic in ``(rng state, spec, ranks)``.  Tied draws consume a
    single stream draw and are shared by all modes.
    """
    if not isinstance(spec, SketchSpec):
        raise ConfigError(f"expected a SketchSpec, got {type(spec).__name__}")
    ranks = tuple(int(r) for r in ranks)
    if any(r < 1 for r in ranks):
        raise ConfigError(f"ranks must be positive, got {ranks}")
    if spec.scheme == "none":
        return SketchDraw("none", None, spec.tie_modes)

    if spec.tie_modes and len(set(ranks)) != 1:
        raise ConfigError(f"tied draws need equal ranks per mode, got {ranks}")

    if spec.scheme == "bernoulli":
        if spec.tie_modes:
            mask = (rng.random(ranks[0]) < spec.rate).astype(np.float64)
            per_mode = (mask,) * len(ranks)
        else:
            per_mode = tuple(
                (rng.random(r) < spec.rate).astype(np.float64) for r in ranks
            )
        return SketchDraw("bernoulli", per_mode, spec.tie_modes)

    if spec.tie_modes:
        idx = rng.integers(0, ranks[0], size=_keep_count(spec.rate, ranks[0]))
        per_mode = (idx,) * len(ranks)
    else:
        per_mode = tuple(
            rng.integers(0, r, size=_keep_count(spec.rate, r)) for r in ranks
        )
    return SketchDraw("replacement", per_mode, spec.tie_modes)


def apply_sketch_kruskal(kt, draw):
    """Sketch a Kruskal tensor with a tied draw.

    Bernoulli masking multiplies the weights vector by the mask (a masked
    component contributes nothing); replacement gathers the selected
    components, keeping duplicates, so the result has rank ``K``.
    """
    if draw.scheme == "none":
        return kt
    if not draw.tied:
        raise ConfigError("Kruskal sketching requires a tied draw (one per rank)")
    sel = draw.per_mode[0]
    if draw.scheme == "bernoulli":
        if sel.shape != (kt.rank,):
            raise ShapeError(
                f"mask length {sel.shape} does not match rank {kt.rank}"
            )
        return KruskalTensor(kt.factors, kt.effective_weights() * sel)
    if np.any(sel < 0) or np.any(sel >= kt.rank):
        raise ShapeError("selection indices out of range")
    return KruskalTensor(
        [f[:, sel] for f in kt.factors], kt.effective_weights()[sel]
    )


def apply_sketch_tucker(tt, draw):
    """Sketch a Tucker tensor with per-mode masks or selections.

    Bernoulli zeroes masked factor columns and the matching core slices;
    replacement gathers the selected columns and core slices, shrinking the
    ranks to the per-mode keep counts.
    """
    if draw.scheme == "none":
        return tt
    if len(draw.per_mode) != tt.order:
        raise ShapeError(
            f"draw covers {len(draw.per_mode)} modes but the tensor has {tt.order}"
        )
    if draw.scheme == "bernoulli":
        core = tt.core.copy()
        for k, mask in enumerate(draw.per_mode):
            if mask.shape != (tt.ranks[k],):
                raise ShapeError(
                    f"mask for mode {k} has length {mask.shape[0]}, "
                    f"expected {tt.ranks[k]}"
                )
            core *= mask.reshape((1,) * k + (-1,) + (1,) * (tt.order - k - 1))
        factors = [f * m[None, :] for f, m in zip(tt.factors, draw.per_mode)]
        return TuckerTensor(core, factors)
    for k, idx in enumerate(draw.per_mode):
        if np.any(idx < 0) or np.any(idx >= tt.ranks[k]):
            raise ShapeError(f"selection indices for mode {k} out of range")
    core = tt.core[np.ix_(*draw.per_mode)]
    factors = [f[:, idx] for f, idx in zip(tt.factors, draw.per_mode)]
    return TuckerTensor(core, factors)


def kruskal_to_full(kt):
    """Materialize a Kruskal tensor as a dense array."""
    vec = khatri_rao(kt.factors) @ kt.effective_weights()
    return vec.reshape(kt.shape)


def tucker_to_full(tt):
    """Materialize a Tucker tensor by applying every projection factor."""
    out = tt.core
    for k, f in enumerate(tt.factors):
        out = mode_dot(out, f, k)
    return out


def super_diagonal_core(weights, n_modes):
    """Core of shape ``(R, ..., R)`` with ``weights`` on the super-diagonal.

    Turning a Kruskal tensor into the equivalent Tucker form uses this core
    together with the unchanged factors.
    """
    weights = as_tensor(weights)
    if weights.ndim != 1 or weights.size < 1:
        raise ShapeError("weights must be a non-empty vector")
    n_modes = int(n_modes)
    if n_modes < 1:
        raise ShapeError("need at least one mode")
    r = weights.size
    core = np.zeros((r,) * n_modes)
    core[tuple(np.arange(r) for _ in range(n_modes))] = weights
    return core
