"""Self-contained oracle checks, runnable from the CLI.

Every check re-derives its expected values independently of the code path
it validates: index maps are applied by exhaustive loops, contractions by
explicit summation, sketches by materialized selection matrices, gradients
by central finite differences, and expectations by exact mask enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decomp import (
    KruskalTensor,
    SketchDraw,
    SketchSpec,
    TuckerTensor,
    apply_sketch_kruskal,
    apply_sketch_tucker,
    draw_sketch,
    kruskal_to_full,
    super_diagonal_core,
    tucker_to_full,
)
from .layer import (
    Gradients,
    backward,
    clone_model,
    expected_dropout_loss,
    forward,
    forward_sketched,
    grad_arrays,
    init_model,
    iter_params,
    objective_and_grads,
)
from .tensor import fold, inner_contract, khatri_rao, mode_dot, unfold, vectorize

__all__ = ["CheckResult", "run_checks", "numerical_gradients", "max_grad_mismatch"]


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def numerical_gradients(model, objective_fn, h=1e-5):
    """Central finite differences of ``objective_fn(model)`` per parameter.

    Perturbs every entry of every parameter array in place, so the closure
    must read the model's current parameters on each call.
    """
    grads = []
    for arr in iter_params(model):
        g = np.zeros_like(arr)
        for i in range(arr.size):  # .flat writes through for any layout
            orig = arr.flat[i]
            arr.flat[i] = orig + h
            fp = objective_fn(model)
            arr.flat[i] = orig - h
            fm = objective_fn(model)
            arr.flat[i] = orig
            g.flat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    if model.is_kruskal:
        return Gradients(grads[:-1], None, grads[-1])
    return Gradients(grads[:-2], grads[-2], grads[-1])


def max_grad_mismatch(analytic, numeric):
    """Worst relative disagreement between two gradient sets.

    The denominator is floored at 1 so near-zero entries are compared
    absolutely; instances are built at unit scale.
    """
    worst = 0.0
    for a, n in zip(grad_arrays(analytic), grad_arrays(numeric), strict=True):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def _all_masks(r):
    for bits in range(2**r):
        yield np.array([(bits >> j) & 1 for j in range(r)], dtype=np.float64)


def _check_unfold_map():
    rng = np.random.default_rng(11)
    shape = (2, 3, 4)
    t = rng.standard_normal(shape)
    for mode in range(3):
        m = unfold(t, mode)
        for index in np.ndindex(*shape):
            rest = [k for k in range(3) if k != mode]
            col = 0
            for k in rest:
                col = col * shape[k] + index[k]
            if m[index[mode], col] != t[index]:
                return False, f"mode {mode} entry {index} misplaced"
    return True, "index map matches exhaustive loop, shape (2,3,4), all modes"


def _check_fold_roundtrip():
    rng = np.random.default_rng(12)
    t = rng.standard_normal((3, 2, 5))
    for mode in range(3):
        if not np.array_equal(fold(unfold(t, mode), mode, t.shape), t):
            return False, f"roundtrip failed for mode {mode}"
    return True, "fold(unfold(t, n), n) bitwise equal for all modes"


def _check_vectorize_map():
    rng = np.random.default_rng(13)
    shape = (3, 3, 3)
    t = rng.standard_normal(shape)
    v = vectorize(t)
    for index in np.ndindex(*shape):
        j = 0
        for k in range(3):
            j = j * shape[k] + index[k]
        if v[j] != t[index]:
            return False, f"entry {index} misplaced"
    return True, "vectorization offsets match exhaustive loop"


def _check_mode_dot():
    rng = np.random.default_rng(14)
    t = rng.standard_normal((3, 4, 2))
    m = rng.standard_normal((5, 4))
    got = mode_dot(t, m, 1)
    want = np.zeros((3, 5, 2))
    for i in range(3):
        for r in range(5):
            for k in range(2):
                want[i, r, k] = sum(m[r, j] * t[i, j, k] for j in range(4))
    err = float(np.max(np.abs(got - want)))
    return err <= 1e-12, f"max deviation from direct summation {err:.3e}"


def _check_inner_contract():
    rng = np.random.default_rng(15)
    x = rng.standard_normal((4, 2, 3))
    w = rng.standard_normal((2, 3, 5))
    got = inner_contract(x, w, 2)
    want = np.zeros((4, 5))
    for a in range(4):
        for b in range(5):
            want[a, b] = sum(
                x[a, i, j] * w[i, j, b] for i in range(2) for j in range(3)
            )
    err = float(np.max(np.abs(got - want)))
    return err <= 1e-12, f"max deviation from quadruple sum {err:.3e}"


def _check_khatri_rao():
    rng = np.random.default_rng(16)
    factors = [rng.standard_normal((d, 2)) for d in (2, 3, 2)]
    lam = rng.standard_normal(2)
    kt = KruskalTensor(factors, lam)
    err = float(
        np.max(np.abs(vectorize(kruskal_to_full(kt)) - khatri_rao(factors) @ lam))
    )
    return err <= 1e-12, f"vec(full) vs khatri_rao @ weights deviation {err:.3e}"


def _check_cp_as_tucker():
    rng = np.random.default_rng(17)
    factors = [rng.standard_normal((d, 3)) for d in (2, 4, 3)]
    lam = rng.standard_normal(3)
    kt = KruskalTensor(factors, lam)
    tt = TuckerTensor(super_diagonal_core(lam, 3), factors)
    err = float(np.max(np.abs(kruskal_to_full(kt) - tucker_to_full(tt))))
    return err <= 1e-12, f"super-diagonal core equivalence deviation {err:.3e}"


def _check_sketch_explicit_cp():
    rng = np.random.default_rng(18)
    r = 4
    factors = [rng.standard_normal((d, r)) for d in (2, 3, 2)]
    kt = KruskalTensor(factors)
    worst = 0.0
    for mask in _all_masks(r):
        draw = SketchDraw("bernoulli", (mask,) * 3, tied=True)
        got = kruskal_to_full(apply_sketch_kruskal(kt, draw))
        masked = KruskalTensor([f * mask[None, :] for f in factors])
        worst = max(worst, float(np.max(np.abs(got - kruskal_to_full(masked)))))
    return worst <= 1e-12, f"all {2**r} masks vs explicit masking, worst {worst:.3e}"


def _check_sketch_explicit_tucker():
    rng = np.random.default_rng(19)
    ranks = (2, 2, 3)
    core = rng.standard_normal(ranks)
    factors = [rng.standard_normal((d, r)) for d, r in zip((3, 2, 4), ranks)]
    tt = TuckerTensor(core, factors)
    worst = 0.0
    for bits in range(2 ** sum(ranks)):
        masks, off = [], 0
        for r in ranks:
            masks.append(
                np.array([(bits >> (off + j)) & 1 for j in range(r)], dtype=float)
            )
            off += r
        draw = SketchDraw("bernoulli", tuple(masks), tied=False)
        got = tucker_to_full(apply_sketch_tucker(tt, draw))
        ref = core.copy()
        for k, m in enumerate(masks):
            ref = mode_dot(ref, np.diag(m), k)
        ref = TuckerTensor(ref, [f @ np.diag(m).T for f, m in zip(factors, masks)])
        worst = max(worst, float(np.max(np.abs(got - tucker_to_full(ref)))))
    return worst <= 1e-12, f"all joint masks vs explicit diag matrices, worst {worst:.3e}"


def _check_sketch_replacement():
    rng = np.random.default_rng(20)
    ranks = (3, 2, 4)
    core = rng.standard_normal(ranks)
    factors = [rng.standard_normal((d, r)) for d, r in zip((2, 3, 2), ranks)]
    tt = TuckerTensor(core, factors)
    spec = SketchSpec("replacement", 0.6)
    worst = 0.0
    for _ in range(10):
        draw = draw_sketch(spec, ranks, rng)
        got = tucker_to_full(apply_sketch_tucker(tt, draw))
        sel = [np.eye(r)[idx] for r, idx in zip(ranks, draw.per_mode)]
        ref_core = core
        for k, s in enumerate(sel):
            ref_core = mode_dot(ref_core, s, k)
        ref = TuckerTensor(ref_core, [f @ s.T for f, s in zip(factors, sel)])
        worst = max(worst, float(np.max(np.abs(got - tucker_to_full(ref)))))
    return worst <= 1e-12, f"10 draws vs explicit selection matrices, worst {worst:.3e}"


def _check_unbiased_scaling():
    rng = np.random.default_rng(21)
    r, rate = 5, 0.5
    factors = [rng.standard_normal((d, r)) for d in (2, 3, 2)]
    kt = KruskalTensor(factors)
    mean = np.zeros(kt.shape)
    for mask in _all_masks(r):
        kept = int(mask.sum())
        p = rate**kept * (1 - rate) ** (r - kept)
        draw = SketchDraw("bernoulli", (mask,) * 3, tied=True)
        mean += p / rate * kruskal_to_full(apply_sketch_kruskal(kt, draw))
    err = float(np.max(np.abs(mean - kruskal_to_full(kt))))
    return err <= 1e-10, f"enumerated (1/rate)-scaled mean deviation {err:.3e}"


def _check_forward_factored():
    rng = np.random.default_rng(22)
    model = init_model((3, 2), 2, 2, rng=rng)
    model.bias[:] = rng.standard_normal(2)
    x = rng.standard_normal((5, 3, 2))
    got = forward(model, x)
    full = kruskal_to_full(model.weight)
    want = inner_contract(x, full, 2) + model.bias
    err = float(np.max(np.abs(got - want)))
    return err <= 1e-10, f"factored vs materialized forward deviation {err:.3e}"


def _check_forward_unfolded():
    rng = np.random.default_rng(23)
    model = init_model((3, 4), 2, 3, rng=rng)
    x = rng.standard_normal((4, 3, 4))
    got = forward(model, x)
    w_out = unfold(kruskal_to_full(model.weight), 2)
    want = x.reshape(4, -1) @ w_out.T + model.bias
    err = float(np.max(np.abs(got - want)))
    return err <= 1e-10, f"output-mode unfolded form deviation {err:.3e}"


def _check_enum_vs_closed():
    rng = np.random.default_rng(24)
    worst = 0.0
    for rate in (0.3, 0.5, 0.9):
        model = init_model(
            (3, 2), 2, 4, sketch=SketchSpec("bernoulli", rate, tie_modes=True), rng=rng
        )
        model.bias[:] = rng.standard_normal(2)
        x = rng.standard_normal((6, 3, 2))
        y = rng.standard_normal((6, 2))
        enum = expected_dropout_loss(model, x, y, method="enumerate")
        closed = expected_dropout_loss(model, x, y, method="closed_form")
        worst = max(worst, abs(enum - closed) / abs(closed))
    return worst <= 1e-10, f"enumeration vs closed form, worst relative {worst:.3e}"


def _fd_case(model, x, y, draw, objective, corrupt=None, tol=1e-5):
    analytic = backward(model, x, y, draw, objective)
    if corrupt is not None:
        analytic = corrupt(analytic)
    probe = clone_model(model)

    def objective_fn(m):
        obj, _ = objective_and_grads(m, x, y, draw, objective)
        return obj

    numeric = numerical_gradients(probe, objective_fn)
    err = max_grad_mismatch(analytic, numeric)
    return err <= tol, err


def _check_grad_cp(corrupt=None):
    rng = np.random.default_rng(25)
    worst = 0.0
    for objective in ("stochastic", "deterministic"):
        model = init_model(
            (3, 2), 2, 3, sketch=SketchSpec("bernoulli", 0.6, tie_modes=True), rng=rng
        )
        model.bias[:] = rng.standard_normal(2)
        x = rng.standard_normal((4, 3, 2))
        y = rng.standard_normal((4, 2))
        draw = (
            draw_sketch(model.sketch, (3, 3, 3), rng)
            if objective == "stochastic"
            else None
        )
        ok, err = _fd_case(model, x, y, draw, objective, corrupt)
        worst = max(worst, err)
        if not ok:
            return False, f"worst relative gradient error {worst:.3e}"
    return True, f"both objectives, worst relative gradient error {worst:.3e}"


def _check_grad_tucker(corrupt=None):
    rng = np.random.default_rng(26)
    worst = 0.0
    for scheme, rate in (("none", 1.0), ("bernoulli", 0.6), ("replacement", 0.7)):
        sketch = SketchSpec(scheme, rate)
        model = init_model((3, 2), 2, (2, 2, 2), "tucker", sketch=sketch, rng=rng)
        model.bias[:] = rng.standard_normal(2)
        x = rng.standard_normal((4, 3, 2))
        y = rng.standard_normal((4, 2))
        draw = draw_sketch(sketch, model.weight.ranks, rng)
        ok, err = _fd_case(model, x, y, draw, "stochastic", corrupt)
        worst = max(worst, err)
        if not ok:
            return False, f"scheme {scheme}: relative gradient error {err:.3e}"
    return True, f"none/bernoulli/replacement, worst relative error {worst:.3e}"


def _check_theta_one_identity():
    rng = np.random.default_rng(27)
    sketch = SketchSpec("bernoulli", 1.0, tie_modes=True)
    model = init_model((4, 3), 2, 3, sketch=sketch, rng=rng)
    model.bias[:] = rng.standard_normal(2)
    x = rng.standard_normal((5, 4, 3))
    draw = draw_sketch(sketch, (3, 3, 3), rng)
    a = forward_sketched(model, x, draw)
    b = forward(model, x)
    err = float(np.max(np.abs(a - b)))
    ok = err <= 1e-12 and np.all(draw.mask(0) == 1.0)
    return ok, f"keep rate 1 sketched vs plain forward deviation {err:.3e}"


def _check_zero_mask():
    rng = np.random.default_rng(28)
    sketch = SketchSpec("bernoulli", 0.5, tie_modes=True)
    model = init_model((3, 3), 2, 3, sketch=sketch, rng=rng)
    model.bias[:] = rng.standard_normal(2)
    x = rng.standard_normal((4, 3, 3))
    draw = SketchDraw("bernoulli", (np.zeros(3),) * 3, tied=True)
    got = forward_sketched(model, x, draw)
    ok = np.array_equal(got, np.broadcast_to(model.bias, got.shape))
    return ok, "all-zero mask returns the bias exactly"


_CHECKS = (
    ("unfold-index-map", lambda c: _check_unfold_map()),
    ("fold-roundtrip", lambda c: _check_fold_roundtrip()),
    ("vectorize-index-map", lambda c: _check_vectorize_map()),
    ("mode-dot-oracle", lambda c: _check_mode_dot()),
    ("inner-contract-oracle", lambda c: _check_inner_contract()),
    ("khatri-rao-consistency", lambda c: _check_khatri_rao()),
    ("cp-as-tucker-superdiag", lambda c: _check_cp_as_tucker()),
    ("sketch-explicit-cp", lambda c: _check_sketch_explicit_cp()),
    ("sketch-explicit-tucker", lambda c: _check_sketch_explicit_tucker()),
    ("sketch-explicit-replacement", lambda c: _check_sketch_replacement()),
    ("sketch-unbiased-scaling", lambda c: _check_unbiased_scaling()),
    ("forward-factored-vs-full", lambda c: _check_forward_factored()),
    ("forward-unfolded-form", lambda c: _check_forward_unfolded()),
    ("enum-vs-closed-form", lambda c: _check_enum_vs_closed()),
    ("grad-fd-cp", _check_grad_cp),
    ("grad-fd-tucker", _check_grad_tucker),
    ("keep-rate-one-identity", lambda c: _check_theta_one_identity()),
    ("zero-mask-bias", lambda c: _check_zero_mask()),
)


def run_checks(name_filter=None, corrupt_gradients=None):
    """Run the oracle checks, optionally filtered by substring.

    ``corrupt_gradients`` is a test hook: a callable applied to the analytic
    gradients inside the gradient checks, used to prove the checks can fail.
    """
    results = []
    for name, fn in _CHECKS:
        if name_filter and name_filter not in name:
            continue
        ok, detail = fn(corrupt_gradients)
        results.append(CheckResult(name, bool(ok), detail))
    return results
