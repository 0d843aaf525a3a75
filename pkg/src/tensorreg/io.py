"""Plain-text serialization: tensors, decompositions, checkpoints, curves.

A tensor block is two lines: the space-separated shape (empty for an
order-0 tensor) and the row-major data printed with 17 significant digits,
which round-trips float64 exactly.  Decomposition blocks start with a tag
line (``kruskal <n_factors>`` or ``tucker <n_factors>``); Kruskal blocks
then carry a weights line (``none`` or the values), Tucker blocks the core
tensor, followed by one tensor block per factor.  A model checkpoint is a
one-line header (scheme, keep rate, scale mode, full weight shape) followed
by the weight decomposition and the bias.
"""

from __future__ import annotations

import numpy as np

from .decomp import KruskalTensor, SketchSpec, TuckerTensor
from .errors import ConfigError, ShapeError
from .layer import TensorRegressionLayer
from .tensor import as_tensor

__all__ = [
    "format_floats",
    "write_tensor",
    "read_tensor",
    "save_tensor",
    "load_tensor",
    "write_decomposition",
    "read_decomposition",
    "save_model",
    "load_model",
    "write_curve_csv",
    "save_dataset",
    "load_dataset",
]


def format_floats(values):
    return " ".join(f"{v:.17g}" for v in values)


def write_tensor(f, t):
    t = as_tensor(t)
    f.write(" ".join(str(d) for d in t.shape) + "\n")
    f.write(format_floats(t.reshape(-1)) + "\n")


def _read_nonempty_allowed(f):
    line = f.readline()
    if line == "":
        raise ConfigError("unexpected end of file")
    return line.rstrip("\n")


def read_tensor(f):
    shape_line = _read_nonempty_allowed(f)
    shape = tuple(int(s) for s in shape_line.split())
    data_line = _read_nonempty_allowed(f)
    data = np.array([float(v) for v in data_line.split()])
    return as_tensor(data, shape)


def save_tensor(path, t):
    with open(path, "w", newline="\n") as f:
        write_tensor(f, t)


def load_tensor(path):
    with open(path) as f:
        return read_tensor(f)


def write_decomposition(f, d):
    if isinstance(d, KruskalTensor):
        f.write(f"kruskal {len(d.factors)}\n")
        if d.weights is None:
            f.write("none\n")
        else:
            f.write(format_floats(d.weights) + "\n")
        for fac in d.factors:
            write_tensor(f, fac)
    elif isinstance(d, TuckerTensor):
        f.write(f"tucker {len(d.factors)}\n")
        write_tensor(f, d.core)
        for fac in d.factors:
            write_tensor(f, fac)
    else:
        raise ConfigError(f"cannot serialize {type(d).__name__}")


def read_decomposition(f):
    tag = _read_nonempty_allowed(f).split()
    if len(tag) != 2:
        raise ConfigError(f"malformed decomposition tag line {tag!r}")
    kind, count = tag[0], int(tag[1])
    if count < 1:
        raise ConfigError("a decomposition needs at least one factor")
    if kind == "kruskal":
        weights_line = _read_nonempty_allowed(f)
        weights = (
            None
            if weights_line.strip() == "none"
            else np.array([float(v) for v in weights_line.split()])
        )
        factors = [read_tensor(f) for _ in range(count)]
        return KruskalTensor(factors, weights)
    if kind == "tucker":
        core = read_tensor(f)
        factors = [read_tensor(f) for _ in range(count)]
        return TuckerTensor(core, factors)
    raise ConfigError(f"unknown decomposition kind {kind!r}")


def save_model(path, model):
    with open(path, "w", newline="\n") as f:
        shape = ",".join(str(d) for d in model.weight.shape)
        f.write(
            f"layer scheme={model.sketch.scheme} rate={model.sketch.rate:.17g} "
            f"scale={model.scale_mode} tied={int(model.sketch.tie_modes)} "
            f"shape={shape}\n"
        )
        write_decomposition(f, model.weight)
        write_tensor(f, model.bias)


def load_model(path):
    with open(path) as f:
        header = _read_nonempty_allowed(f).split()
        if not header or header[0] != "layer":
            raise ConfigError(f"not a model checkpoint: {path}")
        fields = {}
        for tok in header[1:]:
            key, _, value = tok.partition("=")
            if not value:
                raise ConfigError(f"malformed header field {tok!r}")
            fields[key] = value
        try:
            sketch = SketchSpec(
                fields["scheme"], float(fields["rate"]), bool(int(fields["tied"]))
            )
            scale_mode = fields["scale"]
            shape = tuple(int(d) for d in fields["shape"].split(","))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"malformed checkpoint header: {exc}") from exc
        weight = read_decomposition(f)
        bias = read_tensor(f)
    if weight.shape != shape:
        raise ConfigError(
            f"checkpoint header shape {shape} does not match weight {weight.shape}"
        )
    try:
        return TensorRegressionLayer(weight, bias, sketch=sketch, scale_mode=scale_mode)
    except ShapeError as exc:
        raise ConfigError(f"inconsistent checkpoint: {exc}") from exc


def write_curve_csv(f, curve):
    f.write("epoch,objective,train_loss,test_mse,seconds\n")
    rows = zip(
        curve.epoch, curve.objective, curve.train_loss, curve.test_mse, curve.seconds
    )
    for epoch, obj, train, test, secs in rows:
        f.write(
            f"{epoch},{obj:.17g},{train:.17g},{test:.17g},{secs:.17g}\n"
        )


def save_dataset(path, x, y):
    """Text dump of a (activations, targets) pair as two tensor blocks."""
    with open(path, "w", newline="\n") as f:
        write_tensor(f, x)
        write_tensor(f, y)


def load_dataset(path):
    with open(path) as f:
        return read_tensor(f), read_tensor(f)
