"""Low-rank tensor regression with randomized rank-dropout training."""

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
from .errors import (
    ConfigError,
    DivergedError,
    EnumerationLimitError,
    ModeError,
    ShapeError,
    UnsupportedDecompositionError,
)
from .estimator import TensorRegressor
from .layer import (
    Gradients,
    TensorRegressionLayer,
    backward,
    cp_dropout_penalty,
    expected_dropout_loss,
    forward,
    forward_sketched,
    init_model,
    mse_loss,
)
from .tensor import (
    fold,
    inner_contract,
    khatri_rao,
    mode_dot,
    unfold,
    vectorize,
)
from .training import (
    LossCurve,
    SyntheticSpec,
    TrainConfig,
    generate_synthetic,
    lr_at,
    run_experiment,
    sgd_step,
)

__version__ = "0.1.0"

__all__ = [
    "KruskalTensor",
    "TuckerTensor",
    "SketchSpec",
    "SketchDraw",
    "TensorRegressionLayer",
    "TensorRegressor",
    "Gradients",
    "LossCurve",
    "SyntheticSpec",
    "TrainConfig",
    "ShapeError",
    "ModeError",
    "ConfigError",
    "UnsupportedDecompositionError",
    "EnumerationLimitError",
    "DivergedError",
    "unfold",
    "fold",
    "vectorize",
    "mode_dot",
    "inner_contract",
    "khatri_rao",
    "kruskal_to_full",
    "tucker_to_full",
    "super_diagonal_core",
    "draw_sketch",
    "apply_sketch_kruskal",
    "apply_sketch_tucker",
    "forward",
    "forward_sketched",
    "mse_loss",
    "cp_dropout_penalty",
    "expected_dropout_loss",
    "backward",
    "init_model",
    "generate_synthetic",
    "sgd_step",
    "lr_at",
    "run_experiment",
]
