from .checkpoint import load_checkpoint, save_checkpoint
from .mlp import (
    Head,
    MlpSpec,
    ModelParams,
    accuracy,
    central_difference,
    finite_diff_grad,
    loss_and_grad,
    loss_hessian,
    mean_loss,
    mlp_forward,
    per_sample_grads,
    predict_labels,
    softmax,
)
from .training import (
    TrainConfig,
    batch_arrays,
    derive_seed,
    make_rng,
    sgd_fit,
    sgd_train,
    shard_seed,
)

__all__ = [
    "Head",
    "MlpSpec",
    "ModelParams",
    "TrainConfig",
    "accuracy",
    "batch_arrays",
    "central_difference",
    "derive_seed",
    "finite_diff_grad",
    "load_checkpoint",
    "loss_and_grad",
    "loss_hessian",
    "make_rng",
    "mean_loss",
    "mlp_forward",
    "per_sample_grads",
    "predict_labels",
    "save_checkpoint",
    "sgd_fit",
    "sgd_train",
    "shard_seed",
    "softmax",
]
