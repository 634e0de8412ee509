#
# file: src/utils/nn/training.py
#
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..data import LabeledDataset, one_hot
from ..debug_utils import debug_print
from ..errors import ArgumentError, DivergenceError, ShapeError
from .mlp import Head, MlpSpec, ModelParams, raw_loss, raw_loss_and_grad

MAX_SEED = 2**64


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    learning_rate: float = 0.05
    seed: int = 42

    def __post_init__(self):
        if self.epochs < 1:
            raise ArgumentError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        # lr == 0 is allowed and returns the initialization unchanged.
        if not (np.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ArgumentError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.seed < MAX_SEED:
            raise ArgumentError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream; identical on every platform for a given seed."""
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(seed: int, *keys: int) -> int:
    """Independent child seed for (seed, keys...), e.g. a restart or sweep cell."""
    state = np.random.SeedSequence([seed, *keys]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def batch_arrays(spec: MlpSpec, data: LabeledDataset) -> tuple[np.ndarray, np.ndarray]:
    """(x, y) for a labeled dataset; the mse head regresses one-hot labels."""
    if data.dims != spec.input_width:
        raise ShapeError(
            f"dataset width {data.dims} does not match input width {spec.input_width}"
        )
    if spec.head is Head.MSE:
        return data.features, one_hot(data.labels, spec.output_width)
    return data.features, data.labels


def sgd_fit(
    init: ModelParams,
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> ModelParams:
    """Plain minibatch SGD from `init`; batches are reshuffled every epoch."""
    spec = init.spec
    values = np.array(init.values)
    n = len(x)
    if n == 0:
        raise ArgumentError("cannot train on an empty dataset")

    initial_loss = raw_loss(spec, values, x, y)
    debug_print(f"sgd_fit: {spec.layer_widths} initial loss={initial_loss:.6f}")
    epoch_loss = initial_loss
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, grad = raw_loss_and_grad(spec, values, x[batch], y[batch])
            values -= cfg.learning_rate * grad
        with np.errstate(over="ignore", invalid="ignore"):
            epoch_loss = raw_loss(spec, values, x, y) if np.all(np.isfinite(values)) else np.nan
        if not np.isfinite(epoch_loss):
            raise DivergenceError(epoch)
    debug_print(f"sgd_fit: final loss={epoch_loss:.6f} after {cfg.epochs} epochs")
    return init.with_values(values)


def sgd_train(
    spec: MlpSpec,
    data: LabeledDataset,
    cfg: TrainConfig,
    rng: Optional[np.random.Generator] = None,
) -> ModelParams:
    """
    Initializes a model from the stream and trains it on `data`.

    When `rng` is omitted the stream is seeded from `cfg.seed`, which makes
    the result a pure function of (spec, data, cfg).
    """
    if len(data) == 0:
        raise ArgumentError("cannot train on an empty dataset")
    x, y = batch_arrays(spec, data)
    rng = rng if rng is not None else make_rng(cfg.seed)
    init = ModelParams.init(spec, rng)
    return sgd_fit(init, x, y, cfg, rng)


def shard_seed(seed: int, shard: int) -> int:
    """Seed of SISA shard `shard`; shard 0 trains with the master seed itself."""
    return (seed + shard) % MAX_SEED
