#
# file: src/utils/unlearning/ascent.py
#
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..data import LabeledDataset
from ..debug_utils import debug_print
from ..errors import ArgumentError, DivergenceError
from ..nn import ModelParams, accuracy, batch_arrays, loss_and_grad, mean_loss
from .unlearner import UnlearnRequest, Unlearner, UnlearnerKind, require_mlp


@dataclass(frozen=True)
class AscentStep:
    epoch: int
    params: ModelParams
    accuracies: dict[str, float]


def _accuracies(
    params: ModelParams, eval_sets: Mapping[str, LabeledDataset]
) -> dict[str, float]:
    return {
        name: accuracy(params, ds.features, ds.labels) if len(ds) else 0.0
        for name, ds in eval_sets.items()
    }


def ascent_unlearn(
    theta_t: ModelParams,
    forget_set: LabeledDataset,
    eval_sets: Mapping[str, LabeledDataset],
    epochs: int,
    lr: float,
) -> list[AscentStep]:
    """
    Full-batch gradient ascent on the forget-set loss.

    The trajectory starts with epoch 0 (θ_t itself) and holds one entry per
    ascent step, each with the accuracy on every evaluation set.
    """
    if epochs < 1:
        raise ArgumentError(f"epochs must be >= 1, got {epochs}")
    if lr < 0:
        raise ArgumentError(f"learning rate must be >= 0, got {lr}")
    if len(forget_set) == 0:
        raise ArgumentError("gradient ascent needs a nonempty forget set")

    x, y = batch_arrays(theta_t.spec, forget_set)
    trajectory = [AscentStep(0, theta_t, _accuracies(theta_t, eval_sets))]
    params = theta_t
    for epoch in range(1, epochs + 1):
        _, grad = loss_and_grad(params, x, y)
        values = params.values + lr * grad
        if not np.all(np.isfinite(values)):
            raise DivergenceError(epoch, what="forget-set loss")
        params = params.with_values(values)
        forget_loss = mean_loss(params, x, y)
        if not np.isfinite(forget_loss):
            raise DivergenceError(epoch, what="forget-set loss")
        step = AscentStep(epoch, params, _accuracies(params, eval_sets))
        debug_print(f"ascent epoch {epoch}: loss={forget_loss:.4f} acc={step.accuracies}")
        trajectory.append(step)
    return trajectory


class AscentUnlearner(Unlearner):
    kind = UnlearnerKind.ASCENT

    def _unlearn(self, request: UnlearnRequest) -> ModelParams:
        theta_t = require_mlp(request.base_params, self.kind)
        trajectory = ascent_unlearn(
            theta_t,
            request.dataset.subset(request.unlearn),
            {},
            self.options.ascent_epochs,
            self.options.ascent_lr,
        )
        return trajectory[-1].params
