#
# file: src/utils/unlearning/influence.py
#
import numpy as np

from ..data import IndexSet, LabeledDataset
from ..errors import ArgumentError, NumericalError
from ..nn import ModelParams, batch_arrays, loss_and_grad
from .unlearner import UnlearnRequest, Unlearner, UnlearnerKind, require_mlp


def influence_update(
    theta_t: ModelParams, x_u: np.ndarray, y_u: np.ndarray, n: int, epsilon: float
) -> ModelParams:
    """
    θ_t - ε/(n-m) · Σ_u ∇ℓ(x_u; θ_t) for explicit erased samples (x_u, y_u).

    n is the training-set size and m = len(x_u). ε = 0 returns θ_t itself.
    """
    if not -1.0 <= epsilon <= 0.0:
        raise ArgumentError(f"epsilon must lie in [-1, 0], got {epsilon}")
    m = len(x_u)
    if m == 0:
        raise ArgumentError("influence removal needs at least one erased sample")
    if n == m:
        raise NumericalError("cannot remove every training sample (n - m == 0)")
    if n < m:
        raise ArgumentError(f"cannot erase {m} samples from a set of {n}")
    if epsilon == 0.0:
        return theta_t
    _, mean_grad = loss_and_grad(theta_t, x_u, y_u)
    return theta_t.with_values(theta_t.values - epsilon / (n - m) * (mean_grad * m))


def influence_unlearn(
    theta_t: ModelParams, data: LabeledDataset, unlearn: IndexSet, epsilon: float = -1.0
) -> ModelParams:
    """First-order influence removal of D_u from θ_t (the unlearned shadow model)."""
    if len(unlearn) == 0:
        raise ArgumentError("influence removal needs at least one erased sample")
    unlearn.check_within(len(data))
    x_u, y_u = batch_arrays(theta_t.spec, data.subset(unlearn))
    return influence_update(theta_t, x_u, y_u, len(data), epsilon)


class InfluenceUnlearner(Unlearner):
    kind = UnlearnerKind.INFLUENCE

    def _unlearn(self, request: UnlearnRequest) -> ModelParams:
        theta_t = require_mlp(request.base_params, self.kind)
        return influence_unlearn(
            theta_t, request.dataset, request.unlearn, self.options.epsilon
        )
