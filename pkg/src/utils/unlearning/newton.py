#
# file: src/utils/unlearning/newton.py
#
import numpy as np

from ..data import IndexSet, LabeledDataset
from ..debug_utils import debug_print
from ..errors import ArgumentError, NumericalError
from ..nn import ModelParams, batch_arrays, loss_and_grad, loss_hessian
from .unlearner import UnlearnRequest, Unlearner, UnlearnerKind, require_mlp

MAX_HESSIAN_PARAMS = 2000


def newton_unlearn(
    theta_t: ModelParams, data: LabeledDataset, unlearn: IndexSet, damping: float = 1e-3
) -> ModelParams:
    """
    One damped Newton step on the remaining-data loss:
    θ_t + (H_r + damping·I)⁻¹ Σ_u ∇ℓ(x_u; θ_t), with H_r the Hessian of the
    summed loss over D \\ D_u.
    """
    size = len(theta_t)
    if size > MAX_HESSIAN_PARAMS:
        raise ArgumentError(
            f"explicit Hessian limited to {MAX_HESSIAN_PARAMS} parameters, model has {size}"
        )
    if damping < 0:
        raise ArgumentError(f"damping must be >= 0, got {damping}")
    if len(unlearn) == 0:
        raise ArgumentError("newton removal needs at least one erased sample")
    remaining = data.without(unlearn)
    if len(remaining) == 0:
        raise ArgumentError("newton removal needs at least one remaining sample")

    x_u, y_u = batch_arrays(theta_t.spec, data.subset(unlearn))
    _, mean_grad = loss_and_grad(theta_t, x_u, y_u)
    grad_sum = mean_grad * len(unlearn)
    if not np.any(grad_sum):
        return theta_t

    x_r, y_r = batch_arrays(theta_t.spec, remaining)
    system = loss_hessian(theta_t, x_r, y_r) * len(remaining)
    system[np.diag_indices(size)] += damping
    try:
        step = np.linalg.solve(system, grad_sum)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"damped Hessian is singular: {e}") from e
    residual = np.linalg.norm(system @ step - grad_sum)
    scale = np.linalg.norm(system) * np.linalg.norm(step) + np.linalg.norm(grad_sum)
    if not np.all(np.isfinite(step)) or residual > 1e-8 * scale:
        raise NumericalError(
            f"damped Hessian solve is ill-conditioned (residual {residual:.3e})"
        )
    debug_print(f"newton_unlearn: |step|={np.linalg.norm(step):.6e}")
    return theta_t.with_values(theta_t.values + step)


class NewtonUnlearner(Unlearner):
    kind = UnlearnerKind.NEWTON

    def _unlearn(self, request: UnlearnRequest) -> ModelParams:
        theta_t = require_mlp(request.base_params, self.kind)
        return newton_unlearn(
            theta_t, request.dataset, request.unlearn, self.options.damping
        )
