#
# file: src/utils/tape/strategies.py
#
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from logger_tt import logger

from ..data import IndexSet, LabeledDataset
from ..debug_utils import debug_print
from ..errors import ArgumentError, DegenerateWeightsError, DivergenceError
from ..nn import ModelParams, batch_arrays, derive_seed, loss_and_grad, make_rng
from ..unlearning import SisaEnsemble
from ..unlearning.unlearner import ServiceModel
from .reconstructor import Reconstructor, reconstruct
from .shadow import PosteriorDiff, posterior_difference, posteriors, shadow_service

# ==============================================================================
#  Unlearned data perturbation
# ==============================================================================


@dataclass(frozen=True)
class UdpConfig:
    alpha: float = 0.1
    restarts: int = 3
    steps: int = 10
    step_size: float = 0.05
    seed: int = 42
    fd_step: float = 1e-4
    epsilon: float = -1.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ArgumentError(f"alpha must be >= 0, got {self.alpha}")
        if self.restarts < 1 or self.steps < 1:
            raise ArgumentError("UDP needs at least one restart and one step")
        if not self.step_size > 0:
            raise ArgumentError(f"step_size must be > 0, got {self.step_size}")
        if not self.fd_step > 0:
            raise ArgumentError(f"fd_step must be > 0, got {self.fd_step}")


@dataclass(frozen=True, eq=False)
class UdpRestart:
    restart: int
    trajectory: list[np.ndarray]
    final_loss: float

    @property
    def delta_p(self) -> np.ndarray:
        return self.trajectory[-1]


@dataclass(frozen=True, eq=False)
class Perturbation:
    """The chosen Δ^p for one erased sample plus every restart that competed."""

    erased_index: int
    original: np.ndarray
    delta_p: np.ndarray
    loss: float
    best_restart: int
    restarts: list[UdpRestart] = field(default_factory=list)

    @property
    def perturbed(self) -> np.ndarray:
        return self.original + self.delta_p


@dataclass(frozen=True, eq=False)
class UdpResult:
    unlearn: IndexSet
    perturbations: list[Perturbation]

    @property
    def perturbed(self) -> np.ndarray:
        """(m, d) submitted samples, rows in `unlearn` order."""
        return np.vstack([p.perturbed for p in self.perturbations])


def clamp(delta: np.ndarray, alpha: float) -> np.ndarray:
    return np.clip(delta, -alpha, alpha)


class _UdpObjective:
    """L_AE(AE(δ), x + Δ) with δ from the shadow model of the perturbed sample."""

    def __init__(
        self,
        model: ServiceModel,
        ae: Reconstructor,
        data: LabeledDataset,
        index: int,
        local: IndexSet,
        epsilon: float,
    ):
        self.model = model
        self.ae = ae
        self.data = data
        self.erase = IndexSet.of([index])
        self.local = local
        self.epsilon = epsilon
        self.x = np.array(data.features[index])
        self.base = posteriors(model, data, local)

    def __call__(self, delta: np.ndarray) -> float:
        x_prime = self.x + delta
        shadow = shadow_service(self.model, self.data, self.erase, self.epsilon, x_prime[None, :])
        diff = posterior_difference(self.base, posteriors(shadow, self.data, self.local))
        err = reconstruct(self.ae, diff) - x_prime
        return float(np.dot(err, err))

    def gradient(self, delta: np.ndarray, value: float, h: float) -> np.ndarray:
        """Forward finite differences around `delta`."""
        grad = np.empty_like(delta)
        shifted = np.array(delta)
        for i in range(delta.size):
            shifted[i] = delta[i] + h
            grad[i] = (self(shifted) - value) / h
            shifted[i] = delta[i]
        return grad


def _run_restart(
    objective: _UdpObjective, cfg: UdpConfig, restart: int, rng: np.random.Generator
) -> UdpRestart:
    delta = clamp(cfg.alpha * rng.standard_normal(objective.x.size), cfg.alpha)
    trajectory = [delta]
    loss = objective(delta)
    for step in range(1, cfg.steps + 1):
        if not np.isfinite(loss):
            raise DivergenceError(0, restart=restart, step=step, what="UDP reconstruction loss")
        grad = objective.gradient(delta, loss, cfg.fd_step)
        delta = clamp(delta - cfg.step_size * grad, cfg.alpha)
        trajectory.append(delta)
        loss = objective(delta)
    if not np.isfinite(loss):
        raise DivergenceError(0, restart=restart, step=cfg.steps, what="UDP reconstruction loss")
    return UdpRestart(restart, trajectory, loss)


def perturb_sample(
    model: ServiceModel,
    ae: Reconstructor,
    data: LabeledDataset,
    index: int,
    local: IndexSet,
    cfg: UdpConfig,
) -> Perturbation:
    """Projected descent with restarts for one erased sample; the lowest final loss wins."""
    objective = _UdpObjective(model, ae, data, index, local, cfg.epsilon)
    runs = [
        _run_restart(objective, cfg, r, make_rng(derive_seed(cfg.seed, index, r)))
        for r in range(cfg.restarts)
    ]
    best = int(np.argmin([run.final_loss for run in runs]))
    debug_print(
        f"udp sample {index}: restart losses {[round(r.final_loss, 6) for r in runs]}, "
        f"chose {best}"
    )
    return Perturbation(
        index, objective.x, runs[best].delta_p, runs[best].final_loss, best, runs
    )


def udp_perturb(
    model: ServiceModel,
    ae: Reconstructor,
    data: LabeledDataset,
    unlearn: IndexSet,
    local: IndexSet,
    cfg: UdpConfig,
) -> UdpResult:
    """
    Perturbs every erased sample independently within ‖Δ‖∞ ≤ alpha so that
    its posterior difference reconstructs better. θ_t and the AE stay fixed.
    """
    if len(unlearn) == 0:
        raise ArgumentError("UDP needs at least one erased sample")
    unlearn.check_within(len(data))
    if ae.output_width != data.dims:
        raise ArgumentError(
            f"reconstructor emits width {ae.output_width}, samples have {data.dims}"
        )
    perturbations = [perturb_sample(model, ae, data, i, local, cfg) for i in unlearn]
    logger.info(
        f"UDP perturbed {len(unlearn)} samples (alpha={cfg.alpha}, "
        f"mean loss {np.mean([p.loss for p in perturbations]):.6f})"
    )
    return UdpResult(unlearn, perturbations)


def export_perturbed_csv(result: UdpResult, path: Union[str, Path]):
    rows = result.perturbed
    frame = pd.DataFrame(rows, columns=[f"x'_{i}" for i in range(rows.shape[1])])
    frame.insert(0, "erased_index", [p.erased_index for p in result.perturbations])
    frame.to_csv(path, index=False)


# ==============================================================================
#  Unlearning influence-based division
# ==============================================================================


@dataclass(frozen=True)
class UidConfig:
    sigma: float = 1e-3
    seed: int = 42

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ArgumentError(f"sigma must be >= 0, got {self.sigma}")


def _sample_grad_norm(model: ServiceModel, data: LabeledDataset, index: int) -> float:
    if isinstance(model, SisaEnsemble):
        model = model.submodels[int(model.shard_assignment[index])]
    if not isinstance(model, ModelParams):
        raise ArgumentError(f"no gradient for service model {type(model).__name__}")
    x, y = batch_arrays(model.spec, data.subset(np.array([index])))
    return float(np.linalg.norm(loss_and_grad(model, x, y)[1]))


def uid_weights(model: ServiceModel, data: LabeledDataset, unlearn: IndexSet) -> np.ndarray:
    """w_u = ‖∇ℓ(x_u; θ_t)‖₂ / Σ_v ‖∇ℓ(x_v; θ_t)‖₂."""
    norms = np.array([_sample_grad_norm(model, data, i) for i in unlearn])
    total = norms.sum()
    if not total > 0:
        raise DegenerateWeightsError("every erased sample has a zero loss gradient")
    return norms / total


def uid_divide(
    delta_overall: PosteriorDiff,
    model: ServiceModel,
    data: LabeledDataset,
    unlearn: IndexSet,
    cfg: UidConfig,
) -> list[PosteriorDiff]:
    """
    Splits a multi-sample δ into per-sample shares δ_u ~ N(w_u δ, σ²I),
    corrected so that Σ_u δ_u equals δ exactly.
    """
    m = len(unlearn)
    if m == 0:
        raise ArgumentError("UID needs at least one erased sample")
    unlearn.check_within(len(data))
    if m == 1:
        return [delta_overall.with_values(delta_overall.values)]

    weights = uid_weights(model, data, unlearn)
    total = delta_overall.values
    shares = weights[:, None] * total[None, :]
    if cfg.sigma > 0:
        noise = cfg.sigma * make_rng(cfg.seed).standard_normal(shares.shape)
        # Zero-sum noise per posterior block keeps every block summing to 0.
        blocks = noise.reshape(m, delta_overall.local_size, delta_overall.num_classes)
        noise = (blocks - blocks.mean(axis=2, keepdims=True)).reshape(shares.shape)
        shares = shares + noise
    residual = total - shares.sum(axis=0)
    shares = shares + weights[:, None] * residual[None, :]
    debug_print(f"uid_divide: weights={np.round(weights, 4).tolist()}")
    return [delta_overall.with_values(row) for row in shares]
