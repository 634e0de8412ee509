#
# file: src/utils/tape/shadow.py
#
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from logger_tt import logger

from ..data import IndexSet, LabeledDataset
from ..debug_utils import debug_print
from ..errors import ArgumentError, ShapeError
from ..nn import ModelParams, batch_arrays
from ..unlearning import SisaEnsemble, influence_unlearn, influence_update
from ..unlearning.unlearner import ServiceModel, service_predict

BLOCK_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class PosteriorVector:
    """
    Concatenated class-probability vectors of a model on the local set,
    one block of `num_classes` per local sample in ascending index order.
    """

    values: np.ndarray
    local_size: int
    num_classes: int

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size != self.local_size * self.num_classes:
            raise ShapeError(
                f"posterior length {values.size} != {self.local_size} x {self.num_classes}"
            )
        sums = values.reshape(self.local_size, self.num_classes).sum(axis=1)
        if np.any(np.abs(sums - 1.0) > BLOCK_SUM_TOLERANCE):
            raise ShapeError("every posterior block must sum to 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def blocks(self) -> np.ndarray:
        return self.values.reshape(self.local_size, self.num_classes)


@dataclass(frozen=True, eq=False)
class PosteriorDiff:
    """δ = Ŷ_t − Ŷ_u over the local set, same layout as `PosteriorVector`."""

    values: np.ndarray
    local_size: int
    num_classes: int

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size != self.local_size * self.num_classes:
            raise ShapeError(
                f"posterior difference length {values.size} != "
                f"{self.local_size} x {self.num_classes}"
            )
        if not np.all(np.isfinite(values)):
            raise ShapeError("posterior difference must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def blocks(self) -> np.ndarray:
        return self.values.reshape(self.local_size, self.num_classes)

    def with_values(self, values: np.ndarray) -> "PosteriorDiff":
        return PosteriorDiff(values, self.local_size, self.num_classes)


@dataclass(frozen=True, eq=False)
class ShadowPair:
    diff: PosteriorDiff
    target: np.ndarray
    erased_index: int


def posteriors(model: ServiceModel, data: LabeledDataset, local: IndexSet) -> PosteriorVector:
    """Queries the service model with every local sample, ascending index order."""
    if len(local) == 0:
        raise ArgumentError("the local query set must be nonempty")
    local.check_within(len(data))
    probs = np.atleast_2d(service_predict(model, data.features[local.indices]))
    return PosteriorVector(probs.reshape(-1), len(local), probs.shape[1])


def posterior_difference(y_t: PosteriorVector, y_u: PosteriorVector) -> PosteriorDiff:
    if (y_t.local_size, y_t.num_classes) != (y_u.local_size, y_u.num_classes):
        raise ShapeError(
            f"posterior shapes differ: {y_t.local_size}x{y_t.num_classes} vs "
            f"{y_u.local_size}x{y_u.num_classes}"
        )
    return PosteriorDiff(y_t.values - y_u.values, y_t.local_size, y_t.num_classes)


def shadow_model(
    theta_t: ModelParams, data: LabeledDataset, erase: IndexSet, epsilon: float = -1.0
) -> ModelParams:
    """The unlearned shadow model: first-order influence removal of `erase`."""
    return influence_unlearn(theta_t, data, erase, epsilon)


def _shadow_ensemble(
    ensemble: SisaEnsemble,
    data: LabeledDataset,
    erase: IndexSet,
    epsilon: float,
    features: np.ndarray,
) -> SisaEnsemble:
    # Only the submodel whose shard holds an erased sample moves, with that shard's n.
    submodels = list(ensemble.submodels)
    shards = ensemble.shard_assignment[erase.indices]
    for shard in np.unique(shards):
        rows = shards == shard
        sub = submodels[shard]
        _, y = batch_arrays(sub.spec, data.subset(erase.indices[rows]))
        n = len(ensemble.shard_members(int(shard)))
        submodels[shard] = influence_update(sub, features[rows], y, n, epsilon)
    return replace(ensemble, submodels=tuple(submodels))


def shadow_service(
    model: ServiceModel,
    data: LabeledDataset,
    erase: IndexSet,
    epsilon: float = -1.0,
    features: Optional[np.ndarray] = None,
) -> ServiceModel:
    """
    Shadow of any service model. `features` replaces the erased rows'
    features (labels stay), which is how perturbed samples are evaluated.
    """
    if len(erase) == 0:
        raise ArgumentError("a shadow model needs at least one erased sample")
    erase.check_within(len(data))
    rows = data.features[erase.indices] if features is None else features
    rows = np.asarray(rows, dtype=np.float64).reshape(len(erase), data.dims)
    if isinstance(model, SisaEnsemble):
        return _shadow_ensemble(model, data, erase, epsilon, rows)
    if not isinstance(model, ModelParams):
        raise ArgumentError(f"no shadow model for service model {type(model).__name__}")
    _, y = batch_arrays(model.spec, data.subset(erase))
    return influence_update(model, rows, y, len(data), epsilon)


def build_shadow_corpus(
    theta_t: ServiceModel, data: LabeledDataset, local: IndexSet, epsilon: float = -1.0
) -> list[ShadowPair]:
    """One (δ_i, x_i) pair per local sample, each from a single-sample shadow model."""
    if len(local) < 2:
        raise ArgumentError(f"the shadow corpus needs >= 2 local samples, got {len(local)}")
    base = posteriors(theta_t, data, local)
    corpus = []
    for index in local:
        shadow = shadow_service(theta_t, data, IndexSet.of([index]), epsilon)
        diff = posterior_difference(base, posteriors(shadow, data, local))
        corpus.append(ShadowPair(diff, np.array(data.features[index]), index))
    debug_print(
        f"build_shadow_corpus: {len(corpus)} pairs, "
        f"mean |δ|={np.mean([np.linalg.norm(p.diff.values) for p in corpus]):.4e}"
    )
    logger.info(f"shadow corpus built from {len(corpus)} local samples")
    return corpus


def corpus_arrays(corpus: list[ShadowPair]) -> tuple[np.ndarray, np.ndarray]:
    """(diffs, targets) matrices stacked in corpus order."""
    if not corpus:
        raise ArgumentError("the shadow corpus is empty")
    diffs = np.vstack([p.diff.values for p in corpus])
    targets = np.vstack([p.target for p in corpus])
    return diffs, targets


def export_corpus_csv(corpus: list[ShadowPair], path: Union[str, Path]):
    diffs, targets = corpus_arrays(corpus)
    frame = pd.concat(
        [
            pd.DataFrame({"erased_index": [p.erased_index for p in corpus]}),
            pd.DataFrame(diffs, columns=[f"delta_{i}" for i in range(diffs.shape[1])]),
            pd.DataFrame(targets, columns=[f"x_{i}" for i in range(targets.shape[1])]),
        ],
        axis=1,
    )
    frame.to_csv(path, index=False)
