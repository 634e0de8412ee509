#
# file: src/utils/unlearning/sisa.py
#
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..data import IndexSet, LabeledDataset
from ..errors import ArgumentError
from ..nn import (
    MlpSpec,
    ModelParams,
    TrainConfig,
    derive_seed,
    make_rng,
    mlp_forward,
    sgd_train,
    shard_seed,
)
from .unlearner import UnlearnRequest, Unlearner, UnlearnerKind


@dataclass(frozen=True, eq=False)
class SisaEnsemble:
    """
    k submodels, each trained on a disjoint shard of the dataset.

    `removed` tracks indices already unlearned; they stay assigned to their
    shard but are excluded from its training data.
    """

    spec: MlpSpec
    shard_assignment: np.ndarray
    submodels: tuple[ModelParams, ...]
    removed: IndexSet = field(default_factory=lambda: IndexSet(np.zeros(0)))

    @property
    def shard_count(self) -> int:
        return len(self.submodels)

    def shard_members(self, shard: int) -> IndexSet:
        members = np.flatnonzero(self.shard_assignment == shard)
        return IndexSet(np.setdiff1d(members, self.removed.indices))

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return sisa_predict(self, x)


def balanced_assignment(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    assignment = np.empty(n, dtype=np.int64)
    assignment[rng.permutation(n)] = np.arange(n) % k
    return assignment


def colocated_assignment(
    n: int, k: int, group: IndexSet, rng: np.random.Generator, shard: int = 0
) -> np.ndarray:
    """Balanced random assignment with every index of `group` forced into `shard`."""
    assignment = balanced_assignment(n, k, rng)
    assignment[group.indices] = shard
    return assignment


def _train_shard(
    spec: MlpSpec, data: LabeledDataset, members: IndexSet, cfg: TrainConfig, shard: int
) -> ModelParams:
    if len(members) == 0:
        raise ArgumentError(f"SISA shard {shard} has no training samples")
    return sgd_train(spec, data.subset(members), replace(cfg, seed=shard_seed(cfg.seed, shard)))


def sisa_train(
    data: LabeledDataset,
    k: int,
    spec: MlpSpec,
    cfg: TrainConfig,
    rng: np.random.Generator,
    assignment: Optional[np.ndarray] = None,
) -> SisaEnsemble:
    if not 1 <= k <= len(data):
        raise ArgumentError(f"shard count {k} not in [1, {len(data)}]")
    if assignment is None:
        assignment = balanced_assignment(len(data), k, rng)
    assignment = np.asarray(assignment, dtype=np.int64)
    if assignment.shape != (len(data),) or assignment.min() < 0 or assignment.max() >= k:
        raise ArgumentError("shard assignment must map every sample to a shard in [0, k)")

    ensemble = SisaEnsemble(spec, assignment, ())
    submodels = tuple(
        _train_shard(spec, data, ensemble.shard_members(s), cfg, s) for s in range(k)
    )
    return replace(ensemble, submodels=submodels)


def sisa_unlearn(ensemble: SisaEnsemble, req: UnlearnRequest) -> SisaEnsemble:
    """Retrains only the shards that hold erased indices; the rest are reused as-is."""
    if ensemble.shard_assignment.size != len(req.dataset):
        raise ArgumentError("request dataset does not match the ensemble's shard map")
    affected = np.unique(ensemble.shard_assignment[req.unlearn.indices])
    updated = replace(ensemble, removed=ensemble.removed.union(req.unlearn))
    submodels = list(ensemble.submodels)
    for shard in affected:
        submodels[shard] = _train_shard(
            ensemble.spec, req.dataset, updated.shard_members(shard), req.train_cfg, int(shard)
        )
    return replace(updated, submodels=tuple(submodels))


def sisa_predict(ensemble: SisaEnsemble, x: np.ndarray) -> np.ndarray:
    """Mean of the submodels' probability vectors."""
    return np.mean([mlp_forward(sub, x) for sub in ensemble.submodels], axis=0)


class SisaUnlearner(Unlearner):
    kind = UnlearnerKind.SISA

    def train(
        self, data: LabeledDataset, erase_hint: Optional[IndexSet] = None
    ) -> SisaEnsemble:
        rng = make_rng(derive_seed(self.train_cfg.seed, len(data)))
        k = self.options.shard_count
        assignment = None
        if self.options.colocate and erase_hint is not None and len(erase_hint):
            assignment = colocated_assignment(len(data), k, erase_hint, rng)
        return sisa_train(data, k, self.spec, self.train_cfg, rng, assignment)

    def _unlearn(self, request: UnlearnRequest) -> SisaEnsemble:
        if not isinstance(request.base_params, SisaEnsemble):
            raise ArgumentError("the sisa unlearner needs a SISA ensemble as base model")
        return sisa_unlearn(request.base_params, request)
