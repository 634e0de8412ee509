#
# file: src/utils/unlearning/unlearner.py
#
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, ClassVar, Optional, TypedDict

try:
    from typing import Unpack
except ImportError:  # Python < 3.11
    from typing_extensions import Unpack

import numpy as np
from logger_tt import logger

from ..data import IndexSet, LabeledDataset
from ..errors import ArgumentError
from ..nn import MlpSpec, ModelParams, TrainConfig, mlp_forward, sgd_train

# A service model is either a single MLP or a SISA ensemble; both answer
# `service_predict` with per-sample class probabilities.
ServiceModel = Any


class UnlearnerKind(str, Enum):
    RETRAIN = "retrain"
    SISA = "sisa"
    INFLUENCE = "influence"
    NEWTON = "newton"
    ASCENT = "ascent"


@dataclass(frozen=True, eq=False)
class UnlearnRequest:
    """The server-side view of "please forget D_u"."""

    dataset: LabeledDataset
    unlearn: IndexSet
    base_params: ServiceModel
    spec: MlpSpec
    train_cfg: TrainConfig

    def __post_init__(self):
        if len(self.unlearn) == 0:
            raise ArgumentError("an unlearning request needs at least one sample")
        self.unlearn.check_within(len(self.dataset))


@dataclass
class UnlearnerOptions:
    epsilon: float = -1.0
    damping: float = 1e-3
    shard_count: int = 5
    colocate: bool = True
    ascent_epochs: int = 20
    ascent_lr: float = 0.05


class UnlearnerOptionsKwargs(TypedDict, total=False):
    epsilon: float
    damping: float
    shard_count: int
    colocate: bool
    ascent_epochs: int
    ascent_lr: float


def service_predict(model: ServiceModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities from an MLP or from anything with `predict_proba`."""
    if isinstance(model, ModelParams):
        return mlp_forward(model, x)
    return model.predict_proba(x)


def service_accuracy(model: ServiceModel, data: LabeledDataset) -> float:
    if len(data) == 0:
        return 0.0
    probs = np.atleast_2d(service_predict(model, data.features))
    return float(np.mean(np.argmax(probs, axis=1) == data.labels))


class Unlearner(ABC):
    """
    Base class for server-side unlearning algorithms.

    Subclasses implement `_unlearn`; `train` produces the service model the
    algorithm expects (a single MLP by default).
    """

    kind: ClassVar[UnlearnerKind]

    def __init__(
        self,
        spec: MlpSpec,
        train_cfg: TrainConfig,
        **options: Unpack[UnlearnerOptionsKwargs],
    ):
        self.spec = spec
        self.train_cfg = train_cfg
        self.options = UnlearnerOptions(**options)

    def train(
        self, data: LabeledDataset, erase_hint: Optional[IndexSet] = None
    ) -> ServiceModel:
        """Trains the original service model θ_t on `data`."""
        return sgd_train(self.spec, data, self.train_cfg)

    def unlearn(self, request: UnlearnRequest) -> ServiceModel:
        logger.info(
            f"[{self.kind.value}] unlearning {len(request.unlearn)} of "
            f"{len(request.dataset)} samples"
        )
        return self._unlearn(request)

    @abstractmethod
    def _unlearn(self, request: UnlearnRequest) -> ServiceModel:
        ...

    def request(
        self, dataset: LabeledDataset, unlearn: IndexSet, base: ServiceModel
    ) -> UnlearnRequest:
        return UnlearnRequest(dataset, unlearn, base, self.spec, self.train_cfg)


def require_mlp(model: ServiceModel, kind: UnlearnerKind) -> ModelParams:
    if not isinstance(model, ModelParams):
        raise ArgumentError(f"the {kind.value} unlearner needs a single MLP model")
    return model
