try:
    from typing import Unpack
except ImportError:  # Python < 3.11
    from typing_extensions import Unpack

from ..nn import MlpSpec, TrainConfig
from .ascent import AscentStep, AscentUnlearner, ascent_unlearn
from .influence import InfluenceUnlearner, influence_unlearn, influence_update
from .newton import NewtonUnlearner, newton_unlearn
from .retrain import RetrainUnlearner, retrain_unlearn
from .sisa import (
    SisaEnsemble,
    SisaUnlearner,
    colocated_assignment,
    sisa_predict,
    sisa_train,
    sisa_unlearn,
)
from .unlearner import (
    UnlearnRequest,
    Unlearner,
    UnlearnerKind,
    UnlearnerOptionsKwargs,
    service_accuracy,
    service_predict,
)

UNLEARNERS: dict[UnlearnerKind, type[Unlearner]] = {
    cls.kind: cls
    for cls in (
        RetrainUnlearner,
        SisaUnlearner,
        InfluenceUnlearner,
        NewtonUnlearner,
        AscentUnlearner,
    )
}


def make_unlearner(
    kind: UnlearnerKind | str,
    spec: MlpSpec,
    train_cfg: TrainConfig,
    **options: Unpack[UnlearnerOptionsKwargs],
) -> Unlearner:
    return UNLEARNERS[UnlearnerKind(kind)](spec, train_cfg, **options)


__all__ = [
    "AscentStep",
    "AscentUnlearner",
    "InfluenceUnlearner",
    "NewtonUnlearner",
    "RetrainUnlearner",
    "SisaEnsemble",
    "SisaUnlearner",
    "UNLEARNERS",
    "UnlearnRequest",
    "Unlearner",
    "UnlearnerKind",
    "ascent_unlearn",
    "colocated_assignment",
    "influence_unlearn",
    "influence_update",
    "make_unlearner",
    "newton_unlearn",
    "retrain_unlearn",
    "service_accuracy",
    "service_predict",
    "sisa_predict",
    "sisa_train",
    "sisa_unlearn",
]
