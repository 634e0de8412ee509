#
# file: src/utils/unlearning/retrain.py
#
from ..nn import ModelParams, sgd_train
from .unlearner import UnlearnRequest, Unlearner, UnlearnerKind


def retrain_unlearn(req: UnlearnRequest) -> ModelParams:
    """Exact unlearning: train from scratch on D \\ D_u with the request's seed."""
    return sgd_train(req.spec, req.dataset.without(req.unlearn), req.train_cfg)


class RetrainUnlearner(Unlearner):
    kind = UnlearnerKind.RETRAIN

    def _unlearn(self, request: UnlearnRequest) -> ModelParams:
        return retrain_unlearn(request)
