#
# file: src/utils/tape/verifier.py
#
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np
import pandas as pd
from logger_tt import logger

from ..data import IndexSet, LabeledDataset
from ..errors import ArgumentError, ShapeError
from ..nn import MlpSpec, ModelParams, TrainConfig, accuracy, predict_labels, sgd_train
from ..nn.checkpoint import load_checkpoint, save_checkpoint
from .reconstructor import Reconstructor, reconstruct
from .shadow import PosteriorDiff

VERIFIER_HIDDEN_WIDTH = 32


@dataclass(frozen=True, eq=False)
class VerificationDataset:
    """Rows of (reconstructed vector, candidate sample, label ∈ {0, 1})."""

    reconstructed: np.ndarray
    candidates: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        rec = np.atleast_2d(np.array(self.reconstructed, dtype=np.float64))
        cand = np.atleast_2d(np.array(self.candidates, dtype=np.float64))
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if rec.shape != cand.shape or len(labels) != len(rec):
            raise ShapeError(
                f"verification rows disagree: {rec.shape}, {cand.shape}, {labels.shape}"
            )
        if np.any((labels != 0) & (labels != 1)):
            raise ShapeError("verification labels must be 0 or 1")
        object.__setattr__(self, "reconstructed", rec)
        object.__setattr__(self, "candidates", cand)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def feature_width(self) -> int:
        return int(self.reconstructed.shape[1])

    def as_dataset(self) -> LabeledDataset:
        """Verifier inputs are the concatenation (reconstructed ‖ candidate)."""
        return LabeledDataset(
            np.hstack([self.reconstructed, self.candidates]), self.labels, 2
        )

    def with_labels(self, labels: np.ndarray) -> "VerificationDataset":
        return VerificationDataset(self.reconstructed, self.candidates, labels)


@dataclass(frozen=True, eq=False)
class VerifierModel:
    params: ModelParams

    def __post_init__(self):
        spec = self.params.spec
        if spec.output_width != 2 or spec.input_width % 2:
            raise ShapeError(
                f"a verifier maps 2 x feature width to 2 classes, got {spec.layer_widths}"
            )

    @property
    def spec(self) -> MlpSpec:
        return self.params.spec

    @property
    def feature_width(self) -> int:
        return self.spec.input_width // 2

    def predict(self, reconstructed: np.ndarray, candidates: np.ndarray) -> np.ndarray:
        pairs = np.hstack([np.atleast_2d(reconstructed), np.atleast_2d(candidates)])
        return predict_labels(self.params, pairs)


def build_verification_set(
    ae: Reconstructor,
    per_sample_diffs: Mapping[int, PosteriorDiff],
    data: LabeledDataset,
    local: IndexSet,
    unlearn: IndexSet,
    dedupe_positives: bool = False,
    originals: Optional[Mapping[int, np.ndarray]] = None,
) -> VerificationDataset:
    """
    For every erased x_u and every remaining local x_i, adds the positive
    (AE(δ_u), x_u; 1) and the negative (AE(δ_u), x_i; 0).

    `data` holds the samples as submitted, so perturbed rows are the positives.
    With `dedupe_positives` each x_u contributes its positive only once.
    `originals` maps erased indices to the unperturbed copies the server still
    keeps; each is a negative for its own sample, as often as that positive.
    """
    if not unlearn.issubset(local):
        raise ArgumentError("the erased samples must be part of the local set")
    missing = [u for u in unlearn if u not in per_sample_diffs]
    if missing:
        raise ArgumentError(f"no posterior difference for erased samples {missing}")
    rest = local.difference(unlearn)
    if len(rest) == 0:
        raise ArgumentError("no local samples remain to act as negatives")
    originals = originals or {}
    unknown = sorted(set(originals) - set(unlearn))
    if unknown:
        raise ArgumentError(f"originals given for samples that are not erased: {unknown}")

    rec_rows, cand_rows, labels = [], [], []
    for u in unlearn:
        x_hat = reconstruct(ae, per_sample_diffs[u])
        for n, i in enumerate(rest):
            if not (dedupe_positives and n > 0):
                rec_rows.append(x_hat)
                cand_rows.append(data.features[u])
                labels.append(1)
                if u in originals:
                    rec_rows.append(x_hat)
                    cand_rows.append(originals[u])
                    labels.append(0)
            rec_rows.append(x_hat)
            cand_rows.append(data.features[i])
            labels.append(0)
    return VerificationDataset(np.vstack(rec_rows), np.vstack(cand_rows), np.array(labels))


def train_verifier(
    dset: VerificationDataset,
    cfg: TrainConfig,
    hidden_width: int = VERIFIER_HIDDEN_WIDTH,
) -> VerifierModel:
    if len(dset) == 0:
        raise ArgumentError("cannot train a verifier on an empty verification set")
    if len(np.unique(dset.labels)) < 2:
        raise ArgumentError("the verification set needs both positive and negative rows")
    spec = MlpSpec((2 * dset.feature_width, hidden_width, 2))
    model = VerifierModel(sgd_train(spec, dset.as_dataset(), cfg))
    logger.info(
        f"verifier trained on {len(dset)} pairs, "
        f"train accuracy {verifier_accuracy(model, dset):.3f}"
    )
    return model


def verifier_accuracy(v: VerifierModel, dset: VerificationDataset) -> float:
    data = dset.as_dataset()
    return accuracy(v.params, data.features, data.labels)


def verifiability(
    v: VerifierModel,
    ae: Reconstructor,
    per_sample_diffs: Mapping[int, PosteriorDiff],
    data: LabeledDataset,
    unlearn: IndexSet,
) -> float:
    """Fraction of erased samples whose (AE(δ_u), x_u) pair the verifier labels 1."""
    if len(unlearn) == 0:
        raise ArgumentError("verifiability needs at least one erased sample")
    x_hat = np.vstack([reconstruct(ae, per_sample_diffs[u]) for u in unlearn])
    hits = v.predict(x_hat, data.features[unlearn.indices]) == 1
    return float(np.count_nonzero(hits)) / len(unlearn)


def export_verification_csv(dset: VerificationDataset, path: Union[str, Path]):
    d = dset.feature_width
    frame = pd.DataFrame(
        np.hstack([dset.reconstructed, dset.candidates]),
        columns=[f"rec_{i}" for i in range(d)] + [f"cand_{i}" for i in range(d)],
    )
    frame.insert(0, "label", dset.labels)
    frame.to_csv(path, index=False)


def save_verifier(path: Union[str, Path], v: VerifierModel, seed: int):
    save_checkpoint(path, v.params, seed)


def load_verifier(path: Union[str, Path]) -> tuple[VerifierModel, int]:
    params, seed = load_checkpoint(path)
    return VerifierModel(params), seed
