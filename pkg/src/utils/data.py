#
# file: src/utils/data.py
#
import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

import numpy as np
import pandas as pd

from .errors import (
    ArgumentError,
    BadMagicError,
    CountMismatchError,
    ShapeError,
    TruncatedPayloadError,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

PathLike = Union[str, Path]


# ==============================================================================
#  Index sets and datasets
# ==============================================================================


@dataclass(frozen=True, eq=False)
class IndexSet:
    """Sorted, duplicate-free row indices into a dataset (D_u, D_local, ...)."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64).reshape(-1)
        if idx.size and (idx[0] < 0 or np.any(np.diff(idx) <= 0)):
            raise ArgumentError("index set must be non-negative and strictly increasing")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, items: Iterable[int]) -> "IndexSet":
        return cls(np.unique(np.fromiter((int(i) for i in items), dtype=np.int64)))

    def __len__(self) -> int:
        return int(self.indices.size)

    def __iter__(self) -> Iterator[int]:
        return (int(i) for i in self.indices)

    def __contains__(self, item: object) -> bool:
        if not isinstance(item, (int, np.integer)):
            return False
        pos = np.searchsorted(self.indices, item)
        return bool(pos < self.indices.size and self.indices[pos] == item)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, IndexSet) and np.array_equal(
            self.indices, other.indices
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"IndexSet({self.indices.tolist()})"

    def check_within(self, size: int):
        if self.indices.size and self.indices[-1] >= size:
            raise ArgumentError(
                f"index {int(self.indices[-1])} out of range for {size} rows"
            )

    def difference(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(np.setdiff1d(self.indices, other.indices))

    def union(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(np.union1d(self.indices, other.indices))

    def issubset(self, other: "IndexSet") -> bool:
        return bool(np.all(np.isin(self.indices, other.indices)))

    def position_of(self, index: int) -> int:
        """Position of a member index inside this set."""
        pos = int(np.searchsorted(self.indices, index))
        if pos >= self.indices.size or self.indices[pos] != index:
            raise ArgumentError(f"index {index} is not a member of the set")
        return pos


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix plus integer labels; D, D_r, D_local are views by index."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if features.ndim != 2:
            raise ShapeError(f"features must be a matrix, got shape {features.shape}")
        if labels.size != features.shape[0]:
            raise ShapeError(
                f"{labels.size} labels for {features.shape[0]} feature rows"
            )
        if self.num_classes < 1:
            raise ShapeError("num_classes must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ShapeError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(features)):
            raise ShapeError("features must be finite")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def dims(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: Union[IndexSet, np.ndarray]) -> "LabeledDataset":
        idx = indices.indices if isinstance(indices, IndexSet) else np.asarray(indices)
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes)

    def without(self, removed: IndexSet) -> "LabeledDataset":
        """D \\ removed, remaining rows in ascending index order."""
        removed.check_within(len(self))
        keep = np.setdiff1d(np.arange(len(self)), removed.indices)
        return self.subset(keep)

    def with_rows(self, indices: IndexSet, features: np.ndarray) -> "LabeledDataset":
        """Copy with the given rows' features replaced, labels untouched."""
        indices.check_within(len(self))
        new = np.array(self.features)
        new[indices.indices] = np.asarray(features, dtype=np.float64).reshape(
            len(indices), self.dims
        )
        return LabeledDataset(new, self.labels, self.num_classes)

    def concat(self, other: "LabeledDataset") -> "LabeledDataset":
        if other.dims != self.dims:
            raise ShapeError("cannot concatenate datasets of different widths")
        return LabeledDataset(
            np.vstack([self.features, other.features]),
            np.concatenate([self.labels, other.labels]),
            max(self.num_classes, other.num_classes),
        )


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 2
    dims: int = 8
    samples_per_class: int = 250
    class_center_spread: float = 0.8
    noise_sigma: float = 0.1
    blank_dims: int = 0

    def __post_init__(self):
        if min(self.num_classes, self.dims, self.samples_per_class) < 1:
            raise ArgumentError("synthetic counts must be positive")
        if not 0 <= self.blank_dims < self.dims:
            raise ArgumentError(f"blank_dims must lie in [0, {self.dims}), got {self.blank_dims}")
        if not (self.class_center_spread > 0 and self.noise_sigma > 0):
            raise ArgumentError("synthetic spread and sigma must be positive")


@dataclass(frozen=True)
class TriggerSpec:
    """A patch written over some feature dimensions, optionally flipping labels."""

    patch_indices: IndexSet
    patch_value: float = 1.0
    target_label: int = 0

    def __post_init__(self):
        if len(self.patch_indices) == 0:
            raise ArgumentError("trigger patch must cover at least one dimension")


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((np.size(labels), num_classes))
    out[np.arange(np.size(labels)), np.asarray(labels).reshape(-1)] = 1.0
    return out


# ==============================================================================
#  Generation and ingestion
# ==============================================================================


def gen_synthetic(spec: SyntheticSpec, rng: np.random.Generator) -> LabeledDataset:
    """
    Gaussian blobs around seeded random class centers, clipped to [0, 1].
    The trailing `blank_dims` features are 0 in every row, the blank corner
    a trigger patch is stamped on.

    Rows are grouped by class; class c occupies rows
    [c * samples_per_class, (c + 1) * samples_per_class).
    """
    centers = 0.5 + spec.class_center_spread * (
        rng.uniform(0.0, 1.0, (spec.num_classes, spec.dims)) - 0.5
    )
    centers = np.clip(centers, 0.0, 1.0)
    blocks = [
        centers[c] + spec.noise_sigma * rng.standard_normal((spec.samples_per_class, spec.dims))
        for c in range(spec.num_classes)
    ]
    features = np.clip(np.vstack(blocks), 0.0, 1.0)
    if spec.blank_dims:
        features[:, spec.dims - spec.blank_dims :] = 0.0
    labels = np.repeat(np.arange(spec.num_classes), spec.samples_per_class)
    return LabeledDataset(features, labels, spec.num_classes)


def train_test_split(
    data: LabeledDataset, test_fraction: float, rng: np.random.Generator
) -> tuple[LabeledDataset, LabeledDataset]:
    """Random split; each part keeps its rows in ascending original order."""
    if not 0.0 <= test_fraction < 1.0:
        raise ArgumentError(f"test_fraction must be in [0, 1), got {test_fraction}")
    order = rng.permutation(len(data))
    n_test = int(round(len(data) * test_fraction))
    test_idx = np.sort(order[:n_test])
    train_idx = np.sort(order[n_test:])
    return data.subset(train_idx), data.subset(test_idx)


def _read_bytes(path: PathLike) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def load_idx(
    images_path: PathLike,
    labels_path: PathLike,
    num_classes: Optional[int] = None,
    limit: Optional[int] = None,
) -> LabeledDataset:
    """
    Reads an IDX image/label file pair (optionally gzipped) into a dataset.

    Pixel bytes are scaled to [0, 1] and each image is flattened row-major.
    """
    images = _read_bytes(images_path)
    labels = _read_bytes(labels_path)

    if len(images) < 16:
        raise TruncatedPayloadError(f"{images_path}: header shorter than 16 bytes")
    magic, count, rows, cols = struct.unpack(">IIII", images[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise BadMagicError(f"{images_path}: magic 0x{magic:08x}, expected 0x00000803")
    pixels = count * rows * cols
    if len(images) - 16 < pixels:
        raise TruncatedPayloadError(
            f"{images_path}: {len(images) - 16} pixel bytes, header promises {pixels}"
        )

    if len(labels) < 8:
        raise TruncatedPayloadError(f"{labels_path}: header shorter than 8 bytes")
    label_magic, label_count = struct.unpack(">II", labels[:8])
    if label_magic != IDX_LABELS_MAGIC:
        raise BadMagicError(
            f"{labels_path}: magic 0x{label_magic:08x}, expected 0x00000801"
        )
    if len(labels) - 8 < label_count:
        raise TruncatedPayloadError(
            f"{labels_path}: {len(labels) - 8} label bytes, header promises {label_count}"
        )
    if label_count != count:
        raise CountMismatchError(f"{count} images but {label_count} labels")

    features = np.frombuffer(images, dtype=np.uint8, count=pixels, offset=16)
    features = features.reshape(count, rows * cols).astype(np.float64) / 255.0
    label_arr = np.frombuffer(labels, dtype=np.uint8, count=label_count, offset=8)
    label_arr = label_arr.astype(np.int64)
    if limit is not None:
        features, label_arr = features[:limit], label_arr[:limit]
    classes = num_classes or (int(label_arr.max()) + 1 if label_arr.size else 1)
    return LabeledDataset(features, label_arr, classes)


def write_idx(
    images_path: PathLike, labels_path: PathLike, images: np.ndarray, labels: np.ndarray
):
    """Writes uint8 images (count, rows, cols) and labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


# ==============================================================================
#  Selection and triggers
# ==============================================================================


def select_local(
    data: LabeledDataset, count: int, rng: np.random.Generator
) -> IndexSet:
    """Uniform sample of `count` rows without replacement (no stratification)."""
    if not 1 <= count <= len(data):
        raise ArgumentError(f"local size {count} not in [1, {len(data)}]")
    return IndexSet(np.sort(rng.choice(len(data), size=count, replace=False)))


def select_unlearn(local: IndexSet, ess: int, rng: np.random.Generator) -> IndexSet:
    if ess < 1:
        raise ArgumentError(f"erased sample size must be >= 1, got {ess}")
    if ess > len(local):
        raise ArgumentError(f"erased sample size {ess} exceeds local size {len(local)}")
    return IndexSet(np.sort(rng.choice(local.indices, size=ess, replace=False)))


def apply_trigger(
    data: LabeledDataset,
    targets: IndexSet,
    trig: TriggerSpec,
    flip_labels: bool,
    alpha: Optional[float] = None,
) -> LabeledDataset:
    """
    Writes the trigger patch into the target rows.

    flip_labels=False keeps genuine labels; True relabels the rows to the
    trigger's target class. With `alpha`, each patched coordinate moves at
    most alpha away from its original value.
    """
    targets.check_within(len(data))
    trig.patch_indices.check_within(data.dims)
    if not 0 <= trig.target_label < data.num_classes:
        raise ArgumentError(f"target label {trig.target_label} is not a valid class")
    if len(targets) == 0:
        return data

    features = np.array(data.features)
    rows = targets.indices[:, None]
    cols = trig.patch_indices.indices[None, :]
    original = features[rows, cols]
    patched = np.full_like(original, trig.patch_value)
    if alpha is not None:
        patched = original + np.clip(patched - original, -alpha, alpha)
    features[rows, cols] = patched

    labels = np.array(data.labels)
    if flip_labels:
        labels[targets.indices] = trig.target_label
    return LabeledDataset(features, labels, data.num_classes)


def export_csv(data: LabeledDataset, path: PathLike):
    """Writes `label,f0,f1,...` rows."""
    frame = pd.DataFrame(
        data.features, columns=[f"f{i}" for i in range(data.dims)]
    )
    frame.insert(0, "label", data.labels)
    frame.to_csv(path, index=False)
