#
# file: src/utils/config.py
#
import copy
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import jsonschema

from ..profiles import CONFIG_FORMAT, get_profile
from .data import IndexSet, SyntheticSpec, TriggerSpec
from .errors import ArgumentError, ConfigError, MissingConfigError
from .nn import Head, MlpSpec, TrainConfig, derive_seed
from .tape import RecTrainConfig, UdpConfig, UidConfig
from .unlearning import UnlearnerKind

# Child-seed keys; the master seed itself drives data generation and base training.
SEED_SELECT = 1
SEED_RECONSTRUCTOR = 2
SEED_UDP = 3
SEED_UID = 4
SEED_VERIFIER = 5

_INT = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}
_RATE = {"type": "number", "minimum": 0}
_PATH = {"type": ["string", "null"]}


def _section(properties: dict) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": properties}


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["format_version"],
    "properties": {
        "format_version": {"const": CONFIG_FORMAT},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "out_dir": {"type": "string"},
        "dataset": _section(
            {
                "kind": {"enum": ["synthetic", "idx"]},
                "num_classes": _INT,
                "dims": _INT,
                "samples_per_class": _INT,
                "class_center_spread": _RATE,
                "noise_sigma": _RATE,
                "blank_dims": {"type": "integer", "minimum": 0},
                "test_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "images_path": _PATH,
                "labels_path": _PATH,
                "limit": {"type": ["integer", "null"], "minimum": 1},
            }
        ),
        "model": _section({"hidden_widths": {"type": "array", "items": _INT}}),
        "train": _section({"epochs": _INT, "batch_size": _INT, "learning_rate": _RATE}),
        "local_size": _INT,
        "ess": _INT,
        "epsilon": {"type": "number", "minimum": -1, "maximum": 0},
        "unlearner": _section(
            {
                "kind": {"enum": [k.value for k in UnlearnerKind]},
                "shard_count": _INT,
                "colocate": {"type": "boolean"},
                "damping": _RATE,
                "ascent_epochs": _INT,
                "ascent_lr": _RATE,
            }
        ),
        "reconstructor": _section(
            {
                "epochs": _INT,
                "batch_size": _INT,
                "learning_rate": _RATE,
                "latent_width": _INT,
                "hidden_width": _INT,
            }
        ),
        "verifier": _section(
            {
                "epochs": _INT,
                "batch_size": _INT,
                "learning_rate": _RATE,
                "hidden_width": _INT,
                "dedupe_positives": {"type": "boolean"},
            }
        ),
        "udp": _section(
            {
                "alpha": _RATE,
                "restarts": _INT,
                "steps": _INT,
                "step_size": {"type": "number", "exclusiveMinimum": 0},
                "fd_step": {"type": "number", "exclusiveMinimum": 0},
            }
        ),
        "uid": _section({"sigma": _RATE}),
        "strategies": _section(
            {
                "udp_on": {"type": "boolean"},
                "uid_on": {"type": "boolean"},
                "keep_original_copy": {"type": "boolean"},
            }
        ),
        "baseline": _section(
            {
                "kind": {"enum": ["none", "mib"]},
                "patch_indices": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "patch_value": _NUM,
                "target_label": {"type": "integer", "minimum": 0},
                "establish_threshold": {"type": "number", "minimum": 0, "maximum": 1},
                "removed_threshold": {"type": "number", "minimum": 0, "maximum": 1},
            }
        ),
        "dynamics": _section(
            {
                "backdoor_count": _INT,
                "genuine_count": _INT,
                "epochs": _INT,
                "learning_rate": _RATE,
            }
        ),
    },
}

# CLI flag -> dotted document path
OVERRIDE_PATHS = {
    "seed": "seed",
    "ess": "ess",
    "alpha": "udp.alpha",
    "unlearner": "unlearner.kind",
    "local_size": "local_size",
    "out_dir": "out_dir",
}


def deep_merge(base: Mapping[str, Any], update: Mapping[str, Any]) -> dict[str, Any]:
    """Recursively overlays `update` on a copy of `base`; lists are replaced."""
    merged = copy.deepcopy(dict(base))
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def set_path(doc: dict[str, Any], path: str, value: Any):
    *parents, leaf = path.split(".")
    node = doc
    for key in parents:
        node = node.setdefault(key, {})
    node[leaf] = value


def apply_overrides(doc: Mapping[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    """Sets every non-None override; keys are flag names or dotted paths."""
    result = copy.deepcopy(dict(doc))
    for key, value in overrides.items():
        if value is not None:
            set_path(result, OVERRIDE_PATHS.get(key, key), value)
    return result


@dataclass(frozen=True)
class DatasetConfig:
    kind: str
    synthetic: SyntheticSpec
    test_fraction: float
    images_path: Optional[str] = None
    labels_path: Optional[str] = None
    limit: Optional[int] = None


@dataclass(frozen=True)
class UnlearnerConfig:
    kind: UnlearnerKind
    shard_count: int
    colocate: bool
    damping: float
    ascent_epochs: int
    ascent_lr: float

    def options(self, epsilon: float) -> dict[str, Any]:
        return {
            "epsilon": epsilon,
            "damping": self.damping,
            "shard_count": self.shard_count,
            "colocate": self.colocate,
            "ascent_epochs": self.ascent_epochs,
            "ascent_lr": self.ascent_lr,
        }


@dataclass(frozen=True)
class VerifierConfig:
    train: TrainConfig
    hidden_width: int
    dedupe_positives: bool


@dataclass(frozen=True)
class StrategyFlags:
    udp_on: bool
    uid_on: bool
    keep_original_copy: bool


@dataclass(frozen=True)
class BaselineConfig:
    kind: str
    trigger: TriggerSpec
    establish_threshold: float
    removed_threshold: float


@dataclass(frozen=True)
class DynamicsConfig:
    backdoor_count: int
    genuine_count: int
    epochs: int
    learning_rate: float


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Typed view of a validated, fully merged config document."""

    document: dict[str, Any]
    seed: int
    out_dir: str
    dataset: DatasetConfig
    hidden_widths: tuple[int, ...]
    train: TrainConfig
    local_size: int
    ess: int
    epsilon: float
    unlearner: UnlearnerConfig
    reconstructor: RecTrainConfig
    verifier: VerifierConfig
    udp: UdpConfig
    uid: UidConfig
    strategies: StrategyFlags
    baseline: BaselineConfig
    dynamics: DynamicsConfig

    def model_spec(self, input_width: int, num_classes: int) -> MlpSpec:
        return MlpSpec((input_width, *self.hidden_widths, num_classes), Head.SOFTMAX_CE)

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        return config_from_document(apply_overrides(self.document, overrides))

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "ExperimentConfig":
        return config_from_document(doc)


def config_from_document(doc: Mapping[str, Any]) -> "ExperimentConfig":
    """Validates a complete document and builds the typed config tree."""
    doc = copy.deepcopy(dict(doc))
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at '{where}': {e.message}") from e

    seed = int(doc["seed"])
    ds, un, rec, ver = doc["dataset"], doc["unlearner"], doc["reconstructor"], doc["verifier"]
    udp, base, strat = doc["udp"], doc["baseline"], doc["strategies"]
    if doc["ess"] > doc["local_size"]:
        raise ConfigError(f"ess {doc['ess']} exceeds local_size {doc['local_size']}")
    if strat["keep_original_copy"] and not strat["udp_on"]:
        raise ConfigError("keep_original_copy only applies when udp_on is set")
    if strat["keep_original_copy"] and un["kind"] == UnlearnerKind.SISA.value:
        raise ConfigError("keep_original_copy changes the dataset a SISA shard map was built on")
    if ds["kind"] == "idx" and not (ds["images_path"] and ds["labels_path"]):
        raise ConfigError("an idx dataset needs images_path and labels_path")

    try:
        return ExperimentConfig(
            document=doc,
            seed=seed,
            out_dir=doc["out_dir"],
            dataset=DatasetConfig(
                kind=ds["kind"],
                synthetic=SyntheticSpec(
                    ds["num_classes"],
                    ds["dims"],
                    ds["samples_per_class"],
                    ds["class_center_spread"],
                    ds["noise_sigma"],
                    ds["blank_dims"],
                ),
                test_fraction=ds["test_fraction"],
                images_path=ds["images_path"],
                labels_path=ds["labels_path"],
                limit=ds["limit"],
            ),
            hidden_widths=tuple(doc["model"]["hidden_widths"]),
            train=TrainConfig(seed=seed, **doc["train"]),
            local_size=doc["local_size"],
            ess=doc["ess"],
            epsilon=doc["epsilon"],
            unlearner=UnlearnerConfig(
                kind=UnlearnerKind(un["kind"]),
                **{k: v for k, v in un.items() if k != "kind"},
            ),
            reconstructor=RecTrainConfig(seed=derive_seed(seed, SEED_RECONSTRUCTOR), **rec),
            verifier=VerifierConfig(
                train=TrainConfig(
                    epochs=ver["epochs"],
                    batch_size=ver["batch_size"],
                    learning_rate=ver["learning_rate"],
                    seed=derive_seed(seed, SEED_VERIFIER),
                ),
                hidden_width=ver["hidden_width"],
                dedupe_positives=ver["dedupe_positives"],
            ),
            udp=UdpConfig(seed=derive_seed(seed, SEED_UDP), epsilon=doc["epsilon"], **udp),
            uid=UidConfig(sigma=doc["uid"]["sigma"], seed=derive_seed(seed, SEED_UID)),
            strategies=StrategyFlags(**strat),
            baseline=BaselineConfig(
                kind=base["kind"],
                trigger=TriggerSpec(
                    IndexSet.of(base["patch_indices"]),
                    base["patch_value"],
                    base["target_label"],
                ),
                establish_threshold=base["establish_threshold"],
                removed_threshold=base["removed_threshold"],
            ),
            dynamics=DynamicsConfig(**doc["dynamics"]),
        )
    except ArgumentError as e:
        raise ConfigError(f"invalid config: {e}") from e


def default_document(profile: str = "desk") -> dict[str, Any]:
    """The profile, with `TAPE_OUT_DIR` as the default output directory."""
    doc = get_profile(profile)
    if env_out := os.environ.get("TAPE_OUT_DIR"):
        doc["out_dir"] = env_out
    return doc


def read_config_file(path: Union[str, Path]) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise MissingConfigError(str(path))
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse config '{path}': {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"config '{path}' must hold a JSON object")
    return doc


def load_config(
    path: Optional[Union[str, Path]] = None,
    profile: str = "desk",
    **overrides: Any,
) -> ExperimentConfig:
    """defaults < config file < overrides."""
    doc = default_document(profile)
    if path is not None:
        doc = deep_merge(doc, read_config_file(path))
    return config_from_document(apply_overrides(doc, overrides))
