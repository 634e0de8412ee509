#
# file: src/utils/nn/checkpoint.py
#
import json
from pathlib import Path
from typing import Any, Union

import jsonschema

from ..errors import ConfigError
from .mlp import MlpSpec, ModelParams

CHECKPOINT_FORMAT = "tape-ckpt-1"

_MODEL_SCHEMA = {
    "type": "object",
    "required": ["spec", "values"],
    "properties": {
        "spec": {
            "type": "object",
            "required": ["layer_widths", "head"],
            "properties": {
                "layer_widths": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 2,
                },
                "head": {"enum": ["softmax-ce", "mse"]},
            },
        },
        "values": {"type": "array", "items": {"type": "number"}},
    },
}

CHECKPOINT_SCHEMA = {
    "type": "object",
    "required": ["format_version", "seed"],
    "properties": {
        "format_version": {"const": CHECKPOINT_FORMAT},
        "seed": {"type": "integer", "minimum": 0},
        "spec": _MODEL_SCHEMA["properties"]["spec"],
        "values": _MODEL_SCHEMA["properties"]["values"],
        "models": {"type": "object", "additionalProperties": _MODEL_SCHEMA},
    },
    "anyOf": [{"required": ["spec", "values"]}, {"required": ["models"]}],
}


def params_to_document(params: ModelParams) -> dict[str, Any]:
    # float.__repr__ is the shortest string that round-trips, so values are exact.
    return {"spec": params.spec.to_dict(), "values": params.values.tolist()}


def params_from_document(doc: dict[str, Any]) -> ModelParams:
    return ModelParams(MlpSpec.from_dict(doc["spec"]), doc["values"])


def write_document(path: Union[str, Path], doc: dict[str, Any]):
    doc = {"format_version": CHECKPOINT_FORMAT, **doc}
    jsonschema.validate(doc, CHECKPOINT_SCHEMA)
    Path(path).write_text(json.dumps(doc, indent=1))


def read_document(path: Union[str, Path]) -> dict[str, Any]:
    try:
        doc = json.loads(Path(path).read_text())
        jsonschema.validate(doc, CHECKPOINT_SCHEMA)
    except (OSError, json.JSONDecodeError, jsonschema.ValidationError) as e:
        raise ConfigError(f"cannot read checkpoint '{path}': {e}") from e
    return doc


def save_checkpoint(path: Union[str, Path], params: ModelParams, seed: int):
    write_document(path, {"seed": int(seed), **params_to_document(params)})


def load_checkpoint(path: Union[str, Path]) -> tuple[ModelParams, int]:
    doc = read_document(path)
    if "spec" not in doc:
        raise ConfigError(f"'{path}' holds a multi-model checkpoint")
    return params_from_document(doc), int(doc["seed"])
