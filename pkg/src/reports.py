#
# file: reports.py
#
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Union

import jsonschema
import pandas as pd

from .utils.errors import ArgumentError, ConfigError

REPORT_FORMAT = "tape-report-1"
BASE_TRAIN = "base_train"

REPORT_SCHEMA = {
    "type": "object",
    "required": [
        "format_version",
        "kind",
        "seed",
        "model_accuracy",
        "rec_similarity",
        "verifiability",
        "timings",
    ],
    "properties": {
        "format_version": {"const": REPORT_FORMAT},
        "kind": {"enum": ["tape", "mib"]},
        "seed": {"type": "integer", "minimum": 0},
        "model_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "rec_similarity": {"type": ["number", "null"]},
        "verifiability": {"type": "number", "minimum": 0, "maximum": 1},
        "timings": {
            "type": "object",
            "additionalProperties": {"type": "number", "minimum": 0},
        },
        "extras": {"type": "object"},
        "config": {"type": "object"},
    },
}


@dataclass(frozen=True)
class TimingRecord:
    phase: str
    seconds: float

    def __post_init__(self):
        if self.seconds < 0:
            raise ArgumentError(f"negative duration for phase '{self.phase}'")


@dataclass
class AuditReport:
    """
    Metrics of one audit (`kind="tape"`) or one backdoor baseline run
    (`kind="mib"`). `rec_similarity` is None for the baseline.
    """

    kind: str
    seed: int
    model_accuracy: float
    rec_similarity: float | None
    verifiability: float
    timings: dict[str, float] = field(default_factory=dict)
    extras: dict[str, Any] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("model_accuracy", "verifiability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ArgumentError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if any(secs < 0 for secs in self.timings.values()):
            raise ArgumentError(f"timings must be >= 0, got {self.timings}")

    def timing_records(self) -> list[TimingRecord]:
        return [TimingRecord(phase, secs) for phase, secs in self.timings.items()]

    @property
    def audit_seconds(self) -> float:
        """Verification cost of TAPE: every phase except original training."""
        return sum(s for p, s in self.timings.items() if p != BASE_TRAIN)

    @property
    def baseline_seconds(self) -> float:
        """Verification cost of the backdoor baseline, original training included."""
        return sum(self.timings.values())

    def to_document(self) -> dict[str, Any]:
        return {"format_version": REPORT_FORMAT, **asdict(self)}

    @classmethod
    def from_document(cls, doc: dict[str, Any]) -> "AuditReport":
        jsonschema.validate(doc, REPORT_SCHEMA)
        fields = {k: v for k, v in doc.items() if k != "format_version"}
        return cls(**fields)


def save_report(report: AuditReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_document(), indent=2, sort_keys=True))
    return path


def load_report(path: Union[str, Path]) -> AuditReport:
    try:
        doc = json.loads(Path(path).read_text())
        return AuditReport.from_document(doc)
    except (OSError, json.JSONDecodeError, jsonschema.ValidationError, TypeError) as e:
        raise ConfigError(f"cannot read report '{path}': {e}") from e


def report_table(report: AuditReport) -> pd.DataFrame:
    rows = [
        ("kind", report.kind),
        ("seed", report.seed),
        ("model_accuracy", f"{report.model_accuracy:.4f}"),
        (
            "rec_similarity",
            "-" if report.rec_similarity is None else f"{report.rec_similarity:.4f}",
        ),
        ("verifiability", f"{report.verifiability:.4f}"),
    ]
    rows += [(f"time.{r.phase}", f"{r.seconds:.3f}s") for r in report.timing_records()]
    if report.kind == "tape":
        rows.append(("audit_seconds", f"{report.audit_seconds:.3f}s"))
    else:
        rows.append(("baseline_seconds", f"{report.baseline_seconds:.3f}s"))
    rows += [(key, str(value)) for key, value in sorted(report.extras.items())]
    return pd.DataFrame(rows, columns=["metric", "value"])


def render_report(report: AuditReport) -> str:
    """Aligned two-column text table."""
    return report_table(report).to_string(index=False, justify="left")
