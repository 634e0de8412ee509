#
# file: sweep.py
#
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd
from logger_tt import logger

from .audit_manager import run_mib_baseline, run_tape_audit
from .utils.config import ExperimentConfig
from .utils.errors import ArgumentError

SWEEP_COLUMNS = [
    "axis",
    "axis_value",
    "seed",
    "model_acc",
    "rec_sim",
    "verifiability",
    "audit_seconds",
    "baseline_seconds",
]
SWEEP_AXES = {"ess": "ess", "alpha": "udp.alpha"}
TIMING_COLUMNS = ["audit_seconds", "baseline_seconds"]


def parse_axis_values(axis: str, text: str) -> list[float | int]:
    """'0,0.1,0.2' -> [0.0, 0.1, 0.2]; ess values must be integers."""
    if axis not in SWEEP_AXES:
        raise ArgumentError(f"unknown sweep axis '{axis}' (expected one of {list(SWEEP_AXES)})")
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ArgumentError("a sweep needs at least one axis value")
    try:
        return [int(p) for p in parts] if axis == "ess" else [float(p) for p in parts]
    except ValueError as e:
        raise ArgumentError(f"bad {axis} value list '{text}': {e}") from e


def run_cell(cfg: ExperimentConfig, axis: str, value, seed: int) -> dict:
    """One (axis value, seed) audit; a failing cell keeps empty metric columns."""
    row = {"axis": axis, "axis_value": value, "seed": seed}
    try:
        cell = cfg.with_overrides(seed=seed, **{SWEEP_AXES[axis]: value})
        report = run_tape_audit(cell, write=False)
        row.update(
            model_acc=report.model_accuracy,
            rec_sim=report.rec_similarity,
            verifiability=report.verifiability,
            audit_seconds=report.audit_seconds,
        )
        if cell.baseline.kind == "mib":
            # The trigger patch shares the UDP perturbation limit on the alpha axis.
            trigger_alpha = value if axis == "alpha" else None
            baseline = run_mib_baseline(cell, write=False, trigger_alpha=trigger_alpha)
            row["baseline_seconds"] = baseline.baseline_seconds
    except Exception as e:
        logger.error(f"sweep cell {axis}={value} seed={seed} failed: {e}")
    return row


def sweep(
    cfg: ExperimentConfig,
    axis: str,
    values: Sequence,
    seeds: Sequence[int],
    out_path: Optional[Path] = None,
) -> pd.DataFrame:
    """
    Audits every (axis value, seed) cell, rows ordered by axis value then seed.

    `baseline_seconds` is filled only when the config's baseline is `mib`.
    """
    if axis not in SWEEP_AXES:
        raise ArgumentError(f"unknown sweep axis '{axis}'")
    if not values:
        raise ArgumentError("a sweep needs at least one axis value")
    if not seeds:
        raise ArgumentError("a sweep needs at least one seed")

    rows = [run_cell(cfg, axis, value, seed) for value in values for seed in seeds]
    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    logger.info(
        f"sweep over {axis}: {len(frame)} cells, "
        f"{int(frame['verifiability'].isna().sum())} failed"
    )
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out_path, index=False)
    return frame
