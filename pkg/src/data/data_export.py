"""
Data export functionality for quasi-radial tree experiments.
Handles CSV series, gnuplot data and JSON run records in organized run folders.
"""

import csv
import json
import math
import os
from datetime import datetime
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from src.core.models import RunRecord


def to_jsonable(value: Any) -> Any:
    """NamedTuples, Fractions, Enums and tuples as plain JSON values; inf and nan as strings."""
    if hasattr(value, "_asdict"):
        return {k: to_jsonable(v) for k, v in value._asdict().items()}
    if isinstance(value, dict):
        return {str(to_jsonable(k)): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = sorted(value) if isinstance(value, (set, frozenset)) else value
        return [to_jsonable(v) for v in items]
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


def create_run_folder(
    kind: str,
    config_hash: str,
    base_dir: Path,
    folder_config: Optional[Dict[str, Any]] = None,
) -> Tuple[Path, str]:
    """Create the run folder.

    Returns: (results_dir, filename_base) for the writers below
    """
    if folder_config is None:
        folder_config = {}

    datetime_str = datetime.now().strftime("%Y-%m-%d_%H%M%S")
    short_hash = config_hash[:8]

    if folder_config.get("use_custom_only", False) and folder_config.get("custom_folder_name"):
        folder_name = folder_config["custom_folder_name"]
    elif folder_config.get("custom_folder_name"):
        folder_name = f"{folder_config['custom_folder_name']}_{kind}_{short_hash}"
    else:
        folder_name = f"{datetime_str}_{kind}_{short_hash}"
        if folder_config.get("folder_suffix"):
            folder_name += folder_config["folder_suffix"]

    filename_base = f"{kind}_{short_hash}"
    results_dir = Path(base_dir) / folder_name
    os.makedirs(results_dir, exist_ok=True)
    return results_dir, filename_base


def write_series_csv(
    rows: Sequence[Dict[str, Any]], results_dir: Path, filename_base: str, name: str
) -> Path:
    """One CSV per series with a named header row; columns in first-seen order."""
    fieldnames: List[str] = []
    for row in rows:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)

    csv_path = Path(results_dir) / f"{filename_base}_{name}.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.DictWriter(csvfile, fieldnames=fieldnames, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: to_jsonable(v) for k, v in row.items()})
    return csv_path


def write_plot_data(
    points: Sequence[Tuple[float, float]],
    results_dir: Path,
    filename_base: str,
    name: str,
    labels: Tuple[str, str] = ("x", "y"),
) -> Path:
    """Two whitespace-separated columns, readable by gnuplot's `plot 'file' using 1:2`."""
    dat_path = Path(results_dir) / f"{filename_base}_{name}.dat"
    with open(dat_path, "w", encoding="utf-8") as f:
        f.write(f"# {labels[0]} {labels[1]}\n")
        for x, y in points:
            f.write(f"{x!r} {y!r}\n")
    return dat_path


def record_path(record: RunRecord, results_dir: Path, filename_base: str) -> Path:
    final_filename_base = filename_base
    if record.failed_step is not None and "_partial" not in filename_base:
        final_filename_base += "_partial"
    return Path(results_dir) / f"{final_filename_base}_record.json"


def write_run_record(record: RunRecord, results_dir: Path, filename_base: str) -> Path:
    """JSON record; a failed run gets the _partial suffix."""
    json_path = record_path(record, results_dir, filename_base)
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(record.model_dump(mode="json"), f, indent=2, sort_keys=True)
        f.write("\n")
    return json_path


def finalize_run(record: RunRecord, results_dir: Path, filename_base: str) -> str:
    """Write the verdict summary CSV and the JSON record, then report where they went."""
    summary_path = write_series_csv(
        [
            {
                "kind": record.kind.value,
                "config_hash": record.config_hash,
                "artifact_version": record.artifact_version,
                "verdict": name,
                "passed": passed,
                "truncated": record.truncated,
                "failed_step": record.failed_step,
                "run_status": "PARTIAL" if record.failed_step is not None else "COMPLETE",
                "export_timestamp": datetime.now().strftime("%Y%m%d_%H%M%S"),
            }
            for name, passed in sorted(record.verdicts.items())
        ]
        or [{"kind": record.kind.value, "config_hash": record.config_hash, "failed_step": record.failed_step}],
        results_dir,
        filename_base,
        "summary",
    )
    record.outputs.append(str(summary_path))
    record.outputs.append(str(record_path(record, results_dir, filename_base)))
    written = write_run_record(record, results_dir, filename_base)

    folder_name = os.path.basename(results_dir)
    status_indicator = "⚠️ PARTIAL" if record.failed_step is not None else "✅ COMPLETE"
    print(f"  Status: {status_indicator} ({len(record.verdicts)} verdicts)")
    print(f"  • Summary: {summary_path.name}")
    print(f"  • Record: {written.name}")
    return folder_name
