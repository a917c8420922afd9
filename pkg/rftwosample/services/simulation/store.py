"""CSV + JSON-sidecar persistence of study results.

The CSV holds one row per (grid point, test) in STUDY_COLUMNS order; floats are
written with ``repr`` so they read back exactly. The sidecar ``<name>.meta.json``
carries the schema version, the spec echo, its fingerprint and the grid points
already completed, which is what a resumed study checks against.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, TextIO, Tuple, Union

from rftwosample import __version__
from rftwosample.models.reports import (
    STUDY_COLUMNS,
    VAR_CHECK_COLUMNS,
    StudyResult,
    StudyRow,
    VarCheckResult,
    VarCheckRow,
)
from rftwosample.utils.error_handling import ResultIOError, ResultVersionError, handle_io_errors
from rftwosample.utils.file_ops import atomic_output, load_state, save_state

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

Result = Union[StudyResult, VarCheckResult]


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".meta.json")


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _study_cells(row: StudyRow) -> List[str]:
    return [_format(getattr(row, column)) for column in STUDY_COLUMNS]


def _var_check_cells(row: VarCheckRow) -> List[str]:
    return [_format(getattr(row, column)) for column in VAR_CHECK_COLUMNS]


def _table(result: Result) -> Tuple[str, List[str], List[List[str]]]:
    if isinstance(result, StudyResult):
        return "study", STUDY_COLUMNS, [_study_cells(r) for r in result.rows]
    return "var_check", VAR_CHECK_COLUMNS, [_var_check_cells(r) for r in result.rows]


def write_table(result: Result, handle: TextIO) -> None:
    """Write the CSV table of ``result`` (header first) to an open text handle."""
    _, columns, cells = _table(result)
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(cells)


@handle_io_errors("Failed to persist result")
def persist(result: Result, path: Union[str, Path], completed: Optional[List[str]] = None) -> None:
    """Write the table and its sidecar; each file is replaced atomically."""
    path = Path(path)
    kind, columns, cells = _table(result)

    meta: Dict[str, object] = {
        "schema_version": SCHEMA_VERSION,
        "artifact_version": __version__,
        "kind": kind,
        "columns": columns,
        "base_seed": result.base_seed,
        "fingerprint": result.fingerprint,
        "spec": result.spec,
        "completed": list(completed or []),
        "aborted": list(result.aborted),
    }

    try:
        with atomic_output(path, newline="") as handle:
            write_table(result, handle)
        save_state(sidecar_path(path), meta)
    except OSError as e:
        raise ResultIOError(f"cannot write result: {e}", path=str(path)) from e
    logger.info(f"Persisted {len(cells)} rows to {path}")


def load_meta(path: Union[str, Path]) -> Optional[Dict[str, object]]:
    """Sidecar of ``path`` after the version check, or None when there is none.

    Raises:
        ResultVersionError: the sidecar was written by another schema version
    """
    meta_path = sidecar_path(path)
    try:
        meta = load_state(meta_path)
    except (OSError, json.JSONDecodeError) as e:
        raise ResultIOError(f"cannot read sidecar: {e}", path=str(meta_path)) from e
    if meta is None:
        return None
    version = meta.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ResultVersionError(
            f"{meta_path}: schema version {version!r}, this build reads version {SCHEMA_VERSION}"
        )
    return meta


def _parse(value: str, kind: type):
    if value == "":
        return None
    return kind(value)


@handle_io_errors("Failed to load result")
def load(path: Union[str, Path]) -> Result:
    path = Path(path)
    meta = load_meta(path)
    if meta is None:
        raise ResultIOError("missing metadata sidecar", path=str(sidecar_path(path)))
    kind = meta.get("kind")
    columns = STUDY_COLUMNS if kind == "study" else VAR_CHECK_COLUMNS
    try:
        with path.open("r", encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            records = [dict(zip(columns, cells)) for cells in reader if cells]
    except OSError as e:
        raise ResultIOError(f"cannot read result: {e}", path=str(path)) from e
    if header != columns:
        raise ResultVersionError(f"{path}: column header {header} does not match {columns}")

    common = dict(base_seed=meta["base_seed"], fingerprint=meta.get("fingerprint", ""), spec=meta.get("spec", {}))
    if kind == "study":
        rows = [
            StudyRow(
                scenario_family=r["scenario_family"],
                knob=float(r["knob"]),
                p=int(r["p"]),
                d=int(r["d"]),
                n_per_class=int(r["n_per_class"]),
                test=r["test"],
                S=int(r["S"]),
                rejections=int(r["rejections"]),
                power=float(r["power"]),
                failures=int(r["failures"]),
                mean_runtime_ms=_parse(r["mean_runtime_ms"], float),
                grid_label=r["grid_label"],
            )
            for r in records
        ]
        return StudyResult(rows=rows, aborted=meta.get("aborted", []), **common)
    rows = [
        VarCheckRow(
            K=int(r["K"]),
            repetition=int(r["repetition"]),
            null_mean=float(r["null_mean"]),
            null_variance=float(r["null_variance"]),
        )
        for r in records
    ]
    return VarCheckResult(rows=rows, aborted=meta.get("aborted", []), **common)
