"""File operations: sample CSV input, result tables and their JSON sidecars."""

from contextlib import contextmanager
import csv
import json
import os
from pathlib import Path
import tempfile
from typing import Any, Dict, Iterator, Optional, Union

import numpy as np

from rftwosample.utils.error_handling import InputFormatError


def ensure_directory(directory_path: Union[str, Path]) -> Path:
    """Create ``directory_path`` (and its parents) when missing; returns it as a Path."""
    path = Path(directory_path)
    path.mkdir(parents=True, exist_ok=True)
    return path


@contextmanager
def atomic_output(file_path: Union[str, Path], newline: Optional[str] = None) -> Iterator[Any]:
    """
    Open a sibling temporary file for writing and move it over ``file_path`` on success.

    Readers never observe a half-written file; on failure the target is left untouched.

    Args:
        file_path: Final location of the file
        newline: Passed to ``open`` (use "" for csv writers)

    Yields:
        Text file handle
    """
    path = Path(file_path)
    ensure_directory(path.parent)
    fd, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    temp_path = Path(temp_name)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline=newline) as handle:
            yield handle
        os.replace(temp_path, path)
    finally:
        if temp_path.exists():
            temp_path.unlink()


def save_state(file_path: Union[str, Path], state: Dict[str, Any]) -> None:
    """Write a metadata sidecar as sorted, indented JSON through ``atomic_output``."""
    with atomic_output(file_path) as handle:
        json.dump(state, handle, indent=2, sort_keys=True)
        handle.write("\n")


def load_state(file_path: Union[str, Path]) -> Optional[Dict[str, Any]]:
    """Read a metadata sidecar; None when there is none."""
    path = Path(file_path)
    if not path.exists():
        return None

    with path.open("r", encoding="utf-8") as f:
        return json.load(f)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_sample_csv(file_path: Union[str, Path]) -> np.ndarray:
    """
    Read a sample as an n x p matrix: one observation per row, one feature per column.

    A first row with any non-numeric cell is taken as a header and skipped.

    Args:
        file_path: Path to a comma-separated file

    Returns:
        Float matrix of shape (n, p)

    Raises:
        InputFormatError: unreadable file, ragged rows, non-numeric or non-finite cells, no data rows
    """
    path = Path(file_path)
    try:
        with path.open("r", encoding="utf-8", newline="") as handle:
            lines = [(lineno, row) for lineno, row in enumerate(csv.reader(handle), start=1) if row]
    except (OSError, UnicodeDecodeError, csv.Error) as e:
        raise InputFormatError(f"cannot read file: {e}", path=str(path)) from e

    if lines and not all(_is_number(cell.strip()) for cell in lines[0][1]):
        lines = lines[1:]
    if not lines:
        raise InputFormatError("no data rows", path=str(path))

    width = len(lines[0][1])
    values = np.empty((len(lines), width))
    for i, (lineno, row) in enumerate(lines):
        if len(row) != width:
            raise InputFormatError(f"expected {width} columns, found {len(row)}", path=str(path), line=lineno)
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell.strip())
            except ValueError:
                raise InputFormatError(f"non-numeric cell {cell!r}", path=str(path), line=lineno, column=j + 1) from None
            if not np.isfinite(values[i, j]):
                raise InputFormatError(f"non-finite cell {cell!r}", path=str(path), line=lineno, column=j + 1)
    return values
