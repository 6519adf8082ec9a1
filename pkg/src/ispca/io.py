"""CSV/JSON readers and writers; outputs are staged and renamed into place."""
from __future__ import annotations

import contextlib
import csv
import json
import math
import os
import shutil
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import DataMatrix, as_data_matrix
from .errors import DataError, UsageError

FLOAT_FMT = "%.17g"


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        x = float(text)
    except ValueError:
        x = math.nan
    if not math.isfinite(x):
        raise DataError(f"non-numeric cell {text!r} at row {row}, column {col}")
    return x


def read_matrix_csv(path, has_header: bool = False, delimiter: str = ",",
                    center: bool = True, transpose: bool = False,
                    log2: bool = False) -> DataMatrix:
    """Read a numeric CSV with observations as rows.

    Row and column numbers in error messages are 1-based positions in the
    file. With ``transpose`` the file is read as variables-by-observations
    and the header (if any) is dropped, since it then names observations.
    ``log2`` applies ``log2(x)`` before centering and needs positive cells.
    """
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"input file {str(path)!r} not found")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter)]
    while rows and not any(cell.strip() for cell in rows[-1]):
        rows.pop()
    if not rows:
        raise DataError(f"{path} is empty")
    labels = None
    first = 1
    if has_header:
        labels = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first = 2
        if not rows:
            raise DataError(f"{path} has a header but no data rows")
    width = len(labels) if labels is not None else len(rows[0])
    values = np.empty((len(rows), width))
    for i, r in enumerate(rows):
        line = first + i
        if len(r) != width:
            raise DataError(f"ragged row {line}: {len(r)} fields, expected {width}")
        for j, cell in enumerate(r):
            values[i, j] = _parse_cell(cell.strip(), line, j + 1)
    if log2:
        if np.any(values <= 0):
            i, j = np.argwhere(values <= 0)[0]
            raise DataError(f"log2 needs positive cells; row {first + i}, column {j + 1} "
                            f"is {values[i, j]!r}")
        values = np.log2(values)
    if transpose:
        values = values.T
        labels = None
    if values.shape[0] < 2:
        raise DataError(f"need at least 2 observations, got {values.shape[0]}")
    return as_data_matrix(values, labels, center=center)


def read_labels(path, n: Optional[int] = None) -> list:
    """One group label per line, in observation order."""
    lines = Path(path).read_text().splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    labels = [ln.strip() for ln in lines]
    if n is not None and len(labels) != n:
        raise DataError(f"label file has {len(labels)} rows, data has {n} observations")
    return labels


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"file {str(path)!r} not found") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % x
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def write_matrix_csv(path, M: np.ndarray, header: Sequence[str]):
    write_csv(path, header, np.asarray(M).tolist())


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


@contextlib.contextmanager
def staged_outputs(out_dir):
    """Yield a scratch directory; its files move into ``out_dir`` only on success."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    try:
        yield tmp
        for f in sorted(tmp.iterdir()):
            os.replace(f, out_dir / f.name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
