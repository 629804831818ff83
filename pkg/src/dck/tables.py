"""CSV input and output shared by the command-line tools.

Files are comma separated with a header row. Lines starting with ``#`` are
comments (the provenance header) and are skipped on read.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import DataError


def _number(cell: str):
    return float(cell) if cell.strip() else math.nan


def read_csv(path, required: Sequence[str] = (), numeric: Optional[Sequence[str]] = None) -> dict:
    """Columns of ``path`` as float arrays (or strings for non-numeric columns).

    ``required`` columns must exist. Columns listed in ``numeric`` (default: all
    except the ``source`` column) must parse as floats; the error names the row.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in csv.reader(line for line in text.splitlines() if not line.startswith("#"))
            if r]
    if not rows:
        raise DataError(f"{path}: no header row")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names")
    numeric = [h for h in header if h != "source"] if numeric is None else list(numeric)
    body = rows[1:]
    out = {}
    for j, name in enumerate(header):
        cells = []
        for i, row in enumerate(body):
            if len(row) != len(header):
                raise DataError(f"{path}: data row {i + 1} has {len(row)} fields, header has {len(header)}")
            cells.append(row[j].strip())
        if name in numeric:
            vals = np.empty(len(cells))
            for i, cell in enumerate(cells):
                try:
                    vals[i] = _number(cell)
                except ValueError:
                    raise DataError(f"{path}: non-numeric value {cell!r} in column {name!r}, "
                                    f"data row {i + 1}") from None
            out[name] = vals
        else:
            out[name] = np.array(cells, dtype=object)
    return out


def format_number(v) -> str:
    if isinstance(v, str):
        return v
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def csv_text(columns: dict, provenance: Optional[str] = None) -> str:
    names = list(columns)
    cols = [np.asarray(columns[c]) for c in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise DataError("columns differ in length")
    lines = [] if provenance is None else [provenance]
    lines.append(",".join(names))
    for i in range(n):
        lines.append(",".join(format_number(c[i]) if c.dtype != object else str(c[i]) for c in cols))
    return "\n".join(lines) + "\n"


def locations_of(table: dict) -> np.ndarray:
    return np.column_stack([table["x"], table["y"]])


def covariates_of(table: dict) -> Optional[np.ndarray]:
    names = sorted((c for c in table if c[:1] == "x" and c[1:].isdigit()), key=lambda c: int(c[1:]))
    if not names:
        return None
    return np.column_stack([table[c] for c in names])
