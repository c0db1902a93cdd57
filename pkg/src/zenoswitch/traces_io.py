"""CSV persistence for scan traces.

Schema: header ``delta_hz,through,drop,condition,trial_id``; one row per
sample; floats written with 17 significant digits so a read/write cycle
is exact.  Averaged and derived traces carry ``trial_id = -1``.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .virtual_experiment import CONDITIONS, DIFFERENCE, ScanTrace

HEADER = ("delta_hz", "through", "drop", "condition", "trial_id")
VALID_CONDITIONS = CONDITIONS + (DIFFERENCE, "mixed")


class TraceSchemaError(ValueError):
    """A trace file does not follow the CSV schema.

    ``row`` is 1-based counting the header as row 1; ``column`` is the
    column name, when one is implicated.
    """

    def __init__(self, path, row: int | None, column: str | None, message: str):
        where = f"{path}"
        if row is not None:
            where += f", row {row}"
        if column is not None:
            where += f", column {column}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.row = row
        self.column = column


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def trace_to_csv(trace: ScanTrace) -> str:
    buf = io.StringIO()
    buf.write(",".join(HEADER) + "\n")
    for d, t, r in zip(trace.axis, trace.through, trace.drop):
        buf.write(f"{_fmt(d)},{_fmt(t)},{_fmt(r)},{trace.condition},{trace.trial_id}\n")
    return buf.getvalue()


def write_trace(trace: ScanTrace, path: str | Path) -> None:
    atomic_write_text(Path(path), trace_to_csv(trace))


def trace_from_csv(text: str, path: str | Path = "<string>") -> ScanTrace:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise TraceSchemaError(path, None, None, "empty file")
    if tuple(rows[0]) != HEADER:
        raise TraceSchemaError(path, 1, None, f"header must be {','.join(HEADER)}, got {','.join(rows[0])}")
    if len(rows) < 2:
        raise TraceSchemaError(path, None, None, "no data rows")
    cols: dict[str, list] = {h: [] for h in HEADER}
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(HEADER):
            raise TraceSchemaError(path, n, None, f"expected {len(HEADER)} fields, got {len(row)}")
        for name, value in zip(HEADER[:3], row[:3]):
            try:
                v = float(value)
            except ValueError:
                raise TraceSchemaError(path, n, name, f"not a number: {value!r}") from None
            if not np.isfinite(v):
                raise TraceSchemaError(path, n, name, f"not finite: {value!r}")
            cols[name].append(v)
        if row[3] not in VALID_CONDITIONS:
            raise TraceSchemaError(path, n, "condition", f"unknown condition {row[3]!r}")
        try:
            tid = int(row[4])
        except ValueError:
            raise TraceSchemaError(path, n, "trial_id", f"not an integer: {row[4]!r}") from None
        if n > 2 and (row[3] != cols["condition"][0] or tid != cols["trial_id"][0]):
            raise TraceSchemaError(path, n, "condition" if row[3] != cols["condition"][0] else "trial_id",
                                   "condition and trial_id must be constant within a file")
        cols["condition"].append(row[3])
        cols["trial_id"].append(tid)
    delta = np.array(cols["delta_hz"])
    if len(delta) > 1 and not np.all(np.diff(delta) > 0):
        raise TraceSchemaError(path, None, "delta_hz", "detuning axis must be strictly increasing")
    return ScanTrace(delta, np.array(cols["through"]), np.array(cols["drop"]), cols["condition"][0], cols["trial_id"][0])


def read_trace(path: str | Path) -> ScanTrace:
    path = Path(path)
    return trace_from_csv(path.read_text(), path)


def trial_filename(trace: ScanTrace) -> str:
    return f"trial_{trace.trial_id:04d}_{trace.condition}.csv"


def read_trace_dir(directory: str | Path) -> list[ScanTrace]:
    """Read every ``trial_*.csv`` under ``directory`` (or its ``trials/`` subfolder)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise TraceSchemaError(directory, None, None, "not a directory")
    sub = directory / "trials"
    root = sub if sub.is_dir() else directory
    files = sorted(root.glob("trial_*.csv"))
    if not files:
        raise TraceSchemaError(directory, None, None, "no trial_*.csv trace files found")
    return [read_trace(f) for f in files]


def write_json(data: dict, path: str | Path) -> None:
    atomic_write_text(Path(path), json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_table(columns: dict[str, Iterable], path: str | Path) -> None:
    """Write equal-length numeric columns as CSV."""
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    lines = [",".join(names)]
    for row in zip(*data):
        lines.append(",".join(_fmt(v) for v in row))
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def read_table(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    rows = list(csv.reader(io.StringIO(path.read_text())))
    if not rows:
        raise TraceSchemaError(path, None, None, "empty file")
    names = rows[0]
    out = {n: [] for n in names}
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != len(names):
            raise TraceSchemaError(path, k, None, f"expected {len(names)} fields, got {len(row)}")
        for n, v in zip(names, row):
            try:
                out[n].append(float(v))
            except ValueError:
                raise TraceSchemaError(path, k, n, f"not a number: {v!r}") from None
    return {n: np.array(v) for n, v in out.items()}
