"""Delimited-text formats: curve tables and right-censored trial data."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .simulator import StepCurve, TrialData

TRIAL_COLUMNS = ("id", "time", "status", "arm")


class DataError(ValueError):
    """Malformed input data file."""


def _fmt(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"curve tables hold finite numbers only, got {x}")
    return repr(x)


def format_curve_table(curves, bounds: Optional[bool] = None) -> str:
    """Render ``[(series, StepCurve), ...]`` as comma-delimited text.

    Columns are ``t,value[,lower,upper][,series]``; rows are sorted by time,
    then series label.  ``series`` is omitted when there is a single curve
    with label ``None``.  Curves without bounds repeat ``value`` in the bound
    columns when other curves carry them.
    """
    curves = list(curves)
    if bounds is None:
        bounds = any(c.lower is not None for _, c in curves)
    with_series = not (len(curves) == 1 and curves[0][0] is None)
    header = ["t", "value"] + (["lower", "upper"] if bounds else []) + (["series"] if with_series else [])

    rows = []
    for label, c in curves:
        lo = c.lower if c.lower is not None else c.values
        hi = c.upper if c.upper is not None else c.values
        for i in range(len(c)):
            rows.append((float(c.grid[i]), "" if label is None else str(label),
                         c.values[i], lo[i], hi[i]))
    rows.sort(key=lambda r: (r[0], r[1]))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for t, label, v, lo, hi in rows:
        out = [_fmt(t), _fmt(v)]
        if bounds:
            out += [_fmt(lo), _fmt(hi)]
        if with_series:
            out.append(label)
        w.writerow(out)
    return buf.getvalue()


def write_curve_table(curves, path, bounds: Optional[bool] = None) -> None:
    Path(path).write_text(format_curve_table(curves, bounds), encoding="utf-8")


def parse_curve_table(text: str) -> dict:
    """Parse a curve table into ``{series: StepCurve}`` (key ``None`` without a series column)."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty curve table") from None
    valid = (
        ["t", "value"],
        ["t", "value", "series"],
        ["t", "value", "lower", "upper"],
        ["t", "value", "lower", "upper", "series"],
    )
    if header not in valid:
        raise DataError(f"unexpected curve table header {header}")
    bounds = "lower" in header
    series_col = "series" in header
    data: dict = {}
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            nums = [float(x) for x in row[: 4 if bounds else 2]]
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric field") from None
        key = row[-1] if series_col else None
        data.setdefault(key, []).append(nums)
    out = {}
    for key, rows in data.items():
        arr = np.array(rows)
        out[key] = StepCurve(
            arr[:, 0], arr[:, 1],
            lower=arr[:, 2] if bounds else None,
            upper=arr[:, 3] if bounds else None,
        )
    return out


def read_curve_table(path) -> dict:
    return parse_curve_table(Path(path).read_text(encoding="utf-8"))


# -- trial data -------------------------------------------------------------


def parse_trial_data(text: str, stratum_column: Optional[str] = None) -> TrialData:
    """Parse comma-delimited trial records.

    The header starts with ``id,time,status,arm``; further columns are
    allowed and one of them may be selected as the stratum.

    Raises
    ------
    DataError
        With the offending line number for malformed rows.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty data file") from None
    if tuple(header[:4]) != TRIAL_COLUMNS:
        raise DataError(f"line 1: header must start with {','.join(TRIAL_COLUMNS)}, got {','.join(header)}")
    if len(set(header)) != len(header):
        raise DataError("line 1: duplicate column names")
    s_idx = None
    if stratum_column is not None:
        if stratum_column not in header[4:]:
            raise DataError(f"line 1: no stratum column {stratum_column!r}")
        s_idx = header.index(stratum_column)

    ids, times, status, arm, strata = [], [], [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            t = float(row[1])
        except ValueError:
            raise DataError(f"line {lineno}: time {row[1]!r} is not a number") from None
        if not (math.isfinite(t) and t > 0):
            raise DataError(f"line {lineno}: time must be positive and finite")
        if row[2].strip() not in ("0", "1"):
            raise DataError(f"line {lineno}: status must be 0 or 1, got {row[2]!r}")
        if row[3].strip() not in ("0", "1"):
            raise DataError(f"line {lineno}: arm must be 0 or 1, got {row[3]!r}")
        ids.append(row[0])
        times.append(t)
        status.append(int(row[2]))
        arm.append(int(row[3]))
        if s_idx is not None:
            strata.append(row[s_idx])
    if not times:
        raise DataError("data file has no records")
    return TrialData(ids, times, status, arm, strata if s_idx is not None else None)


def read_trial_data(path, stratum_column: Optional[str] = None) -> TrialData:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    return parse_trial_data(text, stratum_column)


def format_trial_data(data: TrialData, stratum_column: str = "stratum") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(TRIAL_COLUMNS) + ([stratum_column] if data.stratum is not None else [])
    w.writerow(header)
    for rec in data.records():
        row = [rec.id, repr(rec.time), rec.status, rec.arm]
        if data.stratum is not None:
            row.append(rec.stratum)
        w.writerow(row)
    return buf.getvalue()


def write_trial_data(data: TrialData, path, stratum_column: str = "stratum") -> None:
    Path(path).write_text(format_trial_data(data, stratum_column), encoding="utf-8")
