"""Loading, validating and pruning tabular welding records."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

from .errors import DataError, SchemaError

KINDS = (
    "row_id",
    "categorical",
    "numeric",
    "sensor_series",
    "target_diameter",
    "target_carbody",
)
TARGET_KINDS = ("target_diameter", "target_carbody")
PROTECTED_KINDS = ("row_id",) + TARGET_KINDS

SERIES_SEP = ";"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    unit: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if not self.name:
            raise SchemaError("column name must be non-empty")


def validate_schema(columns: Sequence[ColumnSpec]) -> None:
    names = [c.name for c in columns]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise SchemaError(f"duplicate column names: {dup}")
    kinds = [c.kind for c in columns]
    if kinds.count("row_id") != 1:
        raise SchemaError(f"exactly one row_id column required, found {kinds.count('row_id')}")
    for k in TARGET_KINDS:
        if kinds.count(k) > 1:
            raise SchemaError(f"at most one {k} column allowed")


@dataclass(frozen=True)
class TableDataset:
    """Columnar records keyed by column name.

    Cell values are ``str`` (ids, categoricals, carbody targets), ``float``
    (numeric, diameter target), ``tuple[float, ...]`` (sensor series) or
    ``None`` for missing.  ``pruned`` accumulates ``{column: reason}`` for
    every column removed by :func:`prune_columns`.
    """

    columns: tuple[ColumnSpec, ...]
    rows: tuple[dict[str, Any], ...]
    pruned: dict[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        validate_schema(self.columns)
        names = self.column_names
        seen = set()
        rid = self.row_id_column
        for i, row in enumerate(self.rows):
            missing = [n for n in names if n not in row]
            if missing:
                raise DataError(f"row {i} lacks value slots for {missing}")
            key = row[rid]
            if key is None:
                raise DataError(f"row {i} has a missing row id")
            if key in seen:
                raise DataError(f"duplicate row_id {key!r}")
            seen.add(key)

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def row_id_column(self) -> str:
        return next(c.name for c in self.columns if c.kind == "row_id")

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise DataError(f"unknown column {name!r}")

    def columns_of(self, *kinds: str) -> list[ColumnSpec]:
        return [c for c in self.columns if c.kind in kinds]

    def target(self, kind: str) -> ColumnSpec | None:
        found = self.columns_of(kind)
        return found[0] if found else None

    def values(self, name: str) -> list[Any]:
        return [row[name] for row in self.rows]

    def __len__(self) -> int:
        return len(self.rows)

    def take(self, indices: Iterable[int]) -> "TableDataset":
        """Row subset in the given order."""
        return replace(self, rows=tuple(self.rows[i] for i in indices), pruned=dict(self.pruned))


def parse_schema(lines: Iterable[str]) -> list[ColumnSpec]:
    """Parse ``name,kind[,unit]`` lines; blank lines and ``#`` comments are skipped."""
    cols = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (2, 3):
            raise SchemaError(f"schema line {lineno}: expected name,kind[,unit], got {line!r}")
        cols.append(ColumnSpec(parts[0], parts[1], parts[2] if len(parts) == 3 and parts[2] else None))
    validate_schema(cols)
    return cols


def load_schema(path: str | Path) -> list[ColumnSpec]:
    with open(path, encoding="utf-8") as fh:
        return parse_schema(fh)


def write_schema(columns: Sequence[ColumnSpec], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in columns:
            fh.write(f"{c.name},{c.kind}" + (f",{c.unit}" if c.unit else "") + "\n")


def _parse_cell(text: str, col: ColumnSpec, lineno: int) -> Any:
    text = text.strip()
    if text == "":
        return None
    if col.kind in ("numeric", "target_diameter"):
        try:
            value = float(text)
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric value {text!r} in column {col.name!r}") from None
        if not math.isfinite(value):
            raise DataError(f"line {lineno}: non-finite value in column {col.name!r}")
        return value
    if col.kind == "sensor_series":
        try:
            seq = tuple(float(p) for p in text.split(SERIES_SEP) if p.strip() != "")
        except ValueError:
            raise DataError(f"line {lineno}: malformed series in column {col.name!r}") from None
        if not all(math.isfinite(v) for v in seq):
            raise DataError(f"line {lineno}: non-finite series value in column {col.name!r}")
        return seq or None
    return text


def load_table(path: str | Path, schema: Sequence[ColumnSpec]) -> TableDataset:
    """Read a comma-delimited UTF-8 file with a header line.

    Columns not declared in ``schema`` are ignored; declared columns absent
    from the header are an error.
    """
    validate_schema(schema)
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        missing = [c.name for c in schema if c.name not in header]
        if missing:
            raise DataError(f"{path}: missing declared columns {missing}")
        pos = {c.name: header.index(c.name) for c in schema}
        rows = []
        for lineno, rec in enumerate(reader, 2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: line {lineno} has {len(rec)} fields, header has {len(header)}")
            rows.append({c.name: _parse_cell(rec[pos[c.name]], c, lineno) for c in schema})
    return TableDataset(tuple(schema), tuple(rows))


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return SERIES_SEP.join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(ds: TableDataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.column_names)
        for row in ds.rows:
            w.writerow([_format_cell(row[n]) for n in ds.column_names])


def prune_columns(ds: TableDataset) -> TableDataset:
    """Drop empty and constant columns; row id and targets are always kept.

    A column is constant when it has exactly one distinct non-missing value.
    Removed columns and the reason (``"empty"`` or ``"constant"``) are added
    to ``pruned`` on the returned dataset.
    """
    keep, report = [], dict(ds.pruned)
    for col in ds.columns:
        if col.kind in PROTECTED_KINDS:
            keep.append(col)
            continue
        present = {v for v in ds.values(col.name) if v is not None}
        if not present:
            report[col.name] = "empty"
        elif len(present) == 1:
            report[col.name] = "constant"
        else:
            keep.append(col)
    if len(keep) == len(ds.columns):
        return replace(ds, pruned=report)
    names = [c.name for c in keep]
    rows = tuple({n: row[n] for n in names} for row in ds.rows)
    return TableDataset(tuple(keep), rows, report)


def select_features(ds: TableDataset, keep: Sequence[str]) -> TableDataset:
    """Project onto ``keep`` (in the dataset's column order), preserving rows."""
    known = set(ds.column_names)
    unknown = [k for k in keep if k not in known]
    if unknown:
        raise DataError(f"unknown columns {unknown}")
    wanted = set(keep)
    dropped = [c.name for c in ds.columns if c.kind in PROTECTED_KINDS and c.name not in wanted]
    if dropped:
        raise DataError(f"cannot drop row id or target columns: {dropped}")
    cols = tuple(c for c in ds.columns if c.name in wanted)
    rows = tuple({c.name: row[c.name] for c in cols} for row in ds.rows)
    return TableDataset(cols, rows, dict(ds.pruned))
