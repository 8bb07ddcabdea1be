"""Typed in-memory tables: the grounding context for questions, SQL and execution.

Tables are immutable after load. Cell text is stored verbatim; any
normalization happens in the comparators, not here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

from sketchsql.errors import BoundsError, TableParseError, TableValidationError


class ColType(Enum):
    TEXT = "text"
    REAL = "real"


@dataclass(frozen=True)
class Column:
    name: str
    dtype: ColType

    def __post_init__(self):
        if not self.name:
            raise TableValidationError("column name must be nonempty")


@dataclass(frozen=True)
class Table:
    id: str
    name: str
    columns: tuple[Column, ...]
    rows: tuple[tuple, ...]

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def column_values(self, col_index: int) -> list:
        """Cells of one column in row order."""
        if not 0 <= col_index < self.n_cols:
            raise BoundsError(
                f"table {self.id}: column index {col_index} out of range for {self.n_cols} columns"
            )
        return [row[col_index] for row in self.rows]

    @property
    def header(self) -> list[str]:
        return [c.name for c in self.columns]


def _check_cell(cell, dtype: ColType, table_id: str, row_idx: int, col: Column):
    if dtype is ColType.REAL:
        try:
            value = float(cell)
        except (TypeError, ValueError):
            raise TableValidationError(
                f"table {table_id}: row {row_idx}, column '{col.name}' expects a real number, got {cell!r}"
            ) from None
        if not math.isfinite(value):
            raise TableValidationError(
                f"table {table_id}: row {row_idx}, column '{col.name}' holds non-finite value {cell!r}"
            )
        return value
    if not isinstance(cell, str):
        raise TableValidationError(
            f"table {table_id}: row {row_idx}, column '{col.name}' expects text, got {cell!r}"
        )
    return cell


def make_table(table_id: str, name: str, header: list[str], types: list[str], rows: list[list]) -> Table:
    """Validate raw parts and build an immutable Table."""
    if len(header) != len(types):
        raise TableValidationError(
            f"table {table_id}: {len(header)} header names but {len(types)} types"
        )
    columns = tuple(Column(n, ColType(t)) for n, t in zip(header, types))
    checked_rows = []
    for i, row in enumerate(rows):
        if len(row) != len(columns):
            raise TableValidationError(
                f"table {table_id}: row {i} has {len(row)} cells, expected {len(columns)}"
            )
        checked_rows.append(
            tuple(_check_cell(cell, col.dtype, table_id, i, col) for cell, col in zip(row, columns))
        )
    return Table(id=table_id, name=name, columns=columns, rows=tuple(checked_rows))


class TableSet:
    """Immutable id -> Table map."""

    def __init__(self, tables):
        if isinstance(tables, dict):
            self._tables = dict(tables)
        else:
            self._tables = {}
            for t in tables:
                if t.id in self._tables:
                    raise TableValidationError(f"duplicate table id {t.id!r}")
                self._tables[t.id] = t

    def __len__(self):
        return len(self._tables)

    def __contains__(self, table_id):
        return table_id in self._tables

    def __iter__(self):
        return iter(self._tables.values())

    def get(self, table_id: str) -> Table:
        if table_id not in self._tables:
            raise KeyError(f"unknown table id {table_id!r}")
        return self._tables[table_id]

    def ids(self) -> list[str]:
        return list(self._tables)


def table_to_json(table: Table) -> dict:
    return {
        "id": table.id,
        "name": table.name,
        "header": [c.name for c in table.columns],
        "types": [c.dtype.value for c in table.columns],
        "rows": [list(row) for row in table.rows],
    }


def table_from_json(obj: dict) -> Table:
    for key in ("id", "name", "header", "types", "rows"):
        if key not in obj:
            raise TableValidationError(f"table object missing key {key!r}")
    return make_table(obj["id"], obj["name"], obj["header"], obj["types"], obj["rows"])


def load_tables(path) -> TableSet:
    """Read a JSONL file of tables, one object per line."""
    tables = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TableParseError(f"invalid JSON ({exc.msg})", line_no=line_no) from None
            table = table_from_json(obj)
            if table.id in tables:
                raise TableValidationError(f"duplicate table id {table.id!r}")
            tables[table.id] = table
    return TableSet(tables)


def save_tables(tables: TableSet, path) -> None:
    """Canonical JSONL serialization; byte-stable for a given TableSet."""
    with open(path, "w", encoding="utf-8") as fh:
        for table_id in sorted(tables.ids()):
            fh.write(json.dumps(table_to_json(tables.get(table_id)), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def column_values(table: Table, col_index: int) -> list:
    return table.column_values(col_index)
