"""Deterministic in-process execution of the restricted SQL skeleton.

A plain row scan: tables are small, so determinism and zero dependencies
beat speed. Text comparison is exact byte equality after NFC normalization;
surface variation is entity linking's job, not the executor's.
"""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass, field

from sketchsql.errors import ContractViolation, QueryTypeError
from sketchsql.sql import Agg, CondOp, Condition, Connector, SqlQuery, canonicalize, validate
from sketchsql.tables import ColType, Table


@dataclass
class ResultSet:
    columns: list[str]
    rows: list[tuple] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return len(self.rows) == 0

    def to_json(self) -> dict:
        return {"columns": self.columns, "rows": [list(r) for r in self.rows]}


def _norm_text(s: str) -> str:
    return unicodedata.normalize("NFC", s)


def condition_matches(cell, cond: Condition, dtype: ColType) -> bool:
    """Evaluate one condition against one cell."""
    if dtype is ColType.REAL:
        try:
            target = float(cond.value)
        except ValueError:
            raise QueryTypeError(
                f"condition value {cond.value!r} is not numeric for a real column"
            ) from None
        cell_value = float(cell)
        if cond.op is CondOp.GT:
            return cell_value > target
        if cond.op is CondOp.LT:
            return cell_value < target
        if cond.op is CondOp.EQ:
            return cell_value == target
        return cell_value != target
    if cond.op in (CondOp.GT, CondOp.LT):
        raise QueryTypeError(f"ordered comparison {cond.op.name} on a text column")
    same = _norm_text(str(cell)) == _norm_text(cond.value)
    return same if cond.op is CondOp.EQ else not same


def _row_matches(row, q: SqlQuery, table: Table) -> bool:
    if not q.conditions:
        return True
    hits = (
        condition_matches(row[c.col_index], c, table.columns[c.col_index].dtype)
        for c in q.conditions
    )
    if q.connector is Connector.OR:
        return any(hits)
    return all(hits)


def _label(agg: Agg, name: str) -> str:
    return name if agg is Agg.NONE else f"{agg.name}({name})"


def _reduce(agg: Agg, values: list[float], n_rows: int) -> float:
    if agg is Agg.COUNT:
        return float(n_rows)
    if agg is Agg.SUM:
        return math.fsum(values)
    if agg is Agg.AVG:
        return math.fsum(values) / len(values)
    if agg is Agg.MAX:
        return max(values)
    return min(values)


def execute(q: SqlQuery, table: Table) -> ResultSet:
    """Run a validated query; see module notes for empty-match semantics.

    The canonical form is executed, so logic-form-equal queries always
    produce equal results (select order is not significant).
    """
    q = canonicalize(q)
    violations = validate(q, table)
    if violations:
        raise ContractViolation("; ".join(violations))

    aggregated = [agg is not Agg.NONE for _, agg in q.select]
    if any(aggregated) and not all(aggregated):
        raise QueryTypeError("cannot mix aggregated and plain select columns")

    matching = [row for row in table.rows if _row_matches(row, q, table)]
    labels = [_label(agg, table.columns[col].name) for col, agg in q.select]

    if not any(aggregated):
        return ResultSet(columns=labels, rows=[tuple(row[col] for col, _ in q.select) for row in matching])

    # Aggregated query: a single output row. With zero matching rows the
    # numeric reductions have no value, so the result is empty unless every
    # item is COUNT, which totals to zero.
    if not matching and any(agg is not Agg.COUNT for _, agg in q.select):
        return ResultSet(columns=labels, rows=[])
    out = []
    for col, agg in q.select:
        values = [float(row[col]) for row in matching] if agg is not Agg.COUNT else []
        out.append(_reduce(agg, values, len(matching)))
    return ResultSet(columns=labels, rows=[tuple(out)])


REAL_ABS_TOL = 1e-9


def _sort_key(row):
    return tuple(
        (0, 0.0, _norm_text(v)) if isinstance(v, str) else (1, float(v), "")
        for v in row
    )


def _cells_equal(a, b) -> bool:
    a_text = isinstance(a, str)
    b_text = isinstance(b, str)
    if a_text != b_text:
        return False
    if a_text:
        return _norm_text(a) == _norm_text(b)
    return math.isclose(float(a), float(b), rel_tol=0.0, abs_tol=REAL_ABS_TOL)


def result_equal(a: ResultSet, b: ResultSet) -> bool:
    """Multiset equality of row tuples; real values within absolute tolerance."""
    if len(a.rows) != len(b.rows):
        return False
    if a.rows and len(a.rows[0]) != len(b.rows[0]):
        return False
    sorted_a = sorted(a.rows, key=_sort_key)
    sorted_b = sorted(b.rows, key=_sort_key)
    return all(
        len(ra) == len(rb) and all(_cells_equal(x, y) for x, y in zip(ra, rb))
        for ra, rb in zip(sorted_a, sorted_b)
    )
