"""Restricted SQL skeleton: multi-select with aggregations, flat AND/OR conditions.

No joins, grouping, ordering or nesting. Equality between queries is
component-exact with set semantics over conditions, which requires the
canonical form defined here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

from sketchsql.tables import ColType, Table


class Agg(IntEnum):
    NONE = 0
    AVG = 1
    MAX = 2
    MIN = 3
    COUNT = 4
    SUM = 5


class CondOp(IntEnum):
    GT = 0
    LT = 1
    EQ = 2
    NEQ = 3


class Connector(IntEnum):
    NONE = 0
    AND = 1
    OR = 2


OP_SYMBOL = {CondOp.GT: ">", CondOp.LT: "<", CondOp.EQ: "==", CondOp.NEQ: "!="}

# Aggregations that reduce real values; COUNT and NONE work on any column.
NUMERIC_AGGS = frozenset({Agg.AVG, Agg.MAX, Agg.MIN, Agg.SUM})


def render_number(value: float) -> str:
    """Canonical numeric text: no trailing zeros, integers without a point."""
    value = float(value)
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def canonical_value(value: str) -> str:
    """Re-render numeric literals canonically; leave non-numeric text alone."""
    try:
        number = float(value)
    except (TypeError, ValueError):
        return value
    if not math.isfinite(number):
        return value
    return render_number(number)


@dataclass(frozen=True)
class Condition:
    col_index: int
    op: CondOp
    value: str

    def __post_init__(self):
        if self.col_index < 0:
            raise ValueError("condition column index must be >= 0")
        if self.value == "":
            raise ValueError("condition value must be nonempty")


@dataclass(frozen=True)
class SqlQuery:
    select: tuple[tuple[int, Agg], ...]
    connector: Connector
    conditions: tuple[Condition, ...]

    def __post_init__(self):
        if not self.select:
            raise ValueError("select list must be nonempty")


class Rejection:
    """Gold label for questions the table cannot answer."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Rejection()"

    def __eq__(self, other):
        return isinstance(other, Rejection)

    def __hash__(self):
        return hash("Rejection")


REJECTED = Rejection()


def query(select, conditions=(), connector=None) -> SqlQuery:
    """Convenience constructor accepting loose tuples."""
    select = tuple((int(c), Agg(a)) for c, a in select)
    conditions = tuple(
        c if isinstance(c, Condition) else Condition(int(c[0]), CondOp(c[1]), str(c[2]))
        for c in conditions
    )
    if connector is None:
        connector = Connector.AND if len(conditions) > 1 else Connector.NONE
    return SqlQuery(select=select, connector=Connector(connector), conditions=conditions)


def canonicalize(q: SqlQuery) -> SqlQuery:
    """Sorted, deduplicated form with normalized values and connector."""
    select = tuple(sorted(set((c, Agg(a)) for c, a in q.select)))
    conds = set(
        Condition(c.col_index, c.op, canonical_value(c.value)) for c in q.conditions
    )
    conditions = tuple(sorted(conds, key=lambda c: (c.col_index, int(c.op), c.value)))
    connector = q.connector if len(conditions) > 1 else Connector.NONE
    return SqlQuery(select=select, connector=connector, conditions=conditions)


def logic_form_equal(a, b) -> bool:
    """Component-exact equality; Rejection equals only Rejection."""
    a_rejected = isinstance(a, Rejection)
    b_rejected = isinstance(b, Rejection)
    if a_rejected or b_rejected:
        return a_rejected and b_rejected
    return canonicalize(a) == canonicalize(b)


def validate(q: SqlQuery, table: Table) -> list[str]:
    """Collect violations of the query against a concrete table (no raising)."""
    violations = []
    for col, agg in q.select:
        if not 0 <= col < table.n_cols:
            violations.append(f"select column index {col} out of range")
        elif agg in NUMERIC_AGGS and table.columns[col].dtype is not ColType.REAL:
            violations.append(f"aggregation {agg.name} on text column {col}")
    for cond in q.conditions:
        if not 0 <= cond.col_index < table.n_cols:
            violations.append(f"condition column index {cond.col_index} out of range")
            continue
        dtype = table.columns[cond.col_index].dtype
        if dtype is ColType.REAL:
            try:
                number = float(cond.value)
            except ValueError:
                number = math.nan
            if not math.isfinite(number):
                violations.append(
                    f"condition value {cond.value!r} is not numeric for real column {cond.col_index}"
                )
        elif cond.op in (CondOp.GT, CondOp.LT):
            violations.append(f"ordered comparison {cond.op.name} on text column {cond.col_index}")
    if len(q.conditions) > 1 and q.connector is Connector.NONE:
        violations.append("multiple conditions require an AND or OR connector")
    return violations


def sql_to_json(label) -> dict | None:
    """Wire format; None encodes Rejection."""
    if isinstance(label, Rejection):
        return None
    return {
        "sel": [c for c, _ in label.select],
        "agg": [int(a) for _, a in label.select],
        "cond_conn_op": int(label.connector),
        "conds": [[c.col_index, int(c.op), c.value] for c in label.conditions],
    }


def sql_from_json(obj):
    if obj is None:
        return REJECTED
    select = tuple(zip((int(c) for c in obj["sel"]), (Agg(a) for a in obj["agg"])))
    conditions = tuple(Condition(int(c), CondOp(o), str(v)) for c, o, v in obj["conds"])
    return SqlQuery(
        select=select,
        connector=Connector(obj.get("cond_conn_op", 0)),
        conditions=conditions,
    )
