"""Assemble predictions from head outputs, with three value resolvers.

Heads are decoded sequentially (each downstream head consumes upstream
argmaxes), so early mistakes propagate — the known cost of sketch decoding.
`decode_candidates` additionally enumerates near-miss predictions by
swapping one head choice at a time, ranked by joint probability, which the
execution-guided eval loop consumes.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from sketchsql.linking import cell_attention, column_cell_texts, encode_cell, offline_resolve
from sketchsql.model.config import Resolver
from sketchsql.model.network import Encoding, encode, predict_heads, predict_value_span
from sketchsql.model.params import Model
from sketchsql.sql import REJECTED, Agg, CondOp, Condition, Connector, SqlQuery, canonicalize
from sketchsql.tables import ColType, Table


@dataclass
class Prediction:
    rejected: bool
    sql: Optional[SqlQuery]
    probabilities: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if self.rejected and self.sql is not None:
            raise ValueError("a rejected prediction cannot carry SQL")
        if not self.rejected and self.sql is None:
            raise ValueError("an accepted prediction must carry SQL")

    @property
    def label(self):
        """Gold-comparable output: Rejection or the SqlQuery."""
        return REJECTED if self.rejected else self.sql

    @property
    def select_number(self) -> int:
        return 0 if self.rejected else len(self.sql.select)

    @property
    def where_number(self) -> int:
        return 0 if self.rejected else len(self.sql.conditions)

    @property
    def connector(self):
        return Connector.NONE if self.rejected else self.sql.connector


def _top_k(scores: np.ndarray, k: int) -> list:
    order = np.argsort(-scores, kind="stable")
    return [int(i) for i in order[:k]]


def attend_column(summary, table: Table, col: int, model: Model):
    """Cell-attention over one column; returns (cell texts, attention)."""
    params = model.params
    texts = column_cell_texts(table, col)
    states = [
        encode_cell(t, params["char_emb"], params.lstm("cell_fwd"),
                    params.lstm("cell_bwd"), model.vocab)
        for t in texts
    ]
    return texts, cell_attention(summary, states, params["w_row"])


def uses_cell_attention(table: Table, col: int, op: CondOp) -> bool:
    """End-to-end resolution scores cells except for ordered numeric bounds,
    whose values are thresholds rather than cell contents."""
    if table.columns[col].dtype is ColType.TEXT:
        return True
    return op in (CondOp.EQ, CondOp.NEQ)


def resolve_value(span_text: str, col: int, op: CondOp, table: Table,
                   model: Model, summary, resolver: Resolver) -> str:
    if resolver is Resolver.SPAN_ONLY:
        return span_text
    if resolver is Resolver.OFFLINE:
        return offline_resolve(span_text, col, table)
    if not uses_cell_attention(table, col, op):
        return span_text
    texts, att = attend_column(summary, table, col, model)
    return texts[att.index]


def _condition_at(enc: Encoding, col: int, op: CondOp, table: Table, model: Model,
                  resolver: Resolver, span_rank: int = 0) -> Condition:
    span = predict_value_span(enc, col, op, model)
    start, end = span.start, span.end
    if span_rank:
        pairs = top_spans(span.start_probs, span.end_probs, span_rank + 1)
        start, end = pairs[min(span_rank, len(pairs) - 1)]
    text = " ".join(enc.tokens[start : end + 1])
    value = resolve_value(text, col, op, table, model, span.summary, resolver)
    return Condition(col, op, value)


def top_spans(start_probs: np.ndarray, end_probs: np.ndarray, k: int) -> list:
    """The k best (start, end) pairs with start <= end, by joint probability."""
    joint = np.triu(np.outer(start_probs, end_probs))
    n = len(start_probs)
    order = np.argsort(-joint, axis=None, kind="stable")
    out = []
    for flat in order[: k + n]:  # over-fetch; strict lower triangle scores 0
        i, j = int(flat) // n, int(flat) % n
        if i <= j:
            out.append((i, j))
        if len(out) == k:
            break
    return out


@dataclass
class _Sketch:
    """One concrete choice per head, before value resolution."""

    s_num: int
    sel_cols: list
    aggs: dict  # col -> Agg
    w_num: int
    cond_cols: list
    ops: dict  # col -> CondOp
    span_ranks: dict  # col -> 0 (best pair) or 1 (second best)
    connector_or: bool


def _base_sketch(probs: dict, n_cols: int) -> _Sketch:
    s_num = min(int(np.argmax(probs["s_num"])) + 1, n_cols)
    w_num = min(int(np.argmax(probs["w_num"])), n_cols)
    sel = _top_k(probs["s_col"], s_num)
    cond = _top_k(probs["w_col"], w_num)
    return _Sketch(
        s_num=s_num,
        sel_cols=sel,
        aggs={c: Agg(int(np.argmax(probs["s_agg"][c]))) for c in sel},
        w_num=w_num,
        cond_cols=cond,
        ops={c: CondOp(int(np.argmax(probs["w_op"][c]))) for c in cond},
        span_ranks={c: 0 for c in cond},
        connector_or=probs["w_rel"][int(Connector.OR)] > probs["w_rel"][int(Connector.AND)],
    )


def _assemble(sketch: _Sketch, enc: Encoding, table: Table, model: Model,
              resolver: Resolver) -> SqlQuery:
    select = tuple((c, sketch.aggs[c]) for c in sketch.sel_cols)
    conditions = tuple(
        _condition_at(enc, c, sketch.ops[c], table, model, resolver,
                      sketch.span_ranks.get(c, 0))
        for c in sketch.cond_cols
    )
    if len(conditions) > 1:
        connector = Connector.OR if sketch.connector_or else Connector.AND
    else:
        connector = Connector.NONE
    return SqlQuery(select=select, connector=connector, conditions=conditions)


def decode(question: str, table: Table, model: Model,
           resolver: Resolver = Resolver.SPAN_ONLY) -> Prediction:
    """Full pipeline for one question; pure function of its inputs."""
    enc = encode(question, table, model)
    heads = predict_heads(enc, model)
    probs = heads.distributions()
    if probs["rejection"][1] > 0.5:
        return Prediction(rejected=True, sql=None, probabilities=probs)
    sketch = _base_sketch(probs, table.n_cols)
    sql = _assemble(sketch, enc, table, model, resolver)
    return Prediction(rejected=False, sql=sql, probabilities=probs)


def _sketch_swaps(base: _Sketch, probs: dict, n_cols: int):
    """Single-head variants of `base`, each with its probability ratio."""

    def clone():
        return copy.deepcopy(base)

    # Select count: re-cut the column ranking at each alternative size.
    p = probs["s_num"]
    for k in range(1, min(len(p), n_cols) + 1):
        if k == base.s_num:
            continue
        alt = clone()
        alt.s_num = k
        alt.sel_cols = _top_k(probs["s_col"], k)
        alt.aggs = {c: Agg(int(np.argmax(probs["s_agg"][c]))) for c in alt.sel_cols}
        yield p[k - 1] / max(p[base.s_num - 1], 1e-12), alt

    # Swap one select column for the best unused one.
    unused = [c for c in _top_k(probs["s_col"], n_cols) if c not in base.sel_cols]
    if unused:
        for i, c in enumerate(base.sel_cols):
            alt = clone()
            new = unused[0]
            alt.sel_cols = base.sel_cols[:i] + [new] + base.sel_cols[i + 1 :]
            alt.aggs = {k2: v for k2, v in base.aggs.items() if k2 != c}
            alt.aggs[new] = Agg(int(np.argmax(probs["s_agg"][new])))
            yield probs["s_col"][new] / max(probs["s_col"][c], 1e-12), alt

    # Second-best aggregation for each selected column.
    for c in base.sel_cols:
        row = probs["s_agg"][c]
        second = int(np.argsort(-row, kind="stable")[1])
        alt = clone()
        alt.aggs[c] = Agg(second)
        yield row[second] / max(row[int(base.aggs[c])], 1e-12), alt

    # Condition count alternatives.
    p = probs["w_num"]
    for k in range(0, min(len(p) - 1, n_cols) + 1):
        if k == base.w_num:
            continue
        alt = clone()
        alt.w_num = k
        alt.cond_cols = _top_k(probs["w_col"], k)
        alt.ops = {c: CondOp(int(np.argmax(probs["w_op"][c]))) for c in alt.cond_cols}
        alt.span_ranks = {c: 0 for c in alt.cond_cols}
        yield p[k] / max(p[base.w_num], 1e-12), alt

    # Swap one condition column.
    unused = [c for c in _top_k(probs["w_col"], n_cols) if c not in base.cond_cols]
    if unused:
        for i, c in enumerate(base.cond_cols):
            alt = clone()
            new = unused[0]
            alt.cond_cols = base.cond_cols[:i] + [new] + base.cond_cols[i + 1 :]
            alt.ops = {k2: v for k2, v in base.ops.items() if k2 != c}
            alt.ops[new] = CondOp(int(np.argmax(probs["w_op"][new])))
            alt.span_ranks = {k2: v for k2, v in base.span_ranks.items() if k2 != c}
            alt.span_ranks[new] = 0
            yield probs["w_col"][new] / max(probs["w_col"][c], 1e-12), alt

    # Second-best operator and second-best span per condition.
    for c in base.cond_cols:
        row = probs["w_op"][c]
        second = int(np.argsort(-row, kind="stable")[1])
        alt = clone()
        alt.ops[c] = CondOp(second)
        yield row[second] / max(row[int(base.ops[c])], 1e-12), alt

        alt = clone()
        alt.span_ranks[c] = 1
        yield 0.5, alt  # span pairs are re-ranked at assembly time

    # Flip the connector when it matters.
    if base.w_num > 1:
        alt = clone()
        alt.connector_or = not base.connector_or
        a, o = probs["w_rel"][int(Connector.AND)], probs["w_rel"][int(Connector.OR)]
        hi, lo = max(a, o), min(a, o)
        yield lo / max(hi, 1e-12), alt


def decode_candidates(question: str, table: Table, model: Model,
                      resolver: Resolver = Resolver.SPAN_ONLY,
                      budget: int = 8) -> list:
    """Ranked candidate predictions for execution-guided decoding.

    The first candidate is the plain decode (forced to emit SQL even when
    the rejection head fires — this enumerator never rejects). Later ones
    change exactly one head choice, ordered by how little probability the
    change gives up. Duplicate logic forms are dropped.
    """
    enc = encode(question, table, model)
    heads = predict_heads(enc, model)
    probs = heads.distributions()
    base = _base_sketch(probs, table.n_cols)
    ranked = [(1.0, base)] + sorted(
        _sketch_swaps(base, probs, table.n_cols), key=lambda t: -t[0]
    )

    out = []
    seen = set()
    for _, sketch in ranked:
        if len(out) >= budget:
            break
        sql = _assemble(sketch, enc, table, model, resolver)
        key = canonicalize(sql)
        if key in seen:
            continue
        seen.add(key)
        out.append(Prediction(rejected=False, sql=sql, probabilities=probs))
    return out
