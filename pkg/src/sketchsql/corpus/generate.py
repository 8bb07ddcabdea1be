"""Sampling of synthetic tables, queries, questions, and whole corpora."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from sketchsql.corpus import vocab as V
from sketchsql.corpus.config import GenConfig, config_hash
from sketchsql.corpus.examples import (Category, Example, Lexicon, Split,
                                       load_examples, save_examples)
from sketchsql.corpus.perturb import perturb
from sketchsql.errors import ConfigError, ContractViolation, InapplicablePerturbation
from sketchsql.sql import Agg, Condition, Connector, CondOp, REJECTED, SqlQuery, query, render_number
from sketchsql.tables import ColType, Table, TableSet, load_tables, make_table, save_tables

# Category slots constrain query sampling so the drawn category always has an
# eligible condition to rewrite.
_NEEDS = {
    Category.ABBREVIATION: "text",
    Category.ALIAS: "text",
    Category.ADAPTATION: "text",
    Category.OTHER: "text",
    Category.NUMBER_FORMAT: "kilo_eq",
    Category.UNIT_MISMATCH: "myriad_eq",
}


def _largest_remainder(total: int, weights) -> list:
    """Integer allocation of `total` by weight, exact in sum."""
    quotas = [total * w for w in weights]
    counts = [math.floor(q) for q in quotas]
    order = sorted(range(len(weights)), key=lambda i: quotas[i] - counts[i], reverse=True)
    for i in order[: total - sum(counts)]:
        counts[i] += 1
    return counts


def _column_step(table: Table, col: int):
    """Detect the money-style granularity of a REAL column from its cells."""
    values = table.column_values(col)
    if any(not float(v).is_integer() or v < 1 for v in values):
        return 1
    for step in (10000, 1000):
        if all(int(v) % step == 0 for v in values):
            return step
    return 1


def sample_table(rng, config: GenConfig, table_id: str = "t0") -> Table:
    """Draw a synthetic typed table (column count centered on 7.2, rows on 41.5)."""
    vocab = V.default_vocabulary()
    n_cols = int(4 + rng.binomial(8, 0.4))
    n_rows = int(8 + rng.binomial(67, 0.5))

    n_text = int(1 + rng.binomial(n_cols - 2, 0.5))
    n_text = min(n_text, len(vocab.text_attrs), n_cols - 1)
    n_real = min(n_cols - n_text, len(vocab.real_attrs))
    n_text = n_cols - n_real

    text_attrs = [vocab.text_attrs[i] for i in rng.choice(len(vocab.text_attrs), n_text, replace=False)]
    # Real columns: always include one thousands-scaled quantity so numeric
    # reformatting has a target; include a ten-thousands one when unit
    # rewrites are switched on.
    thousand = [i for i, a in enumerate(vocab.real_attrs) if a.step >= 1000]
    myriad = [i for i, a in enumerate(vocab.real_attrs) if a.step >= 10000]
    forced = [int(thousand[rng.integers(len(thousand))])]
    if config.category_weights.get(Category.UNIT_MISMATCH, 0.0) > 0:
        forced.append(int(myriad[rng.integers(len(myriad))]))
    forced = list(dict.fromkeys(forced))[:n_real]
    remaining = [i for i in range(len(vocab.real_attrs)) if i not in forced]
    extra = rng.choice(len(remaining), n_real - len(forced), replace=False)
    real_attrs = [vocab.real_attrs[i] for i in forced + [remaining[int(j)] for j in extra]]

    attrs = list(text_attrs) + list(real_attrs)
    attrs = [attrs[int(i)] for i in rng.permutation(len(attrs))]

    header = [a.name for a in attrs]
    types = ["text" if isinstance(a, V.TextAttr) else "real" for a in attrs]
    columns = []
    for a in attrs:
        if isinstance(a, V.TextAttr):
            picks = rng.integers(len(a.values), size=n_rows)
            columns.append([a.values[int(i)] for i in picks])
        else:
            n_steps = (a.hi - a.lo) // a.step + 1
            picks = rng.integers(n_steps, size=n_rows)
            columns.append([float(a.lo + a.step * int(i)) for i in picks])
    rows = [list(cells) for cells in zip(*columns)]
    name = "tabel" + str(int(rng.integers(10000)))
    return make_table(table_id, name, header, types, rows)


def _condition_for(table: Table, rng, col: int, pivot: int, force_eq: bool = False) -> Condition:
    """A condition on `col` that the pivot row satisfies."""
    cell = table.rows[pivot][col]
    if table.columns[col].dtype is ColType.TEXT:
        distinct = sorted(set(table.column_values(col)) - {cell})
        if not force_eq and distinct and rng.random() < 0.2:
            return Condition(col, CondOp.NEQ, distinct[int(rng.integers(len(distinct)))])
        return Condition(col, CondOp.EQ, cell)

    step = _column_step(table, col)
    r = 0.0 if force_eq else rng.random()
    if r < 0.4:
        return Condition(col, CondOp.EQ, render_number(cell))
    if r < 0.5:
        distinct = sorted(set(table.column_values(col)) - {cell})
        if distinct:
            return Condition(col, CondOp.NEQ, render_number(distinct[int(rng.integers(len(distinct)))]))
        return Condition(col, CondOp.EQ, render_number(cell))
    delta = step * int(rng.integers(1, 6))
    if r < 0.75:
        if cell - delta < 0:
            delta = step
        return Condition(col, CondOp.GT, render_number(max(cell - delta, 0.0)))
    return Condition(col, CondOp.LT, render_number(cell + delta))


def sample_query(table: Table, rng, config: GenConfig, need=None) -> SqlQuery:
    """Draw a valid query guaranteed satisfiable on `table` (via a pivot row).

    `need` forces an eligible condition for a perturbation category: "text"
    (a TEXT-column condition), "kilo_eq"/"myriad_eq" (an EQ condition on a
    thousands-/ten-thousands-scaled REAL column).
    """
    n_cond = int(1 + rng.binomial(2, (config.mean_conditions - 1.0) / 2.0))
    n_sel = int(1 + (rng.random() < (config.mean_selects - 1.0)))
    pivot = int(rng.integers(table.n_rows))

    text_cols = [i for i in range(table.n_cols) if table.columns[i].dtype is ColType.TEXT]
    real_cols = [i for i in range(table.n_cols) if table.columns[i].dtype is ColType.REAL]

    forced_col = None
    force_eq = False
    if need == "text":
        forced_col = text_cols[int(rng.integers(len(text_cols)))]
    elif need in ("kilo_eq", "myriad_eq"):
        step = 1000 if need == "kilo_eq" else 10000
        eligible = [c for c in real_cols if _column_step(table, c) >= step]
        if not eligible:
            raise InapplicablePerturbation(f"table has no column at granularity {step}")
        forced_col = eligible[int(rng.integers(len(eligible)))]
        force_eq = True

    cond_cols = [] if forced_col is None else [forced_col]
    pool = [c for c in range(table.n_cols) if c not in cond_cols]
    extra = rng.choice(len(pool), min(n_cond - len(cond_cols), len(pool)), replace=False)
    cond_cols += [pool[int(i)] for i in extra]

    conditions = [
        _condition_for(table, rng, c, pivot, force_eq=(c == forced_col and force_eq))
        for c in cond_cols
    ]
    if len(conditions) == 1:
        connector = Connector.NONE
    else:
        connector = Connector.AND if rng.random() < 0.7 else Connector.OR

    # Plain and aggregated selects cannot mix within one query, so draw the
    # mode first and then a compatible aggregation per column.
    sel_cols = [int(i) for i in rng.choice(table.n_cols, min(n_sel, table.n_cols), replace=False)]
    aggregated = rng.random() < 0.35
    select = []
    for c in sel_cols:
        if not aggregated:
            agg = Agg.NONE
        elif table.columns[c].dtype is ColType.TEXT:
            agg = Agg.COUNT
        else:
            agg = (Agg.AVG, Agg.MAX, Agg.MIN, Agg.COUNT, Agg.SUM)[int(rng.integers(5))]
        select.append((c, agg))
    return query(select, conditions, connector)


def realize_question(q: SqlQuery, table: Table, rng, omission_rate: float = 0.3) -> str:
    """Render the query as a templated question quoting every value verbatim."""
    tokens = [V.ASK]
    for i, (col, agg) in enumerate(q.select):
        if i:
            tokens.append(V.SELECT_JOIN)
        if agg is not Agg.NONE:
            tokens.append(V.AGG_WORDS[agg.value])
        tokens.append(table.header[col])
    tokens.append(V.WHERE)
    for i, cond in enumerate(q.conditions):
        if i:
            tokens.append(V.CONNECTOR_WORDS[q.connector.value])
        omit = (table.columns[cond.col_index].dtype is ColType.TEXT
                and rng.random() < omission_rate)
        if not omit:
            tokens.append(table.header[cond.col_index])
        tokens.extend(V.OP_WORDS[cond.op.value])
        tokens.append(cond.value)
    return " ".join(tokens)


def make_unanswerable(table: Table, rng, split: Split = Split.TRAIN,
                      table_id: str = None) -> Example:
    """A question about an attribute the table does not have; gold = rejection."""
    vocab = V.default_vocabulary()
    absent = [n for n in vocab.attr_names if n not in table.header]
    if not absent:
        raise ContractViolation("table uses every attribute; cannot build an absent-column question")
    attr = absent[int(rng.integers(len(absent)))]
    pivot = int(rng.integers(table.n_rows))
    col = int(rng.integers(table.n_cols))
    cond = _condition_for(table, rng, col, pivot)
    tokens = [V.ASK, attr, V.WHERE, table.header[col], *V.OP_WORDS[cond.op.value], cond.value]
    return Example(
        table_id=table_id or table.id,
        question=" ".join(tokens),
        gold=REJECTED,
        category=Category.NONE,
        split=split,
    )


@dataclass
class Corpus:
    tables: TableSet
    examples: list
    lexicon: Lexicon
    stats: dict
    config: GenConfig

    def split_examples(self, split: Split) -> list:
        return [e for e in self.examples if e.split is split]


def _split_tables(n_tables: int, fractions, rng) -> list:
    counts = _largest_remainder(n_tables, fractions)
    for i, frac in enumerate(fractions):
        while frac > 0 and counts[i] == 0:
            counts[counts.index(max(counts))] -= 1
            counts[i] += 1
    order = rng.permutation(n_tables)
    assignment = [None] * n_tables
    splits = list(Split)
    k = 0
    for s, count in zip(splits, counts):
        for idx in order[k : k + count]:
            assignment[int(idx)] = s
        k += count
    return assignment


def build_corpus(config: GenConfig) -> Corpus:
    """Generate tables + examples with exact stratified rates, deterministically."""
    config.validate()
    if config.unanswerable_rate + config.entity_link_rate > 1.0:
        raise ConfigError("unanswerable_rate + entity_link_rate exceed 1")
    rng = np.random.default_rng(np.random.PCG64(config.seed))
    vocab = V.default_vocabulary()

    tables = []
    for k in range(config.n_tables):
        tables.append(sample_table(rng, config, table_id=f"tbl{k:04d}"))
    split_of = _split_tables(config.n_tables, config.split_fractions, rng)

    n = config.n_examples
    n_unans = round(n * config.unanswerable_rate)
    n_linked = round(n * config.entity_link_rate)
    cats = [c for c in Category if c is not Category.NONE]
    cat_counts = _largest_remainder(n_linked, [config.category_weights.get(c, 0.0) for c in cats])
    slots = (["unanswerable"] * n_unans
             + [c for c, k in zip(cats, cat_counts) for _ in range(k)]
             + ["plain"] * (n - n_unans - n_linked))
    slots = [slots[int(i)] for i in rng.permutation(len(slots))]

    lexicon = Lexicon()
    examples = []
    for k, table in enumerate(tables):
        split = split_of[k]
        for j in range(config.n_questions_per_table):
            slot = slots[k * config.n_questions_per_table + j]
            if slot == "unanswerable":
                examples.append(make_unanswerable(table, rng, split=split))
                continue
            if slot == "plain":
                q = sample_query(table, rng, config)
                text = realize_question(q, table, rng, config.schema_omission_rate)
                examples.append(Example(table.id, text, q, Category.NONE, split))
                continue
            for _ in range(64):
                try:
                    q = sample_query(table, rng, config, need=_NEEDS[slot])
                    text = realize_question(q, table, rng, config.schema_omission_rate)
                    base = Example(table.id, text, q, Category.NONE, split)
                    examples.append(perturb(base, slot, rng, table=table,
                                            vocabulary=vocab, lexicon=lexicon))
                    break
                except InapplicablePerturbation:
                    continue
            else:
                raise ContractViolation(f"could not realize a {slot.value} example on {table.id}")

    table_set = TableSet(tables)
    stats = _corpus_stats(table_set, examples, config)
    return Corpus(tables=table_set, examples=examples, lexicon=lexicon, stats=stats, config=config)


def _corpus_stats(tables: TableSet, examples, config: GenConfig) -> dict:
    n = len(examples)
    answerable = [e for e in examples if e.answerable]
    linked = [e for e in examples if e.category is not Category.NONE]
    by_cat = {c.value: sum(1 for e in linked if e.category is c)
              for c in Category if c is not Category.NONE}
    split_stats = {}
    for s in Split:
        exs = [e for e in examples if e.split is s]
        split_stats[s.value] = {
            "examples": len(exs),
            "tables": len({e.table_id for e in exs}),
        }
    return {
        "n_examples": n,
        "n_tables": len(tables),
        "unanswerable_rate": {
            "target": config.unanswerable_rate,
            "measured": (n - len(answerable)) / n,
        },
        "entity_link_rate": {
            "target": config.entity_link_rate,
            "measured": len(linked) / n,
        },
        "category_share_of_linked": {
            c: (count / len(linked) if linked else 0.0) for c, count in by_cat.items()
        },
        "category_counts": by_cat,
        "mean_conditions": sum(len(e.gold.conditions) for e in answerable) / max(len(answerable), 1),
        "mean_selects": sum(len(e.gold.select) for e in answerable) / max(len(answerable), 1),
        "mean_columns": sum(t.n_cols for t in tables) / len(tables),
        "mean_rows": sum(t.n_rows for t in tables) / len(tables),
        "splits": split_stats,
        "seed": config.seed,
        "config_hash": config_hash(config.to_json()),
    }


def save_corpus(corpus: Corpus, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    save_tables(corpus.tables, os.path.join(out_dir, "tables.jsonl"))
    save_examples(corpus.examples, os.path.join(out_dir, "examples.jsonl"))
    corpus.lexicon.save(os.path.join(out_dir, "lexicon.json"))
    for name, obj in (("stats.json", corpus.stats), ("config.json", corpus.config.to_json())):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            json.dump(obj, fh, sort_keys=True, ensure_ascii=False, indent=2)
            fh.write("\n")


def load_corpus(corpus_dir: str) -> Corpus:
    tables = load_tables(os.path.join(corpus_dir, "tables.jsonl"))
    examples = load_examples(os.path.join(corpus_dir, "examples.jsonl"))
    lexicon = Lexicon.load(os.path.join(corpus_dir, "lexicon.json"))
    with open(os.path.join(corpus_dir, "stats.json"), encoding="utf-8") as fh:
        stats = json.load(fh)
    with open(os.path.join(corpus_dir, "config.json"), encoding="utf-8") as fh:
        config = GenConfig.from_json(json.load(fh))
    return Corpus(tables=tables, examples=examples, lexicon=lexicon, stats=stats, config=config)
