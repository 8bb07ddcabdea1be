"""Corpus-level scoring and execution-guided reranking.

Accuracy is reported per sketch subtask (on answerable questions), as
whole-query logic-form and execution match, and as rejection
precision/recall. A small helper scores condition values alone, teacher
forced, so the three resolution strategies can be compared on identical
sketches.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from sketchsql.errors import ContractViolation, SketchSqlError
from sketchsql.executor import execute, result_equal
from sketchsql.model.config import Resolver
from sketchsql.model.decoding import decode, decode_candidates, resolve_value
from sketchsql.model.network import encode, predict_value_span
from sketchsql.sql import Rejection, logic_form_equal
from sketchsql.tables import ColType

SUBTASKS = ("s_num", "s_col", "s_agg", "w_num", "w_col", "w_op", "w_rel")


@dataclass
class MetricsReport:
    n_examples: int
    n_answerable: int
    subtasks: dict  # name -> accuracy over answerable examples
    lf_accuracy: float
    exec_accuracy: float
    rejection_precision: float
    rejection_recall: float
    rejection_f1: float

    def markdown(self) -> str:
        lines = [
            "| metric | value |",
            "| --- | --- |",
            f"| examples | {self.n_examples} |",
            f"| answerable | {self.n_answerable} |",
        ]
        for name in SUBTASKS:
            lines.append(f"| {name} | {self.subtasks[name]:.4f} |")
        lines += [
            f"| logic form | {self.lf_accuracy:.4f} |",
            f"| execution | {self.exec_accuracy:.4f} |",
            f"| rejection P/R/F1 | {self.rejection_precision:.4f} / "
            f"{self.rejection_recall:.4f} / {self.rejection_f1:.4f} |",
        ]
        return "\n".join(lines)


def _safe_div(num, den):
    return num / den if den else 0.0


def _subtask_hits(pred, gold) -> dict:
    """Which sketch parts of a predicted query match the gold one."""
    p_sel, g_sel = pred.select, gold.select
    p_conds, g_conds = pred.conditions, gold.conditions
    return {
        "s_num": len(p_sel) == len(g_sel),
        "s_col": {c for c, _ in p_sel} == {c for c, _ in g_sel},
        "s_agg": set(p_sel) == set(g_sel),
        "w_num": len(p_conds) == len(g_conds),
        "w_col": Counter(c.col_index for c in p_conds)
        == Counter(c.col_index for c in g_conds),
        "w_op": Counter((c.col_index, c.op) for c in p_conds)
        == Counter((c.col_index, c.op) for c in g_conds),
        "w_rel": pred.connector == gold.connector,
    }


def _execution_hit(pred_sql, gold_sql, table) -> bool:
    try:
        result = execute(pred_sql, table)
    except SketchSqlError:
        return False
    return result_equal(result, execute(gold_sql, table))


def score(predictions, examples, tables) -> MetricsReport:
    """Score decoded predictions against gold labels, pairwise in order.

    Subtask accuracies cover answerable examples only; a rejection there
    counts as a miss on every subtask. Execution accuracy treats a query
    the executor refuses as wrong rather than an error.
    """
    if len(predictions) != len(examples):
        raise ContractViolation(
            f"{len(predictions)} predictions for {len(examples)} examples"
        )
    counts = Counter()
    subtask_hits = Counter()
    n_answerable = 0
    for pred, ex in zip(predictions, examples):
        gold = ex.gold
        if isinstance(gold, Rejection):
            counts["tp" if pred.rejected else "fn"] += 1
            counts["lf"] += pred.rejected
            counts["exec"] += pred.rejected
            continue
        n_answerable += 1
        table = tables.get(ex.table_id)
        if pred.rejected:
            counts["fp"] += 1
            continue
        for name, hit in _subtask_hits(pred.sql, gold).items():
            subtask_hits[name] += hit
        counts["lf"] += logic_form_equal(pred.sql, gold)
        counts["exec"] += _execution_hit(pred.sql, gold, table)

    precision = _safe_div(counts["tp"], counts["tp"] + counts["fp"])
    recall = _safe_div(counts["tp"], counts["tp"] + counts["fn"])
    return MetricsReport(
        n_examples=len(examples),
        n_answerable=n_answerable,
        subtasks={k: _safe_div(subtask_hits[k], n_answerable) for k in SUBTASKS},
        lf_accuracy=_safe_div(counts["lf"], len(examples)),
        exec_accuracy=_safe_div(counts["exec"], len(examples)),
        rejection_precision=precision,
        rejection_recall=recall,
        rejection_f1=_safe_div(2 * precision * recall, precision + recall),
    )


def _value_match(predicted: str, gold: str, dtype: ColType) -> bool:
    if dtype is ColType.REAL:
        try:
            return float(predicted) == float(gold)
        except ValueError:
            return False
    return predicted == gold


def value_accuracy(model, examples, tables, resolver: Resolver) -> float:
    """Condition-value accuracy with the sketch held at gold (teacher forced).

    Isolates the value resolution strategy: every condition of every
    answerable example is resolved from the predicted span using the gold
    column and operator, and compared to the gold value.
    """
    hits = total = 0
    for ex in examples:
        if isinstance(ex.gold, Rejection):
            continue
        table = tables.get(ex.table_id)
        enc = encode(ex.question, table, model)
        for cond in ex.gold.conditions:
            span = predict_value_span(enc, cond.col_index, cond.op, model)
            text = " ".join(enc.tokens[span.start : span.end + 1])
            value = resolve_value(
                text, cond.col_index, cond.op, table, model, span.summary, resolver
            )
            dtype = table.columns[cond.col_index].dtype
            hits += _value_match(value, cond.value, dtype)
            total += 1
    return _safe_div(hits, total)


def egd_decode(question: str, table, model, resolver: Resolver = Resolver.SPAN_ONLY,
               budget: int = 8, enumerator=decode_candidates):
    """Execution-guided decoding: first candidate that runs to a non-empty
    result, falling back to the top-ranked candidate when none does.

    Never rejects: the guidance signal is the executor, which has no
    notion of an unanswerable question.
    """
    candidates = enumerator(question, table, model, resolver=resolver, budget=budget)
    for cand in candidates:
        try:
            result = execute(cand.sql, table)
        except SketchSqlError:
            continue
        if result.rows:
            return cand
    return candidates[0]


def compare_resolvers(model, examples, tables) -> dict:
    """One row per resolution strategy on a shared checkpoint and sketch.

    Returns {resolver value: {"w_value", "lf", "exec"}} so the strategies
    differ only in how condition values are produced.
    """
    out = {}
    for resolver in Resolver:
        predictions = [
            decode(ex.question, tables.get(ex.table_id), model, resolver=resolver)
            for ex in examples
        ]
        report = score(predictions, examples, tables)
        out[resolver.value] = {
            "w_value": value_accuracy(model, examples, tables, resolver),
            "lf": report.lf_accuracy,
            "exec": report.exec_accuracy,
        }
    return out
