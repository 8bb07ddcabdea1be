"""Teacher-forced training over the sketch heads.

Every head is trained against gold labels with gold upstream choices fed
in (the span head sees the gold condition column and operator), so the
losses decouple and a single pass covers all subtasks. The cell-attention
value head joins the loss only when the config asks for end-to-end value
resolution; the span head always trains.
"""

from __future__ import annotations

import time

import numpy as np

from sketchsql.autograd import Adam, clip_gradients, ops
from sketchsql.corpus.examples import Example, Lexicon, Split
from sketchsql.errors import ConfigError, ContractViolation
from sketchsql.linking import column_cell_texts
from sketchsql.model.config import Resolver, TrainConfig
from sketchsql.model.decoding import attend_column, uses_cell_attention
from sketchsql.model.network import encode, predict_heads, predict_value_span
from sketchsql.model.params import Model, new_model
from sketchsql.sql import Condition, SqlQuery, canonical_value
from sketchsql.tables import ColType, Table

GRAD_CLIP = 5.0


def locate_gold_span(example: Example, cond: Condition, lexicon: Lexicon) -> tuple:
    """Token range of the condition value's surface form in the question.

    The surface is the value itself when unperturbed, otherwise one of the
    lexicon's recorded mentions for that value.
    """
    tokens = example.tokens
    candidates = [cond.value] + lexicon.surfaces_for(example.table_id, cond.value)
    for cand in candidates:
        want = cand.split(" ")
        for i in range(len(tokens) - len(want) + 1):
            if tokens[i : i + len(want)] == want:
                return i, i + len(want) - 1
    raise ContractViolation(
        f"no surface of {cond.value!r} found in question {example.question!r}"
    )


def gold_cell_row(table: Table, cond: Condition):
    """Row index whose cell carries the condition value, or None.

    Ordered numeric bounds are thresholds, not cell contents, so they have
    no gold row; equality/inequality values come from cells by construction.
    """
    if not uses_cell_attention(table, cond.col_index, cond.op):
        return None
    texts = column_cell_texts(table, cond.col_index)
    target = cond.value
    if table.columns[cond.col_index].dtype is ColType.REAL:
        target = canonical_value(target)
    try:
        return texts.index(target)
    except ValueError:
        return None


def example_loss(model: Model, example: Example, table: Table, lexicon: Lexicon,
                 train_cell_head: bool):
    """Summed cross-entropy over every head that has a gold label."""
    enc = encode(example.question, table, model)
    heads = predict_heads(enc, model)
    if not example.answerable:
        return ops.bce_with_logits(heads.rej_logit, 1.0)

    gold: SqlQuery = example.gold
    n_cols = table.n_cols
    losses = [ops.bce_with_logits(heads.rej_logit, 0.0)]

    losses.append(ops.cross_entropy(heads.s_num_logits, len(gold.select) - 1))
    s_target = np.zeros(n_cols)
    for col, _ in gold.select:
        s_target[col] = 1.0
    losses.append(ops.bce_with_logits(heads.s_col_logits, s_target))
    for col, agg in gold.select:
        losses.append(ops.cross_entropy(ops.take_row(heads.agg_logits, col), int(agg)))

    losses.append(ops.cross_entropy(heads.w_num_logits, len(gold.conditions)))
    w_target = np.zeros(n_cols)
    for cond in gold.conditions:
        w_target[cond.col_index] = 1.0
    losses.append(ops.bce_with_logits(heads.w_col_logits, w_target))
    losses.append(ops.cross_entropy(heads.rel_logits, int(gold.connector)))

    for cond in gold.conditions:
        losses.append(
            ops.cross_entropy(ops.take_row(heads.op_logits, cond.col_index), int(cond.op))
        )
        span = predict_value_span(enc, cond.col_index, cond.op, model)
        start, end = locate_gold_span(example, cond, lexicon)
        losses.append(ops.cross_entropy(span.start_logits, start))
        losses.append(ops.cross_entropy(span.end_logits, end))
        if train_cell_head:
            row = gold_cell_row(table, cond)
            if row is not None:
                _, att = attend_column(span.summary, table, cond.col_index, model)
                losses.append(ops.cross_entropy(att.scores, row))
    return ops.add_n(losses)


def subtask_accuracy(model: Model, examples, tables) -> dict:
    """Teacher-forced head accuracies; sketch heads skip unanswerable rows."""
    counts = {k: [0, 0] for k in
              ("s_num", "s_col", "s_agg", "w_num", "w_col", "w_op", "w_rel", "rejection")}

    def hit(key, ok):
        counts[key][0] += bool(ok)
        counts[key][1] += 1

    for ex in examples:
        table = tables.get(ex.table_id)
        enc = encode(ex.question, table, model)
        probs = predict_heads(enc, model).distributions()
        hit("rejection", (probs["rejection"][1] > 0.5) == (not ex.answerable))
        if not ex.answerable:
            continue
        gold: SqlQuery = ex.gold
        hit("s_num", int(np.argmax(probs["s_num"])) + 1 == len(gold.select))
        gold_sel = {c for c, _ in gold.select}
        order = np.argsort(-probs["s_col"], kind="stable")
        hit("s_col", set(int(i) for i in order[: len(gold_sel)]) == gold_sel)
        hit("s_agg", all(int(np.argmax(probs["s_agg"][c])) == int(a) for c, a in gold.select))
        hit("w_num", int(np.argmax(probs["w_num"])) == len(gold.conditions))
        gold_cond = {c.col_index for c in gold.conditions}
        order = np.argsort(-probs["w_col"], kind="stable")
        hit("w_col", set(int(i) for i in order[: len(gold_cond)]) == gold_cond)
        hit("w_op", all(int(np.argmax(probs["w_op"][c.col_index])) == int(c.op)
                        for c in gold.conditions))
        hit("w_rel", int(np.argmax(probs["w_rel"])) == int(gold.connector))
    return {k: (n_ok / n if n else 0.0) for k, (n_ok, n) in counts.items()}


def train(corpus, config: TrainConfig):
    """Fit a fresh model on the corpus's train split.

    Returns (model, history); history holds one dict per epoch with the
    mean train loss and teacher-forced validation accuracies. Fixed seed
    gives byte-identical parameters.
    """
    config.validate()
    train_split = corpus.split_examples(Split.TRAIN)
    valid_split = corpus.split_examples(Split.VALID)
    if not train_split:
        raise ConfigError("train split is empty")
    if not valid_split:
        raise ConfigError("valid split is empty")

    model = new_model(config)
    params = model.params.parameters()
    optimizer = Adam(params, lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    train_cell_head = config.resolver is Resolver.END2END

    history = []
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng.permutation(len(train_split))
        total = 0.0
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            losses = []
            for idx in batch:
                ex = train_split[int(idx)]
                losses.append(
                    example_loss(model, ex, corpus.tables.get(ex.table_id),
                                 corpus.lexicon, train_cell_head)
                )
            loss = ops.scale(ops.add_n(losses), 1.0 / len(losses))
            loss.backward()
            clip_gradients(params, GRAD_CLIP)
            optimizer.step()
            optimizer.zero_grad()
            total += float(loss.data) * len(losses)
        record = {
            "epoch": epoch,
            "train_loss": total / len(train_split),
            "seconds": round(time.perf_counter() - started, 3),
        }
        for key, value in subtask_accuracy(model, valid_split, corpus.tables).items():
            record[f"valid_{key}"] = round(value, 4)
        history.append(record)
    return model, history
