"""Question/schema encoder and the sketch prediction heads.

The decoder fills a fixed SQL sketch with nine subtask outputs: number of
select columns, the columns themselves, their aggregations, number of
conditions, condition columns, operators, value spans, the connector
between conditions, and whether to reject the question outright.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from sketchsql.autograd import Tensor, ops
from sketchsql.errors import ContractViolation
from sketchsql.linking import cell_text
from sketchsql.model.layers import bi_lstm_final, bi_lstm_sequence
from sketchsql.model.params import MAX_COND, MAX_SELECT, Model
from sketchsql.tables import ColType, Table


@dataclass
class Encoding:
    h_q: Tensor  # (L, d) per-token question vectors
    h_att_q: Tensor  # (d,) attention-pooled question summary
    h_col: Tensor  # (C, d) per-column vectors
    token_vecs: Tensor  # (L, d) pre-recurrence token embeddings
    name_vecs: Tensor  # (C, d) column-name embeddings in the same space
    cell_sims: Tensor  # (C,) max token-to-cell cosine per column, constant
    cell_pos: np.ndarray  # (C,) token index of each column's best cell match
    tokens: list
    d: int


@dataclass
class _CellIndex:
    """Flat character-id view of a table's cells for vectorized embedding."""

    ids: np.ndarray  # (total_chars,) cell characters, concatenated
    starts: np.ndarray  # (n_cells,) offset of each cell within ids
    lengths: np.ndarray  # (n_cells,)
    col_of: np.ndarray  # (n_cells,) owning column


_cell_indexes = weakref.WeakKeyDictionary()


def _cell_index(table: Table, vocab) -> _CellIndex:
    cached = _cell_indexes.setdefault(table, {}).get(vocab.alphabet)
    if cached is not None:
        return cached
    ids, starts, lengths, col_of = [], [], [], []
    for c in range(len(table.columns)):
        for r in range(table.n_rows):
            encoded = vocab.encode(cell_text(table, c, r))
            if not encoded:
                continue
            starts.append(len(ids))
            lengths.append(len(encoded))
            col_of.append(c)
            ids.extend(encoded)
    index = _CellIndex(
        ids=np.asarray(ids, dtype=np.intp),
        starts=np.asarray(starts, dtype=np.intp),
        lengths=np.asarray(lengths, dtype=np.float64),
        col_of=np.asarray(col_of, dtype=np.intp),
    )
    _cell_indexes[table][vocab.alphabet] = index
    return index


def _cell_similarity(token_vecs: np.ndarray, table: Table, model: Model):
    """Per-column best token-to-cell cosine (C,) and the matching token index.

    Floored at zero: a negative best match carries no linking evidence.
    Plain numpy on the current embedding table, deliberately off the tape:
    the value resolvers already rely on this mean-character geometry, and
    here it serves as a fixed linking feature whose weight is learned.
    """
    n_tokens, n_cols = token_vecs.shape[0], len(table.columns)
    index = _cell_index(table, model.vocab)
    if index.starts.size == 0:
        return Tensor(np.zeros(n_cols)), np.zeros(n_cols, dtype=np.intp)
    emb = model.params["char_emb"].data
    sums = np.add.reduceat(emb[index.ids], index.starts, axis=0)
    cells = sums / index.lengths[:, None]
    cells /= np.linalg.norm(cells, axis=1, keepdims=True) + 1e-12
    tokens = token_vecs / (np.linalg.norm(token_vecs, axis=1, keepdims=True) + 1e-12)
    sim = tokens @ cells.T  # (L, n_cells)
    by_col = np.zeros((n_tokens, n_cols))
    np.maximum.at(by_col, (np.arange(n_tokens)[:, None], index.col_of[None, :]), sim)
    return Tensor(by_col.max(axis=0)), by_col.argmax(axis=0)


def _char_embeddings(text: str, model: Model) -> Tensor:
    ids = model.vocab.encode(text)
    return ops.embed(model.params["char_emb"], ids)


def _token_vectors(tokens, model: Model) -> Tensor:
    rows = [ops.mean(_char_embeddings(tok, model), axis=0) for tok in tokens]
    return ops.stack_rows(rows)


def encode(question: str, table: Table, model: Model) -> Encoding:
    """Character-embedded, bidirectionally recurrent token and column vectors.

    Raw mean-character vectors for question tokens and column names are kept
    alongside the recurrent states: they share the embedding table, so a
    name mentioned verbatim in the question is a dot product away.
    """
    tokens = question.split()
    if not tokens:
        raise ContractViolation("encode: empty question")
    params = model.params

    x = _token_vectors(tokens, model)
    h_q = bi_lstm_sequence(x, params.lstm("q_fwd"), params.lstm("q_bwd"))

    att_scores = ops.matmul(h_q, params["w_att"])
    h_att_q = ops.matmul(ops.softmax(att_scores), h_q)

    col_fwd = params.lstm("col_fwd")
    col_bwd = params.lstm("col_bwd")
    col_rows = []
    name_rows = []
    for column in table.columns:
        chars = _char_embeddings(column.name, model)
        state = bi_lstm_final(chars, col_fwd, col_bwd)
        dtype_id = 1 if column.dtype is ColType.REAL else 0
        col_rows.append(ops.add(state, ops.take_row(params["dtype_emb"], dtype_id)))
        name_rows.append(ops.mean(chars, axis=0))
    h_col = ops.stack_rows(col_rows)
    name_vecs = ops.stack_rows(name_rows)
    cell_sims, cell_pos = _cell_similarity(x.data, table, model)

    return Encoding(
        h_q=h_q,
        h_att_q=h_att_q,
        h_col=h_col,
        token_vecs=x,
        name_vecs=name_vecs,
        cell_sims=cell_sims,
        cell_pos=cell_pos,
        tokens=tokens,
        d=model.config.hidden_size,
    )


@dataclass
class HeadOutputs:
    """Logit tensors for every sketch head (C = column count)."""

    s_num_logits: Tensor  # (MAX_SELECT,) classes are counts 1..MAX_SELECT
    w_num_logits: Tensor  # (MAX_COND + 1,) classes are counts 0..MAX_COND
    rel_logits: Tensor  # (3,) NONE / AND / OR
    rej_logit: Tensor  # () rejection score, sigmoid-activated
    s_col_logits: Tensor  # (C,) independent per-column scores
    w_col_logits: Tensor  # (C,)
    agg_logits: Tensor  # (C, 6)
    op_logits: Tensor  # (C, 4)

    def distributions(self) -> dict:
        """Probability tables as plain arrays (reporting, not training)."""

        def soft(t):
            z = np.exp(t.data - t.data.max(axis=-1, keepdims=True))
            return z / z.sum(axis=-1, keepdims=True)

        rej = 1.0 / (1.0 + np.exp(-float(self.rej_logit.data)))
        return {
            "s_num": soft(self.s_num_logits),
            "w_num": soft(self.w_num_logits),
            "w_rel": soft(self.rel_logits),
            "rejection": np.array([1.0 - rej, rej]),
            "s_col": 1.0 / (1.0 + np.exp(-self.s_col_logits.data)),
            "w_col": 1.0 / (1.0 + np.exp(-self.w_col_logits.data)),
            "s_agg": soft(self.agg_logits),
            "w_op": soft(self.op_logits),
        }


def _column_features(enc: Encoding, first_pos, last_pos, model: Model) -> Tensor:
    """f_c = tanh(W [H_col_c ; ctx_c ; H_q at the column's lexical matches]).

    The positional blocks are the recurrent question states where the
    column's name matches first and last (they differ when a column is both
    selected and conditioned on) and where its cell contents match best.
    They distinguish a column mentioned in the selection part of the
    question from one mentioned - by name or only by value - in a condition.
    """
    params = model.params
    rows = []
    for c in range(enc.h_col.data.shape[0]):
        h_c = ops.take_row(enc.h_col, c)
        key = ops.matmul(params["w_int"], h_c)
        weights = ops.softmax(ops.matmul(enc.h_q, key))
        ctx = ops.matmul(weights, enc.h_q)
        positions = (int(first_pos[c]), int(last_pos[c]), int(enc.cell_pos[c]))
        states = [ops.take_row(enc.h_q, p) for p in positions]
        rows.append(ops.matmul(params["w_feat"], ops.concat([h_c, ctx] + states)))
    return ops.tanh(ops.stack_rows(rows))


def _normalize_rows(mat: Tensor) -> Tensor:
    rows = []
    for i in range(mat.data.shape[0]):
        row = ops.take_row(mat, i)
        inv = ops.power(ops.add(ops.dot(row, row), 1e-12), -0.5)
        rows.append(ops.mul(row, inv))
    return ops.stack_rows(rows)


def _lexical_links(enc: Encoding):
    """Cosine links between question tokens and column names.

    Returns per-column max cosine over tokens (C,), the first and last
    argmax token positions per column as plain int arrays, and per-token
    max cosine over columns (L,). A name quoted verbatim in the question
    hits the cosine ceiling of 1.0 under any parameters, so column
    mentions separate from the start and training only sharpens the margin.
    """
    tokens_unit = _normalize_rows(enc.token_vecs)
    names_unit = _normalize_rows(enc.name_vecs)
    by_token = ops.stack_rows(
        [
            ops.matmul(names_unit, ops.take_row(tokens_unit, t))
            for t in range(len(enc.tokens))
        ]
    )  # (L, C)
    col_sims = ops.max_rows(by_token)
    first_pos = by_token.data.argmax(axis=0)
    last_pos = len(enc.tokens) - 1 - by_token.data[::-1].argmax(axis=0)
    token_ground = ops.max_rows(
        ops.stack_rows(
            [
                ops.matmul(tokens_unit, ops.take_row(names_unit, c))
                for c in range(names_unit.data.shape[0])
            ]
        )
    )  # (L,)
    return col_sims, first_pos, last_pos, token_ground


def predict_heads(enc: Encoding, model: Model) -> HeadOutputs:
    params = model.params
    sims, first_pos, last_pos, token_ground = _lexical_links(enc)
    feats = _column_features(enc, first_pos, last_pos, model)
    n_cols = enc.h_col.data.shape[0]

    def affine(w, b, x):
        return ops.add(ops.matmul(params[w], x), params[b])

    s_col_logits = ops.add(
        ops.add(ops.matmul(feats, params["w_scol"]), ops.mul(sims, params["a_scol"])),
        params["b_scol"],
    )
    w_col_logits = ops.add(
        ops.add(
            ops.add(ops.matmul(feats, params["w_wcol"]), ops.mul(sims, params["a_wcol"])),
            ops.mul(enc.cell_sims, params["a_cell"]),
        ),
        params["b_wcol"],
    )
    ground_att = ops.softmax(ops.matmul(enc.h_q, params["w_rejatt"]))
    rej_logit = ops.add_n(
        [
            ops.dot(params["w_rej_q"], enc.h_att_q),
            ops.mul(params["w_rej_s"], ops.vec_max(s_col_logits)),
            ops.mul(params["w_rej_w"], ops.vec_max(w_col_logits)),
            ops.mul(params["a_rej"], ops.dot(ground_att, token_ground)),
            params["b_rej"],
        ]
    )
    question_agg = ops.broadcast_rows(ops.matmul(params["w_aggq"], enc.h_att_q), n_cols)
    question_op = ops.broadcast_rows(ops.matmul(params["w_opq"], enc.h_att_q), n_cols)
    return HeadOutputs(
        s_num_logits=affine("w_snum", "b_snum", enc.h_att_q),
        w_num_logits=affine("w_wnum", "b_wnum", enc.h_att_q),
        rel_logits=affine("w_rel", "b_rel", enc.h_att_q),
        rej_logit=rej_logit,
        s_col_logits=s_col_logits,
        w_col_logits=w_col_logits,
        agg_logits=ops.add(
            ops.add(ops.matmul(feats, params["w_agg"]), question_agg), params["b_agg"]
        ),
        op_logits=ops.add(
            ops.add(ops.matmul(feats, params["w_opsel"]), question_op), params["b_opsel"]
        ),
    )


@dataclass
class SpanPrediction:
    start_logits: Tensor  # (L,)
    end_logits: Tensor  # (L,)
    summary: Tensor  # (d,) pooled H_n, the cell-attention query
    start: int
    end: int

    @property
    def start_probs(self) -> np.ndarray:
        z = np.exp(self.start_logits.data - self.start_logits.data.max())
        return z / z.sum()

    @property
    def end_probs(self) -> np.ndarray:
        z = np.exp(self.end_logits.data - self.end_logits.data.max())
        return z / z.sum()


def best_span(start_probs: np.ndarray, end_probs: np.ndarray) -> tuple:
    """Highest-probability (start, end) pair with start <= end."""
    joint = np.triu(np.outer(start_probs, end_probs))
    flat = int(np.argmax(joint))
    n = len(start_probs)
    return flat // n, flat % n


def predict_value_span(enc: Encoding, cond_col: int, cond_op, model: Model) -> SpanPrediction:
    """Pointer over question tokens for the value of one condition.

    H_n concatenates projections of the conditioned column, the operator
    embedding, and the pooled question with each token vector, giving an
    (L, 4d) matrix scored by two small tanh networks for start and end.
    """
    params = model.params
    n_cols = enc.h_col.data.shape[0]
    if not 0 <= cond_col < n_cols:
        raise ContractViolation(f"condition column {cond_col} out of range")
    h_c = ops.take_row(enc.h_col, cond_col)
    h_op = ops.take_row(params["op_emb"], int(cond_op))
    fixed = ops.concat(
        [
            ops.matmul(params["p_col"], h_c),
            ops.matmul(params["p_op"], h_op),
            ops.matmul(params["p_attq"], enc.h_att_q),
        ]
    )
    L = len(enc.tokens)
    h_n = ops.concat([ops.broadcast_rows(fixed, L), enc.h_q], axis=1)

    start_logits = ops.matmul(ops.tanh(ops.matmul(h_n, params["u_start"])), params["w_start"])
    end_logits = ops.matmul(ops.tanh(ops.matmul(h_n, params["u_end"])), params["w_end"])
    summary = ops.matmul(params["w_cellq"], ops.mean(h_n, axis=0))

    pred = SpanPrediction(
        start_logits=start_logits,
        end_logits=end_logits,
        summary=summary,
        start=0,
        end=0,
    )
    pred.start, pred.end = best_span(pred.start_probs, pred.end_probs)
    return pred
