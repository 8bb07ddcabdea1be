"""Resolving extracted value spans against table cells.

Two mechanisms with very different failure modes:

* The offline matcher embeds strings as the mean of their character
  embeddings and picks the column cell with the highest dot product. It is
  training-free and recovers surface forms that share characters with the
  cell (abbreviations, vowel shifts, suffix rewrites) but is blind to
  aliases spelled with disjoint characters.
* The trained path encodes each cell with a shared bi-LSTM and scores it
  against a summary of the question-side condition representation; the
  association is learned, so any consistently used surface form works.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sketchsql.autograd import Tensor, ops
from sketchsql.chars import CharVocab
from sketchsql.errors import ContractViolation
from sketchsql.model.layers import LstmWeights, bi_lstm_final
from sketchsql.sql import canonical_value, render_number
from sketchsql.tables import ColType, Table


def onehot_embedding(vocab: CharVocab) -> np.ndarray:
    """The training-free character basis used by the offline matcher."""
    return np.eye(vocab.size)


def mean_char_embedding(text: str, emb: np.ndarray, vocab: CharVocab) -> np.ndarray:
    """Mean of the character embeddings of `text` (order-invariant)."""
    if not text:
        raise ContractViolation("cannot embed empty text")
    ids = vocab.encode(text)
    return emb[ids].mean(axis=0)


def match_cell(substring: str, cells, emb: np.ndarray, vocab: CharVocab):
    """Cell with the highest dot-product similarity; ties -> lowest row index.

    Returns (cell value, score vector over the rows).
    """
    if not cells:
        raise ContractViolation("cannot match against an empty column")
    probe = mean_char_embedding(substring, emb, vocab)
    scores = np.array([probe @ mean_char_embedding(str(c), emb, vocab) for c in cells])
    return cells[int(np.argmax(scores))], scores


def match_prior(substring: str, cells, vocab: CharVocab) -> np.ndarray:
    """Character-overlap cosine between a span and each cell (one-hot basis).

    Used as an additive prior on the trained cell-attention scores, so the
    learned path starts from string matching and only has to model the
    residual (aliases, reformatted numbers).
    """
    emb = onehot_embedding(vocab)
    probe = mean_char_embedding(substring, emb, vocab)
    probe = probe / max(np.linalg.norm(probe), 1e-12)
    out = np.empty(len(cells))
    for i, c in enumerate(cells):
        v = mean_char_embedding(str(c), emb, vocab)
        out[i] = probe @ v / max(np.linalg.norm(v), 1e-12)
    return out


def cell_text(table: Table, col: int, row: int) -> str:
    cell = table.rows[row][col]
    if table.columns[col].dtype is ColType.REAL:
        return render_number(cell)
    return cell


def column_cell_texts(table: Table, col: int) -> list:
    return [cell_text(table, col, r) for r in range(table.n_rows)]


def offline_resolve(span: str, cond_col: int, table: Table,
                    emb: np.ndarray = None, vocab: CharVocab = None) -> str:
    """TEXT column -> best-matching cell; REAL column -> the span itself."""
    if table.columns[cond_col].dtype is ColType.REAL:
        return canonical_value(span)
    vocab = vocab or CharVocab()
    if emb is None:
        emb = onehot_embedding(vocab)
    value, _ = match_cell(span, column_cell_texts(table, cond_col), emb, vocab)
    return value


def encode_cell(text: str, char_emb: Tensor, fwd: LstmWeights, bwd: LstmWeights,
                vocab: CharVocab) -> Tensor:
    """Final state of the shared bi-LSTM over the cell's characters."""
    if not text:
        raise ContractViolation("cannot encode an empty cell")
    x = ops.embed(char_emb, vocab.encode(text))
    return bi_lstm_final(x, fwd, bwd)


@dataclass
class CellAttention:
    index: int  # argmax row (ties -> lowest)
    probs: Tensor  # distribution over rows
    scores: Tensor  # pre-softmax logits (cross-entropy trains on these)

    @property
    def distribution(self) -> np.ndarray:
        return self.probs.data


def cell_attention(summary: Tensor, cell_states, w_row: Tensor) -> CellAttention:
    """Score each row's encoded cell against the condition summary.

    score_i = summary . (H_cell_i * w_row); softmax over the column's rows.
    """
    if not cell_states:
        raise ContractViolation("cell attention over an empty column")
    h = ops.stack_rows(cell_states)  # (R, d)
    weighted = ops.mul(h, w_row)  # row-wise feature gate
    scores = ops.matmul(weighted, summary)  # (R,)
    probs = ops.softmax(scores)
    return CellAttention(index=int(np.argmax(probs.data)), probs=probs, scores=scores)
