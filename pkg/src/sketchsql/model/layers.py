"""Recurrent building blocks shared by the question, column, and cell encoders."""

from __future__ import annotations

from dataclasses import dataclass

from sketchsql.autograd import Tensor, ops


@dataclass
class LstmWeights:
    """One direction of an LSTM: input, recurrent, and bias tensors."""

    wx: Tensor  # (n_in, 4*hidden)
    wh: Tensor  # (hidden, 4*hidden)
    b: Tensor  # (4*hidden,)

    @property
    def hidden(self) -> int:
        return self.wh.shape[0]


def bi_lstm_sequence(x: Tensor, fwd: LstmWeights, bwd: LstmWeights) -> Tensor:
    """(T, n_in) -> (T, 2*hidden): forward and reversed-backward states."""
    h_f = ops.lstm_sequence(x, fwd.wx, fwd.wh, fwd.b)
    h_b = ops.reverse_rows(ops.lstm_sequence(ops.reverse_rows(x), bwd.wx, bwd.wh, bwd.b))
    return ops.concat([h_f, h_b], axis=1)


def bi_lstm_final(x: Tensor, fwd: LstmWeights, bwd: LstmWeights) -> Tensor:
    """Concatenated final states of both directions: (T, n_in) -> (2*hidden,)."""
    h_f = ops.lstm_sequence(x, fwd.wx, fwd.wh, fwd.b)
    h_b = ops.lstm_sequence(ops.reverse_rows(x), bwd.wx, bwd.wh, bwd.b)
    last = h_f.shape[0] - 1
    return ops.concat([ops.take_row(h_f, last), ops.take_row(h_b, last)], axis=0)
