"""Pure numpy LSTM sequence kernel (fallback backend).

Gate layout along the 4H axis: input, forget, candidate, output.
Candidate uses tanh, the rest sigmoid. The compiled backend implements the
same recurrences; both must agree to ~1e-10.
"""

import numpy as np

NAME = "numpy"


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_forward(x, h0, c0, wx, wh, b):
    """Run the full sequence; returns (h_seq, cache for backward)."""
    steps = x.shape[0]
    if steps == 0:
        raise ValueError("lstm_forward: empty sequence")
    hidden = h0.shape[0]
    gates = np.empty((steps, 4 * hidden))
    h_seq = np.empty((steps, hidden))
    c_seq = np.empty((steps, hidden))
    base = x @ wx + b
    h = h0
    c = c0
    for t in range(steps):
        pre = base[t] + h @ wh
        i = _sigmoid(pre[:hidden])
        f = _sigmoid(pre[hidden : 2 * hidden])
        g = np.tanh(pre[2 * hidden : 3 * hidden])
        o = _sigmoid(pre[3 * hidden :])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[t, :hidden] = i
        gates[t, hidden : 2 * hidden] = f
        gates[t, 2 * hidden : 3 * hidden] = g
        gates[t, 3 * hidden :] = o
        h_seq[t] = h
        c_seq[t] = c
    return h_seq, (x, h0, c0, wx, wh, h_seq, c_seq, gates)


def lstm_backward(cache, d_hseq):
    """Backpropagate through the whole sequence.

    Returns (dx, dh0, dc0, dwx, dwh, db).
    """
    x, h0, c0, wx, wh, h_seq, c_seq, gates = cache
    steps, hidden = h_seq.shape
    dx = np.zeros_like(x)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * hidden)
    dh_next = np.zeros(hidden)
    dc_next = np.zeros(hidden)
    for t in range(steps - 1, -1, -1):
        i = gates[t, :hidden]
        f = gates[t, hidden : 2 * hidden]
        g = gates[t, 2 * hidden : 3 * hidden]
        o = gates[t, 3 * hidden :]
        c = c_seq[t]
        c_prev = c_seq[t - 1] if t > 0 else c0
        h_prev = h_seq[t - 1] if t > 0 else h0
        tc = np.tanh(c)

        dh = d_hseq[t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f

        dpre = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ]
        )
        dwx += np.outer(x[t], dpre)
        dwh += np.outer(h_prev, dpre)
        db += dpre
        dx[t] = dpre @ wx.T
        dh_next = dpre @ wh.T
    return dx, dh_next, dc_next, dwx, dwh, db
