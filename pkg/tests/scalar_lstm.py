"""Plain-Python scalar LSTM, used as an oracle for the vectorized engine.

Loops over units with math.exp/math.tanh; shares nothing with the numpy
implementation except the gate-stacking convention (input, forget, cell,
output along the 4H axis).
"""

import math


def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def scalar_lstm_final_hidden(x, w_in, w_rec, bias):
    """Run the recursion step by step; returns the final hidden state list.

    Args:
        x: T x F nested list.
        w_in: F x 4H nested list.
        w_rec: H x 4H nested list.
        bias: length-4H list.
    """
    n_hidden = len(w_rec)
    h = [0.0] * n_hidden
    c = [0.0] * n_hidden
    for x_t in x:
        z = list(bias)
        for j in range(4 * n_hidden):
            for k, xv in enumerate(x_t):
                z[j] += xv * w_in[k][j]
            for k in range(n_hidden):
                z[j] += h[k] * w_rec[k][j]
        gate_i = [_sig(z[j]) for j in range(n_hidden)]
        gate_f = [_sig(z[n_hidden + j]) for j in range(n_hidden)]
        gate_g = [math.tanh(z[2 * n_hidden + j]) for j in range(n_hidden)]
        gate_o = [_sig(z[3 * n_hidden + j]) for j in range(n_hidden)]
        c = [gate_f[j] * c[j] + gate_i[j] * gate_g[j] for j in range(n_hidden)]
        h = [gate_o[j] * math.tanh(c[j]) for j in range(n_hidden)]
    return h
