"""Bidirectional LSTM encoders.

Two encoder roles over the same feature space:

* an independent question encoder producing the attention values v;
* a shared encoder producing the passage keys h and question keys u with
  one parameter set, so both sequences live in the same similarity space.

Each direction's whole pass is a single graph node with a hand-written
backward-through-time rule; the per-step Python loop stays out of the
autodiff tape, which matters for training throughput. The rule is pinned
by finite-difference tests.
"""

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .params import orthogonal, xavier_uniform
from .tensor import make_node


def _sig(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_direction(x, w, u, b, reverse=False):
    """One LSTM direction over a [n, in_dim] sequence -> [n, d].

    Gate layout along the 4d axis is (input, forget, cell, output).
    Output row t is the hidden state after consuming position t in
    processing order, stored back at position t.
    """
    n = x.data.shape[0]
    d = u.data.shape[0]
    xw = x.data @ w.data + b.data  # [n, 4d]
    order = range(n - 1, -1, -1) if reverse else range(n)

    out = np.zeros((n, d))
    h_prevs = np.zeros((n, d))      # hidden state entering each step
    c_prevs = np.zeros((n, d))
    gates = np.zeros((n, 4 * d))    # activated (i, f, g, o) per step
    tanh_cs = np.zeros((n, d))
    h = np.zeros(d)
    c = np.zeros(d)
    for t in order:
        pre = xw[t] + h @ u.data
        i = _sig(pre[:d])
        f = _sig(pre[d:2 * d])
        g = np.tanh(pre[2 * d:3 * d])
        o = _sig(pre[3 * d:])
        h_prevs[t] = h
        c_prevs[t] = c
        gates[t, :d] = i
        gates[t, d:2 * d] = f
        gates[t, 2 * d:3 * d] = g
        gates[t, 3 * d:] = o
        c = f * c + i * g
        tanh_c = np.tanh(c)
        tanh_cs[t] = tanh_c
        h = o * tanh_c
        out[t] = h

    def bwd(grad_out):
        dpre = np.zeros((n, 4 * d))
        u_t = u.data.T
        dh_carry = np.zeros(d)
        dc_carry = np.zeros(d)
        for t in reversed(order):
            i = gates[t, :d]
            f = gates[t, d:2 * d]
            g = gates[t, 2 * d:3 * d]
            o = gates[t, 3 * d:]
            tanh_c = tanh_cs[t]
            dh = grad_out[t] + dh_carry
            do = dh * tanh_c
            dc = dc_carry + dh * o * (1.0 - tanh_c * tanh_c)
            row = dpre[t]
            row[:d] = dc * g * i * (1.0 - i)
            row[d:2 * d] = dc * c_prevs[t] * f * (1.0 - f)
            row[2 * d:3 * d] = dc * i * (1.0 - g * g)
            row[3 * d:] = do * o * (1.0 - o)
            dc_carry = dc * f
            dh_carry = row @ u_t
        dx = dpre @ w.data.T if x.requires_grad else None
        dw = x.data.T @ dpre
        du = h_prevs.T @ dpre
        db = dpre.sum(axis=0)
        return dx, dw, du, db

    return make_node(out, (x, w, u, b), bwd)


class BiLSTMEncoder:
    """Forward and backward LSTM over a sequence, states concatenated."""

    def __init__(self, params, prefix, in_dim, hidden, rng):
        self.in_dim = in_dim
        self.hidden = hidden
        self.cells = {}
        for direction in ("fw", "bw"):
            w = params.add(f"{prefix}.{direction}.W", xavier_uniform(rng, (in_dim, 4 * hidden)))
            u = params.add(f"{prefix}.{direction}.U", np.concatenate(
                [orthogonal(rng, hidden, hidden) for _ in range(4)], axis=1))
            bias = np.zeros(4 * hidden)
            bias[hidden:2 * hidden] = 1.0  # forget gate open at init
            b = params.add(f"{prefix}.{direction}.b", bias)
            self.cells[direction] = (w, u, b)

    def __call__(self, features):
        """[n, in_dim] -> [n, 2*hidden]."""
        if features.data.shape[0] == 0:
            raise ShapeError("cannot encode an empty sequence")
        if features.data.shape[1] != self.in_dim:
            raise ShapeError(
                f"encoder built for input width {self.in_dim}, got {features.data.shape[1]}"
            )
        fw = lstm_direction(features, *self.cells["fw"], reverse=False)
        bw = lstm_direction(features, *self.cells["bw"], reverse=True)
        return T.concat([fw, bw], axis=1)


class EncoderPair:
    """The independent question encoder plus the shared passage/question encoder."""

    def __init__(self, params, in_dim, hidden, rng):
        self.independent = BiLSTMEncoder(params, "enc.indep", in_dim, hidden, rng)
        self.shared = BiLSTMEncoder(params, "enc.shared", in_dim, hidden, rng)

    def encode_independent_question(self, question_features):
        """v: [m, 2d], parameters disjoint from the shared encoder."""
        return self.independent(question_features)

    def encode_shared(self, passage_features, question_features):
        """(h: [n, 2d], u: [m, 2d]) from one parameter set."""
        return self.shared(passage_features), self.shared(question_features)
