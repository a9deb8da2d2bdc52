"""Gated fusion layers regulating information flow between attention stacks.

Outer fusion is a stack of highway layers applied to the concatenation of a
phase's attention outputs:

    C~ = ReLU(C W_C + b_C)
    z  = sigmoid(C W_z + b_z)
    C' = (1 - z) * C + z * C~

Inner fusion merges one attention layer's fresh output with that layer's
input through a GRU-like gate over [new; prev; new * prev]:

    B~ = tanh([new; prev; new*prev] W_B + b_B)
    f  = sigmoid([new; prev; new*prev] W_f + b_f)
    out = (1 - f) * prev + f * B~

Both are width preserving, and both outputs are elementwise convex
combinations of their carry and candidate values. Gate biases start at -1
so early training favors the carry path.
"""

from . import tensor as T
from .errors import ShapeError
from .params import xavier_uniform

GATE_BIAS_INIT = -1.0


class OuterFusionStack:
    """K width-preserving highway layers over a [n, width] input."""

    def __init__(self, params, prefix, width, n_layers, rng):
        self.width = width
        self.n_layers = n_layers
        self.layers = []
        for t in range(1, n_layers + 1):
            w_c = params.add(f"{prefix}.l{t}.W_C", xavier_uniform(rng, (width, width)))
            b_c = params.add(f"{prefix}.l{t}.b_C", [0.0] * width)
            w_z = params.add(f"{prefix}.l{t}.W_z", xavier_uniform(rng, (width, width)))
            b_z = params.add(f"{prefix}.l{t}.b_z", [GATE_BIAS_INIT] * width)
            self.layers.append((w_c, b_c, w_z, b_z))

    def __call__(self, c0):
        if c0.data.shape[1] != self.width:
            raise ShapeError(f"outer fusion built for width {self.width}, got {c0.data.shape[1]}")
        c = c0
        for w_c, b_c, w_z, b_z in self.layers:
            candidate = T.relu(T.add(T.matmul(c, w_c), b_c))
            z = T.sigmoid(T.add(T.matmul(c, w_z), b_z))
            c = T.add(T.mul(T.rsub_const(1.0, z), c), T.mul(z, candidate))
        return c


class InnerFusionLayer:
    """GRU-like gate merging an attention output with the layer's input."""

    def __init__(self, params, prefix, width, rng):
        self.width = width
        self.w_b = params.add(f"{prefix}.W_B", xavier_uniform(rng, (3 * width, width)))
        self.b_b = params.add(f"{prefix}.b_B", [0.0] * width)
        self.w_f = params.add(f"{prefix}.W_f", xavier_uniform(rng, (3 * width, width)))
        self.b_f = params.add(f"{prefix}.b_f", [GATE_BIAS_INIT] * width)

    def __call__(self, b_new, b_prev):
        if b_new.data.shape != b_prev.data.shape:
            raise ShapeError(
                f"inner fusion operands differ: {b_new.data.shape} vs {b_prev.data.shape}"
            )
        if b_new.data.shape[1] != self.width:
            raise ShapeError(f"inner fusion built for width {self.width}, got {b_new.data.shape[1]}")
        cat = T.concat([b_new, b_prev, T.mul(b_new, b_prev)], axis=1)
        candidate = T.tanh(T.add(T.matmul(cat, self.w_b), self.b_b))
        f = T.sigmoid(T.add(T.matmul(cat, self.w_f), self.b_f))
        return T.add(T.mul(T.rsub_const(1.0, f), b_prev), T.mul(f, candidate))
