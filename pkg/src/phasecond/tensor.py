"""Dense float64 tensors with reverse-mode automatic differentiation.

Every value in the model is a `Tensor` wrapping a row-major numpy array.
Operations record their inputs and a local backward rule; `backward()`
replays the tape in reverse topological order and accumulates gradients
additively across fan-out, so two calls on the same graph are bitwise
identical.

Broadcasting is deliberately restricted: shapes must be equal, or the
smaller operand's shape must equal the trailing dimensions of the larger
(bias-vector style). Anything fancier must be spelled out with explicit
ops like `repeat_rows`, which keeps every gradient rule auditable.
"""

import numpy as np

from .errors import DegenerateRowError, GraphError, NumericsError, ShapeError


class Tensor:
    """A node in the computation graph.

    data          float64 ndarray, row-major
    requires_grad whether gradients flow into this tensor
    grad          accumulated gradient, same shape as data (or None)
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def detach(self):
        """A leaf copy that shares no graph history."""
        t = Tensor(self.data.copy())
        return t

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar used throughout the layers.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data, parents, backward_fn):
    """Create an op node.

    backward_fn(upstream) must return one gradient array (or None) per
    parent, in order. It is only invoked when some parent requires grad.
    """
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def backward(loss):
    """Accumulate d(loss)/d(t) into t.grad for every tensor in the graph.

    loss must be a scalar (shape ()). Gradients add onto existing .grad
    buffers; callers zero them between steps.
    """
    if loss.data.shape != ():
        raise GraphError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return

    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    grads = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.grad is None:
            node.grad = g.copy()
        else:
            node.grad = node.grad + g
        if node._backward is None:
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            acc = grads.get(id(p))
            grads[id(p)] = pg if acc is None else acc + pg


# ---------------------------------------------------------------------------
# Shape plumbing

def _check_broadcast(big, small):
    """Allow equal shapes or trailing-dimension expansion of the smaller."""
    if big == small:
        return
    if len(small) < len(big) and big[len(big) - len(small):] == small:
        return
    raise ShapeError(f"shapes {big} and {small} are not trailing-broadcast compatible")


def _reduce_to(grad, shape):
    """Sum out the broadcast leading axes so grad matches `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(extra)))


def _binary_shapes(a, b):
    if a.data.ndim >= b.data.ndim:
        _check_broadcast(a.data.shape, b.data.shape)
    else:
        _check_broadcast(b.data.shape, a.data.shape)


# ---------------------------------------------------------------------------
# Elementwise ops

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b)

    def bwd(g):
        return (_reduce_to(g, a.data.shape) if a.requires_grad else None,
                _reduce_to(g, b.data.shape) if b.requires_grad else None)

    return make_node(a.data + b.data, (a, b), bwd)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b)

    def bwd(g):
        return _reduce_to(g, a.data.shape), -_reduce_to(g, b.data.shape)

    return make_node(a.data - b.data, (a, b), bwd)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b)

    def bwd(g):
        return (_reduce_to(g * b.data, a.data.shape) if a.requires_grad else None,
                _reduce_to(g * a.data, b.data.shape) if b.requires_grad else None)

    return make_node(a.data * b.data, (a, b), bwd)


def neg(a):
    return make_node(-a.data, (a,), lambda g: (-g,))


def mul_const(a, c):
    c = float(c)
    return make_node(a.data * c, (a,), lambda g: (g * c,))


def add_const(a, c):
    return make_node(a.data + float(c), (a,), lambda g: (g,))


def rsub_const(c, a):
    """c - a for a python scalar c."""
    return make_node(float(c) - a.data, (a,), lambda g: (-g,))


def relu(a):
    mask = a.data > 0  # subgradient at 0 fixed to 0

    def bwd(g):
        return (g * mask,)

    return make_node(np.where(mask, a.data, 0.0), (a,), bwd)


def tanh(a):
    out = np.tanh(a.data)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return make_node(out, (a,), bwd)


def sigmoid(a):
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ex = np.exp(a.data[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        return (g * out * (1.0 - out),)

    return make_node(out, (a,), bwd)


def exp(a):
    out = np.exp(a.data)

    def bwd(g):
        return (g * out,)

    return make_node(out, (a,), bwd)


def log(a):
    def bwd(g):
        return (g / a.data,)

    return make_node(np.log(a.data), (a,), bwd)


def clamp_min(a, floor):
    """max(a, floor); gradient passes only where a was not clamped."""
    floor = float(floor)
    mask = a.data > floor

    def bwd(g):
        return (g * mask,)

    return make_node(np.where(mask, a.data, floor), (a,), bwd)


def dropout(a, rate, rng):
    """Inverted dropout; rng draws one mask per call."""
    if rate <= 0.0:
        return a
    keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)

    def bwd(g):
        return (g * keep,)

    return make_node(a.data * keep, (a,), bwd)


# ---------------------------------------------------------------------------
# Linear algebra and structure ops

def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects matrices, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}")

    def bwd(g):
        return (g @ b.data.T if a.requires_grad else None,
                a.data.T @ g if b.requires_grad else None)

    return make_node(a.data @ b.data, (a, b), bwd)


def tsum(a):
    """Sum of all entries -> scalar tensor."""
    def bwd(g):
        return (np.full(a.data.shape, g, dtype=np.float64),)

    return make_node(a.data.sum(), (a,), bwd)


def mean(a):
    n = a.data.size

    def bwd(g):
        return (np.full(a.data.shape, g / n, dtype=np.float64),)

    return make_node(a.data.mean(), (a,), bwd)


def transpose(a):
    def bwd(g):
        return (g.T.copy(),)

    return make_node(a.data.T.copy(), (a,), bwd)


def reshape(a, shape):
    old = a.data.shape

    def bwd(g):
        return (g.reshape(old),)

    return make_node(a.data.reshape(shape), (a,), bwd)


def concat(tensors, axis):
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bwd)


def rows(a, start, stop):
    """a[start:stop, :]."""
    def bwd(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return make_node(a.data[start:stop], (a,), bwd)


def cols(a, start, stop):
    """a[:, start:stop]."""
    def bwd(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return make_node(a.data[:, start:stop], (a,), bwd)


def pick(a, i, j):
    """Scalar a[i, j]."""
    def bwd(g):
        full = np.zeros_like(a.data)
        full[i, j] = g
        return (full,)

    return make_node(a.data[i, j], (a,), bwd)


def repeat_rows(a, n):
    """Tile a [1, w] row to [n, w]; gradient sums back over rows."""
    if a.data.ndim != 2 or a.data.shape[0] != 1:
        raise ShapeError(f"repeat_rows expects a [1, w] row, got {a.data.shape}")

    def bwd(g):
        return (g.sum(axis=0, keepdims=True),)

    return make_node(np.repeat(a.data, n, axis=0), (a,), bwd)


def gather_rows(table, indices):
    """Select rows of a [V, d] table by an int index array."""
    idx = np.asarray(indices, dtype=np.intp)

    def bwd(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return make_node(table.data[idx], (table,), bwd)


def softmax_rows(x, mask=None):
    """Row-wise softmax with optional boolean keep-mask.

    Masked-out entries are exactly 0 in the output; each row is stabilized
    by subtracting its (unmasked) max. A row with no unmasked entries is
    an error.
    """
    data = x.data
    if data.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got shape {data.shape}")
    if data.shape[1] < 1:
        raise ShapeError("softmax_rows requires at least one column")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != data.shape:
            raise ShapeError(f"mask shape {mask.shape} does not match input {data.shape}")
        dead = ~mask.any(axis=1)
        if dead.any():
            raise DegenerateRowError(f"row(s) {np.flatnonzero(dead).tolist()} are fully masked")
        neg = np.where(mask, data, -np.inf)
        shifted = neg - neg.max(axis=1, keepdims=True)
        e = np.where(mask, np.exp(np.where(mask, shifted, 0.0)), 0.0)
    else:
        shifted = data - data.max(axis=1, keepdims=True)
        e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return make_node(out, (x,), bwd)


# ---------------------------------------------------------------------------
# Verification harness

def grad_check(f, x, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    f takes the tensor x and returns a scalar tensor. The relative error
    per entry is |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    was_rg, was_grad = x.requires_grad, x.grad
    x.requires_grad = True
    x.grad = None
    try:
        out = f(x)
        if out.data.shape != ():
            raise GraphError("grad_check target must return a scalar")
        if not np.isfinite(out.data):
            raise NumericsError("function output is not finite")
        backward(out)
        analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

        numeric = np.zeros_like(x.data)
        flat = x.data.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f(x).data)
            flat[i] = orig - eps
            down = float(f(x).data)
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericsError("function output is not finite during differencing")
            num_flat[i] = (up - down) / (2.0 * eps)

        denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
        err = np.abs(analytic - numeric) / denom
        return float(err.max()) if err.size else 0.0
    finally:
        x.requires_grad = was_rg
        x.grad = was_grad
