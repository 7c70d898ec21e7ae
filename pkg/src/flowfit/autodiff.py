"""Reverse-mode automatic differentiation over batched float64 matrices.

Values are plain 2-d numpy arrays: rows index batch samples, columns index
coordinates.  Every operation returns a Node carrying the result, its input
nodes, and a vector-Jacobian product, so one backward() sweep from a 1x1
scalar accumulates exact gradients into every parameter that influenced it.
The graph is rebuilt on each forward pass (define-by-run); nothing is cached
between iterations.

Elementwise binary ops broadcast along any axis of size one (in particular a
1xc parameter row over an nxc batch); gradients are summed back over the
broadcast axes.  log and div raise DomainError instead of emitting NaN/inf,
so density code has to clamp its own inputs.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeError

_no_grad_depth = 0


class no_grad:
    """Context manager disabling tape recording (cheap evaluation-only mode)."""

    def __enter__(self):
        global _no_grad_depth
        _no_grad_depth += 1
        return self

    def __exit__(self, exc_type, exc, tb):
        global _no_grad_depth
        _no_grad_depth -= 1
        return False


def _as_matrix(x):
    if isinstance(x, np.ndarray):
        if x.ndim != 2:
            raise ShapeError("constant", x.shape)
        return x.astype(np.float64, copy=False)
    arr = np.array(x, dtype=np.float64)
    if arr.ndim > 2:
        raise ShapeError("constant", arr.shape)
    return arr.reshape((1, 1) if arr.ndim == 0 else (1, arr.shape[0]) if arr.ndim == 1 else arr.shape)


class Node:
    """One value in the computation graph."""

    __slots__ = ("value", "parents", "vjp", "grad", "requires_grad")

    def __init__(self, value, parents=(), vjp=None, requires_grad=False):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def item(self):
        if self.value.shape != (1, 1):
            raise ShapeError("item", self.value.shape)
        return float(self.value[0, 0])

    # -- sugar -------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, p):
        return pow_(self, p)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean_(self, axis)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)

    def __repr__(self):
        return f"Node(shape={self.value.shape}, requires_grad={self.requires_grad})"


class Param(Node):
    """Trainable leaf node with a local name (checkpoint block identifier)."""

    __slots__ = ("name",)

    def __init__(self, value, name):
        super().__init__(_as_matrix(value).copy(), requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Param({self.name}, shape={self.value.shape})"


def constant(x):
    return Node(_as_matrix(x))


def variable(x):
    """Non-parameter leaf that still collects a gradient (used in tests)."""
    return Node(_as_matrix(x), requires_grad=True)


def as_node(x):
    return x if isinstance(x, Node) else constant(x)


# -- op machinery -----------------------------------------------------------

def _recording(*nodes):
    return _no_grad_depth == 0 and any(n.requires_grad for n in nodes)


def _check_elementwise(op, sa, sb):
    if (sa[0] != sb[0] and 1 not in (sa[0], sb[0])) or (sa[1] != sb[1] and 1 not in (sa[1], sb[1])):
        raise ShapeError(op, sa, sb)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _binary(op, a, b, value, da, db):
    """Build an elementwise binary node; da/db map output grad to input grad."""
    if not _recording(a, b):
        return Node(value)

    def vjp(g):
        ga = _unbroadcast(da(g), a.value.shape) if a.requires_grad else None
        gb = _unbroadcast(db(g), b.value.shape) if b.requires_grad else None
        return ga, gb

    return Node(value, (a, b), vjp, requires_grad=True)


def _unary(op, a, value, da):
    if not _recording(a):
        return Node(value)

    def vjp(g):
        return (da(g),)

    return Node(value, (a,), vjp, requires_grad=True)


# -- elementwise binary ops ---------------------------------------------------

def add(a, b):
    a, b = as_node(a), as_node(b)
    _check_elementwise("add", a.value.shape, b.value.shape)
    return _binary("add", a, b, a.value + b.value, lambda g: g, lambda g: g)


def sub(a, b):
    a, b = as_node(a), as_node(b)
    _check_elementwise("sub", a.value.shape, b.value.shape)
    return _binary("sub", a, b, a.value - b.value, lambda g: g, lambda g: -g)


def mul(a, b):
    a, b = as_node(a), as_node(b)
    _check_elementwise("mul", a.value.shape, b.value.shape)
    av, bv = a.value, b.value
    return _binary("mul", a, b, av * bv, lambda g: g * bv, lambda g: g * av)


def div(a, b):
    a, b = as_node(a), as_node(b)
    _check_elementwise("div", a.value.shape, b.value.shape)
    av, bv = a.value, b.value
    if np.any(bv == 0.0):
        raise DomainError("div", "division by zero")
    out = av / bv
    return _binary("div", a, b, out, lambda g: g / bv, lambda g: -g * av / (bv * bv))


def atan2(y, x):
    y, x = as_node(y), as_node(x)
    _check_elementwise("atan2", y.value.shape, x.value.shape)
    yv, xv = y.value, x.value
    denom = xv * xv + yv * yv
    return _binary("atan2", y, x, np.arctan2(yv, xv),
                   lambda g: g * xv / denom, lambda g: -g * yv / denom)


def matmul(a, b):
    a, b = as_node(a), as_node(b)
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError("matmul", a.value.shape, b.value.shape)
    av, bv = a.value, b.value
    value = av @ bv
    if not _recording(a, b):
        return Node(value)

    def vjp(g):
        ga = g @ bv.T if a.requires_grad else None
        gb = av.T @ g if b.requires_grad else None
        return ga, gb

    return Node(value, (a, b), vjp, requires_grad=True)


# -- elementwise unary ops ----------------------------------------------------

def exp(a):
    a = as_node(a)
    out = np.exp(a.value)
    return _unary("exp", a, out, lambda g: g * out)


def log(a):
    a = as_node(a)
    if np.any(a.value <= 0.0):
        raise DomainError("log", f"non-positive argument (min {a.value.min()})")
    av = a.value
    return _unary("log", a, np.log(av), lambda g: g / av)


def tanh(a):
    a = as_node(a)
    out = np.tanh(a.value)
    return _unary("tanh", a, out, lambda g: g * (1.0 - out * out))


def relu(a):
    a = as_node(a)
    mask = a.value > 0.0
    return _unary("relu", a, np.where(mask, a.value, 0.0), lambda g: g * mask)


def _stable_sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(a):
    a = as_node(a)
    out = _stable_sigmoid(a.value)
    return _unary("sigmoid", a, out, lambda g: g * out * (1.0 - out))


def softplus(a):
    a = as_node(a)
    sig = _stable_sigmoid(a.value)
    return _unary("softplus", a, np.logaddexp(0.0, a.value), lambda g: g * sig)


def sin(a):
    a = as_node(a)
    av = a.value
    return _unary("sin", a, np.sin(av), lambda g: g * np.cos(av))


def cos(a):
    a = as_node(a)
    av = a.value
    return _unary("cos", a, np.cos(av), lambda g: -g * np.sin(av))


def pow_(a, p):
    a = as_node(a)
    p = float(p)
    av = a.value
    if p != round(p) and np.any(av < 0.0):
        raise DomainError("pow", f"negative base with fractional exponent {p}")
    if p < 1.0 and p != 0.0 and np.any(av == 0.0):
        raise DomainError("pow", f"zero base with exponent {p} (gradient undefined)")
    return _unary("pow", a, av ** p, lambda g: g * p * av ** (p - 1.0))


def clamp(a, lo=None, hi=None):
    a = as_node(a)
    if lo is None and hi is None:
        return a
    out = np.clip(a.value, lo, hi)
    mask = np.ones_like(a.value)
    if lo is not None:
        mask = mask * (a.value >= lo)
    if hi is not None:
        mask = mask * (a.value <= hi)
    return _unary("clamp", a, out, lambda g: g * mask)


# -- reductions and structure ops ---------------------------------------------

def sum_(a, axis=None):
    a = as_node(a)
    shape = a.value.shape
    if axis not in (None, 0, 1):
        raise ShapeError("sum", f"axis={axis}")
    value = a.value.sum(axis=axis, keepdims=True) if axis is not None else a.value.sum().reshape(1, 1)
    return _unary("sum", a, value, lambda g: np.ascontiguousarray(np.broadcast_to(g, shape)))


def mean_(a, axis=None):
    a = as_node(a)
    shape = a.value.shape
    if axis not in (None, 0, 1):
        raise ShapeError("mean", f"axis={axis}")
    count = shape[0] * shape[1] if axis is None else shape[axis]
    value = a.value.mean(axis=axis, keepdims=True) if axis is not None else a.value.mean().reshape(1, 1)
    return _unary("mean", a, value, lambda g: np.ascontiguousarray(np.broadcast_to(g, shape)) / count)


def broadcast_rows(a, rows):
    """Tile a 1xc row to rows x c; the gradient sums back over rows."""
    a = as_node(a)
    if a.value.shape[0] != 1:
        raise ShapeError("broadcast", a.value.shape)
    value = np.ascontiguousarray(np.broadcast_to(a.value, (rows, a.value.shape[1])))
    return _unary("broadcast", a, value, lambda g: g.sum(axis=0, keepdims=True))


def concat_cols(*nodes):
    nodes = tuple(as_node(n) for n in nodes)
    rows = nodes[0].value.shape[0]
    for n in nodes[1:]:
        if n.value.shape[0] != rows:
            raise ShapeError("concat-cols", *(n.value.shape for n in nodes))
    value = np.concatenate([n.value for n in nodes], axis=1)
    if not _recording(*nodes):
        return Node(value)
    widths = [n.value.shape[1] for n in nodes]
    offsets = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] if n.requires_grad else None
                     for i, n in enumerate(nodes))

    return Node(value, nodes, vjp, requires_grad=True)


def select_cols(a, cols):
    a = as_node(a)
    idx = np.asarray(cols, dtype=np.intp).ravel()
    if idx.size == 0 or idx.min() < 0 or idx.max() >= a.value.shape[1]:
        raise ShapeError("select-cols", a.value.shape, list(np.asarray(cols).ravel()))
    value = np.ascontiguousarray(a.value[:, idx])
    shape = a.value.shape

    def da(g):
        full = np.zeros(shape)
        np.add.at(full, (slice(None), idx), g)
        return full

    return _unary("select-cols", a, value, da)


# -- spec-facing dispatch -----------------------------------------------------

OPS = {
    "add": add, "sub": sub, "mul": mul, "div": div, "matmul": matmul,
    "exp": exp, "log": log, "tanh": tanh, "relu": relu, "sigmoid": sigmoid,
    "softplus": softplus, "sin": sin, "cos": cos, "atan2": atan2,
    "sum": sum_, "mean": mean_, "broadcast": broadcast_rows,
    "concat-cols": concat_cols, "select-cols": select_cols,
    "clamp": clamp, "pow": pow_,
}


def apply_op(op, *args, **kwargs):
    """Dispatch by op name; the registry above is the supported set."""
    try:
        fn = OPS[op]
    except KeyError:
        raise ShapeError(op, f"unknown op (have {sorted(OPS)})") from None
    return fn(*args, **kwargs)


# -- backward sweep -----------------------------------------------------------

def _topo_order(root):
    """Ancestors of root (gradient-requiring only), parents before children."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root, params=None):
    """Accumulate d(root)/d(node) for every gradient-requiring ancestor.

    root must be 1x1.  Sets .grad on each visited node and returns a map over
    `params` (zeros for parameters the root does not depend on).
    """
    if root.value.shape != (1, 1):
        raise ShapeError("backward", root.value.shape)
    order = _topo_order(root)
    grads = {id(root): np.ones((1, 1))}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None:
            continue
        node.grad = g
        if node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg
    if params is None:
        return None
    out = {}
    for p in params:
        g = grads.get(id(p))
        if g is None:
            g = np.zeros_like(p.value)
            p.grad = g
        out[p] = g
    return out
