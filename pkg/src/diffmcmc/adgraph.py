"""Reverse-mode automatic differentiation over dense float64 arrays.

Expressions are recorded as an acyclic graph of :class:`Node` objects with
eagerly computed values.  The reverse sweep emits *new* graph nodes rather
than raw arrays, so a gradient is itself a differentiable expression; taking
gradients of gradients (double backprop) is just running the sweep again on
the extended graph.

Leaf values can be rebound with :meth:`Node.set_value` and the whole graph
re-evaluated with :func:`eval_graph`, which is what the finite-difference
tests rely on.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # exp overflow for very negative inputs saturates to the correct limit 0
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-v))


class GraphError(ValueError):
    """Structural graph problem: shape mismatch, non-scalar root, bad leaf."""


def _arr(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Node:
    """One differentiable expression: an op, its operands and a cached value."""

    __slots__ = ("op", "parents", "value", "extra")

    def __init__(self, op: str, parents: tuple["Node", ...], value: np.ndarray, extra=None):
        self.op = op
        self.parents = parents
        self.value = value
        self.extra = extra

    def set_value(self, value) -> None:
        """Rebind a leaf; downstream values are stale until eval_graph."""
        if self.op not in ("input", "const"):
            raise GraphError(f"set_value on non-leaf node {self!r}")
        self.value = _arr(value)

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self) -> str:
        return f"<Node {self.op} {self.value.shape}>"


# ---------------------------------------------------------------------------
# construction helpers


def input_node(value) -> Node:
    return Node("input", (), _arr(value))


def constant(value) -> Node:
    return Node("const", (), _arr(value))


def _broadcast_shape(op: str, a: Node, b: Node) -> tuple:
    try:
        return np.broadcast_shapes(a.value.shape, b.value.shape)
    except ValueError as exc:
        raise GraphError(f"{op}: incompatible shapes {a.value.shape} and {b.value.shape}") from exc


def add(a: Node, b: Node) -> Node:
    _broadcast_shape("add", a, b)
    return Node("add", (a, b), a.value + b.value)


def mul(a: Node, b: Node) -> Node:
    _broadcast_shape("mul", a, b)
    return Node("mul", (a, b), a.value * b.value)


def scale(a: Node, c: float) -> Node:
    c = float(c)
    return Node("scale", (a,), a.value * c, extra=c)


def sub(a: Node, b: Node) -> Node:
    return add(a, scale(b, -1.0))


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise GraphError(f"matmul: incompatible shapes {a.value.shape} and {b.value.shape}")
    return Node("matmul", (a, b), a.value @ b.value)


def transpose(a: Node) -> Node:
    if a.value.ndim != 2:
        raise GraphError(f"transpose: expected 2-d, got {a.value.shape}")
    return Node("transpose", (a,), a.value.T.copy())


def reshape(a: Node, shape: tuple) -> Node:
    return Node("reshape", (a,), a.value.reshape(shape), extra=tuple(shape))


def broadcast_to(a: Node, shape: tuple) -> Node:
    return Node("broadcast", (a,), np.broadcast_to(a.value, shape).copy(), extra=tuple(shape))


def _sum_to(g: Node, shape: tuple) -> Node:
    if g.value.shape == tuple(shape):
        return g
    return Node("sum_to", (g,), _unbroadcast(g.value, shape), extra=tuple(shape))


def _unbroadcast(v: np.ndarray, shape: tuple) -> np.ndarray:
    while v.ndim > len(shape):
        v = v.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and v.shape[i] != 1:
            v = v.sum(axis=i, keepdims=True)
    return v.reshape(shape)


def reduce_sum(a: Node, axis: int | None = None, keepdims: bool = False) -> Node:
    return Node("sum", (a,), a.value.sum(axis=axis, keepdims=keepdims), extra=(axis, keepdims))


def power(a: Node, exponent: float) -> Node:
    exponent = float(exponent)
    return Node("power", (a,), a.value**exponent, extra=exponent)


def sigmoid(a: Node) -> Node:
    return Node("sigmoid", (a,), _sigmoid(a.value))


def embedding_lookup(table: Node, indices) -> Node:
    idx = np.asarray(indices, dtype=np.intp)
    if table.value.ndim != 2:
        raise GraphError(f"embedding_lookup: table must be 2-d, got {table.value.shape}")
    if idx.min(initial=0) < 0 or idx.max(initial=0) >= table.value.shape[0]:
        raise GraphError("embedding_lookup: index out of range")
    return Node("gather", (table,), table.value[idx], extra=idx)


def _scatter_rows(g: Node, idx: np.ndarray, nrows: int) -> Node:
    out = np.zeros((nrows,) + g.value.shape[1:])
    np.add.at(out, idx, g.value)
    return Node("scatter", (g,), out, extra=(idx, nrows))


# fused primitives and composites -------------------------------------------


def silu(x: Node) -> Node:
    return mul(x, sigmoid(x))


def _linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = x @ w
    out += b
    return out


def linear(x: Node, w: Node, b: Node) -> Node:
    """Affine map x @ w + b as one fused node (bias added in place)."""
    if x.value.ndim != 2 or w.value.ndim != 2 or x.value.shape[1] != w.value.shape[0]:
        raise GraphError(f"linear: incompatible shapes {x.value.shape} and {w.value.shape}")
    if b.value.shape != (w.value.shape[1],):
        raise GraphError(f"linear: bias shape {b.value.shape} does not match width {w.value.shape[1]}")
    return Node("linear", (x, w, b), _linear_forward(x.value, w.value, b.value))


def dot(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise GraphError(f"dot: shapes differ, {a.value.shape} vs {b.value.shape}")
    return reduce_sum(mul(a, b))


def sum_of_squares(a: Node, axis: int | None = None, keepdims: bool = False) -> Node:
    return reduce_sum(mul(a, a), axis=axis, keepdims=keepdims)


def _layer_norm_forward(x: np.ndarray, gain: np.ndarray, shift: np.ndarray, eps: float) -> np.ndarray:
    c = x - x.mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt((c * c).mean(axis=-1, keepdims=True) + eps)
    out = c * rstd
    out *= gain
    out += shift
    return out


def layer_norm(x: Node, gain: Node, shift: Node, eps: float = 1e-5) -> Node:
    """Normalize over the last (feature) axis with learnable affine.

    The forward pass is one fused node; the reverse rule rebuilds the
    normalisation statistics as graph nodes, so higher-order gradients flow.
    """
    if gain.value.shape != x.value.shape[-1:] or shift.value.shape != x.value.shape[-1:]:
        raise GraphError(
            f"layer_norm: affine shapes {gain.value.shape}/{shift.value.shape} do not match features {x.value.shape[-1:]}"
        )
    return Node("layer_norm", (x, gain, shift), _layer_norm_forward(x.value, gain.value, shift.value, eps), extra=eps)


def _feature_mean(a: Node) -> Node:
    return scale(reduce_sum(a, axis=-1, keepdims=True), 1.0 / a.value.shape[-1])


# ---------------------------------------------------------------------------
# forward re-evaluation


def _fw_add(node, a, b):
    return a + b


def _fw_mul(node, a, b):
    return a * b


_FORWARD: dict[str, Callable] = {
    "add": _fw_add,
    "mul": _fw_mul,
    "scale": lambda node, a: a * node.extra,
    "matmul": lambda node, a, b: a @ b,
    "linear": lambda node, x, w, b: _linear_forward(x, w, b),
    "layer_norm": lambda node, x, g, s: _layer_norm_forward(x, g, s, node.extra),
    "transpose": lambda node, a: a.T.copy(),
    "reshape": lambda node, a: a.reshape(node.extra),
    "broadcast": lambda node, a: np.broadcast_to(a, node.extra).copy(),
    "sum_to": lambda node, a: _unbroadcast(a, node.extra),
    "sum": lambda node, a: a.sum(axis=node.extra[0], keepdims=node.extra[1]),
    "power": lambda node, a: a**node.extra,
    "sigmoid": lambda node, a: _sigmoid(a),
    "gather": lambda node, t: t[node.extra],
    "scatter": lambda node, g: _fw_scatter(node, g),
}


def _fw_scatter(node, g):
    idx, nrows = node.extra
    out = np.zeros((nrows,) + g.shape[1:])
    np.add.at(out, idx, g)
    return out


def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    return order  # parents before children


def eval_graph(root: Node) -> np.ndarray:
    """Recompute every value in root's ancestry from the current leaves."""
    for node in _topo_order(root):
        if node.parents:
            node.value = _FORWARD[node.op](node, *(p.value for p in node.parents))
    return root.value


# ---------------------------------------------------------------------------
# reverse sweep (gradients as nodes)


def _vjp_add(node, g, needed):
    a, b = node.parents
    return (
        _sum_to(g, a.value.shape) if needed[0] else None,
        _sum_to(g, b.value.shape) if needed[1] else None,
    )


def _vjp_mul(node, g, needed):
    a, b = node.parents
    ga = _sum_to(mul(g, b), a.value.shape) if needed[0] else None
    gb = _sum_to(mul(g, a), b.value.shape) if needed[1] else None
    return ga, gb


def _vjp_matmul(node, g, needed):
    a, b = node.parents
    ga = matmul(g, transpose(b)) if needed[0] else None
    gb = matmul(transpose(a), g) if needed[1] else None
    return ga, gb


def _vjp_linear(node, g, needed):
    x, w, b = node.parents
    gx = matmul(g, transpose(w)) if needed[0] else None
    gw = matmul(transpose(x), g) if needed[1] else None
    gb = _sum_to(g, b.value.shape) if needed[2] else None
    return gx, gw, gb


def _vjp_layer_norm(node, g, needed):
    # rebuild the statistics as differentiable nodes; dx uses the standard
    # centered form dx = rstd * (dxh - mean(dxh) - xhat * mean(dxh * xhat))
    x, gain, shift = node.parents
    c = sub(x, _feature_mean(x))
    var = _feature_mean(mul(c, c))
    rstd = power(add(var, constant(node.extra)), -0.5)
    xhat = mul(c, rstd)
    g_gain = _sum_to(mul(g, xhat), gain.value.shape) if needed[1] else None
    g_shift = _sum_to(g, shift.value.shape) if needed[2] else None
    gx = None
    if needed[0]:
        dxh = mul(g, gain)
        centered = sub(sub(dxh, _feature_mean(dxh)), mul(xhat, _feature_mean(mul(dxh, xhat))))
        gx = mul(rstd, centered)
    return gx, g_gain, g_shift


def _vjp_sum(node, g, needed):
    (a,) = node.parents
    axis, keepdims = node.extra
    if axis is None:
        return (broadcast_to(g, a.value.shape),)
    if not keepdims:
        kshape = list(a.value.shape)
        kshape[axis] = 1
        g = reshape(g, tuple(kshape))
    return (broadcast_to(g, a.value.shape),)


def _vjp_sigmoid(node, g, needed):
    one_minus = add(constant(1.0), scale(node, -1.0))
    return (mul(g, mul(node, one_minus)),)


def _vjp_power(node, g, needed):
    (a,) = node.parents
    c = node.extra
    return (mul(g, scale(power(a, c - 1.0), c)),)


_VJP: dict[str, Callable] = {
    "add": _vjp_add,
    "mul": _vjp_mul,
    "scale": lambda node, g, needed: (scale(g, node.extra),),
    "matmul": _vjp_matmul,
    "linear": _vjp_linear,
    "layer_norm": _vjp_layer_norm,
    "transpose": lambda node, g, needed: (transpose(g),),
    "reshape": lambda node, g, needed: (reshape(g, node.parents[0].value.shape),),
    "broadcast": lambda node, g, needed: (_sum_to(g, node.parents[0].value.shape),),
    "sum_to": lambda node, g, needed: (broadcast_to(g, node.parents[0].value.shape),),
    "sum": _vjp_sum,
    "power": _vjp_power,
    "sigmoid": _vjp_sigmoid,
    "gather": lambda node, g, needed: (_scatter_rows(g, node.extra, node.parents[0].value.shape[0]),),
    "scatter": lambda node, g, needed: (embedding_lookup(g, node.extra[0]),),
}


def gradient_nodes(root: Node, wrt: Iterable[Node]) -> dict[Node, Node]:
    """Reverse sweep from a scalar root; returns differentiable gradient nodes.

    Nodes in `wrt` that the root does not depend on get constant-zero
    gradients.  The sweep only touches subgraphs that can reach a requested
    node, so unrequested parameters cost nothing.
    """
    wrt = list(wrt)
    if root.value.shape != ():
        raise GraphError(f"gradient root must be scalar, got shape {root.value.shape}")
    order = _topo_order(root)
    wanted = set(map(id, wrt))
    reach: set[int] = set()
    for node in order:  # parents first, so reachability propagates upward
        if id(node) in wanted or any(id(p) in reach for p in node.parents):
            reach.add(id(node))

    adjoint: dict[int, Node] = {id(root): constant(1.0)}
    for node in reversed(order):
        g = adjoint.get(id(node))
        if g is None or id(node) not in reach or not node.parents:
            continue
        needed = tuple(id(p) in reach for p in node.parents)
        contribs = _VJP[node.op](node, g, needed)
        for p, c in zip(node.parents, contribs):
            if c is None or id(p) not in reach:
                continue
            prev = adjoint.get(id(p))
            adjoint[id(p)] = c if prev is None else add(prev, c)

    out: dict[Node, Node] = {}
    for w in wrt:
        got = adjoint.get(id(w))
        out[w] = got if got is not None else constant(np.zeros(w.value.shape))
    return out


def reverse_gradients(root: Node, wrt: Iterable[Node]) -> dict[Node, np.ndarray]:
    """Gradient values of a scalar root with respect to the given nodes."""
    return {w: n.value for w, n in gradient_nodes(root, wrt).items()}


def input_gradient_node(root: Node, input: Node) -> Node:
    """Differentiable node valued at d(root)/d(input) for a leaf input.

    The returned node is part of the graph, so gradients of any scalar
    function of it (with respect to other leaves) are second-order
    derivatives of the original root.
    """
    if input.op != "input":
        raise GraphError("input_gradient_node: input must be an input leaf")
    if root.value.shape != ():
        raise GraphError(f"gradient root must be scalar, got shape {root.value.shape}")
    ancestors = _topo_order(root)
    if not any(n is input for n in ancestors):
        raise GraphError("input_gradient_node: input is not an ancestor of root")
    return gradient_nodes(root, [input])[input]
