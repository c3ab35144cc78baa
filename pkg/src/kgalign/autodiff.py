"""Minimal reverse-mode differentiation over numpy arrays.

A computation is a DAG of ``Node`` objects; each op records its parents
and a vector-Jacobian callback. ``backward`` walks the graph once in
reverse topological order and accumulates gradients. Only the handful of
ops the embedding model needs are provided.
"""

from __future__ import annotations

import numpy as np


class Node:
    __slots__ = ("value", "parents", "vjp", "name")

    def __init__(self, value, parents=(), vjp=None, name=""):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.name = name

    def __repr__(self):
        shape = getattr(self.value, "shape", ())
        return f"Node({self.name or 'leaf'}, shape={shape})"


def leaf(value, name="") -> Node:
    return Node(np.asarray(value, dtype=float), name=name)


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
            stack.append((p, False))
    return order


def backward(root: Node) -> dict[int, np.ndarray]:
    """Gradients of a scalar root w.r.t. every node, keyed by ``id(node)``."""
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(np.asarray(root.value, dtype=float))}
    for node in reversed(_topo_order(root)):
        g = grads.get(id(node))
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg
    return grads


def matmul(a: Node, b: Node) -> Node:
    """2-D matrix product."""
    value = a.value @ b.value

    def vjp(g):
        return g @ b.value.T, a.value.T @ g

    return Node(value, (a, b), vjp, "matmul")


def project_images(v: Node, w: Node) -> Node:
    """Batched projection (m, n, d_in) @ (d_in, d) -> (m, n, d)."""
    value = v.value @ w.value

    def vjp(g):
        return g @ w.value.T, np.einsum("mnd,mne->de", v.value, g)

    return Node(value, (v, w), vjp, "project_images")


def add_bias(x: Node, b: Node) -> Node:
    """Broadcast a vector over the last axis."""
    value = x.value + b.value

    def vjp(g):
        axes = tuple(range(g.ndim - 1))
        return g, g.sum(axis=axes)

    return Node(value, (x, b), vjp, "add_bias")


def add(a: Node, b: Node) -> Node:
    value = a.value + b.value

    def vjp(g):
        return g, g

    return Node(value, (a, b), vjp, "add")


def sub(a: Node, b: Node) -> Node:
    value = a.value - b.value

    def vjp(g):
        return g, -g

    return Node(value, (a, b), vjp, "sub")


def add_scalar(x: Node, c: float) -> Node:
    def vjp(g):
        return (g,)

    return Node(x.value + c, (x,), vjp, "add_scalar")


def relu(x: Node) -> Node:
    """Hinge nonlinearity; the subgradient at exactly zero is zero."""
    mask = x.value > 0.0

    def vjp(g):
        return (g * mask,)

    return Node(x.value * mask, (x,), vjp, "relu")


def row_normalize(x: Node) -> Node:
    """Scale each row to unit length; all-zero rows stay zero."""
    norms = np.linalg.norm(x.value, axis=-1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    y = x.value / safe

    def vjp(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        out = (g - y * dot) / safe
        return (np.where(norms > 0.0, out, 0.0),)

    return Node(y, (x,), vjp, "row_normalize")


def mask_rows(x: Node, mask: np.ndarray) -> Node:
    """Zero out rows where the (m,) mask is zero."""
    m = mask[:, None]

    def vjp(g):
        return (g * m,)

    return Node(x.value * m, (x,), vjp, "mask_rows")


def softmax_vec(v: Node) -> Node:
    z = v.value - v.value.max()
    e = np.exp(z)
    y = e / e.sum()

    def vjp(g):
        return (y * (g - float(g @ y)),)

    return Node(y, (v,), vjp, "softmax_vec")


def weighted_concat(parts: list[Node], weights: Node) -> Node:
    """Concatenate per-entity blocks, block k scaled by weights[k]."""
    w = weights.value
    value = np.concatenate([w[k] * p.value for k, p in enumerate(parts)], axis=1)
    cols = [p.value.shape[1] for p in parts]
    offsets = np.cumsum([0] + cols)

    def vjp(g):
        out = []
        wg = np.zeros_like(w)
        for k, p in enumerate(parts):
            blk = g[:, offsets[k]:offsets[k + 1]]
            out.append(w[k] * blk)
            wg[k] = float((blk * p.value).sum())
        return (*out, wg)

    return Node(value, (*parts, weights), vjp, "weighted_concat")


def attention_pool(guide: Node, items: Node, mask: np.ndarray) -> Node:
    """Per-row softmax pooling of (m, n, d) items steered by (m, d) guides.

    Logits are dot products of each item with its row's guide; masked
    slots are excluded. Rows with no valid items pool to zero.
    """
    g_val, u_val = guide.value, items.value
    logits = np.einsum("md,mnd->mn", g_val, u_val)
    neg = np.where(mask > 0.0, logits, -np.inf)
    row_max = neg.max(axis=1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    e = np.exp(np.where(mask > 0.0, logits - row_max, -np.inf))
    e = np.where(mask > 0.0, e, 0.0)
    denom = e.sum(axis=1, keepdims=True)
    w = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0.0)
    value = np.einsum("mn,mnd->md", w, u_val)

    def vjp(g):
        t = np.einsum("md,mnd->mn", g, u_val)
        s_bar = w * (t - (w * t).sum(axis=1, keepdims=True))
        u_bar = w[:, :, None] * g[:, None, :] + s_bar[:, :, None] * g_val[:, None, :]
        g_bar = np.einsum("mn,mnd->md", s_bar, u_val)
        return g_bar, u_bar

    return Node(value, (guide, items), vjp, "attention_pool")


def gather_rows(x: Node, idx: np.ndarray) -> Node:
    idx = np.asarray(idx, dtype=int)

    def vjp(g):
        out = np.zeros_like(x.value)
        np.add.at(out, idx, g)
        return (out,)

    return Node(x.value[idx], (x,), vjp, "gather_rows")


def rowdot(a: Node, b: Node) -> Node:
    """Per-row dot product of two equally shaped matrices -> (m,) vector."""
    value = (a.value * b.value).sum(axis=1)

    def vjp(g):
        return g[:, None] * b.value, g[:, None] * a.value

    return Node(value, (a, b), vjp, "rowdot")


def gather_vec(x: Node, idx: np.ndarray) -> Node:
    idx = np.asarray(idx, dtype=int)

    def vjp(g):
        out = np.zeros_like(x.value)
        np.add.at(out, idx, g)
        return (out,)

    return Node(x.value[idx], (x,), vjp, "gather_vec")


def reduce_sum(x: Node) -> Node:
    def vjp(g):
        return (np.full_like(np.asarray(x.value, dtype=float), float(g)),)

    return Node(float(np.sum(x.value)), (x,), vjp, "reduce_sum")
