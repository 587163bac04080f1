"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Graph` is a define-by-run tape: every operation appends a node whose
inputs are earlier node ids, so the node list is topologically ordered by
construction. Calling :meth:`Graph.backward` on a scalar node sweeps the tape
once in reverse and returns gradients for every ``requires_grad`` leaf. A graph
is single-use: it is rebuilt for each loss evaluation and consumed by backward.

All values are float64. Masked softmax entries carry a -1e30 sentinel instead
of literal -inf so that NaNs never propagate. There is no broadcasting: shapes
must match exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

# Sentinel for excluded softmax entries; large enough to underflow to exp(.)=0,
# small enough that arithmetic on it stays finite.
MASK_SENTINEL = -1e30


def _as_matrix(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"expected a 1-D or 2-D array, got ndim={arr.ndim}")
    return np.ascontiguousarray(arr)


@dataclass
class Node:
    """One tape entry: an operation, its input node ids, and the cached output."""

    op: str
    inputs: tuple[int, ...]
    value: np.ndarray
    requires_grad: bool
    aux: Any = None


class Graph:
    """Single-owner, single-use computation tape."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self._consumed = False

    # -- bookkeeping ---------------------------------------------------------

    def value(self, nid: int) -> np.ndarray:
        return self.nodes[nid].value

    def _append(self, node: Node) -> int:
        if self._consumed:
            raise RuntimeError("graph already consumed by backward(); build a new one")
        self.nodes.append(node)
        return len(self.nodes) - 1

    def _requires(self, *nids: int) -> bool:
        return any(self.nodes[n].requires_grad for n in nids)

    # -- primitives ----------------------------------------------------------

    def leaf(self, values, requires_grad: bool = False) -> int:
        """Insert a constant or trainable input array."""
        arr = _as_matrix(values)
        if not np.all(np.isfinite(arr)):
            raise ValueError("leaf values must be finite")
        return self._append(Node("leaf", (), arr, requires_grad))

    def matmul(self, a: int, b: int) -> int:
        """Matrix product (m,n) @ (n,p) -> (m,p)."""
        va, vb = self.value(a), self.value(b)
        if va.shape[1] != vb.shape[0]:
            raise ValueError(f"matmul shape mismatch: {va.shape} @ {vb.shape}")
        return self._append(Node("matmul", (a, b), va @ vb, self._requires(a, b)))

    def row_mean(self, a: int) -> int:
        """Column-wise mean over rows: (m,n) -> (1,n)."""
        va = self.value(a)
        if va.shape[0] < 1 or va.size == 0:
            raise ValueError("row_mean requires at least one row and one column")
        out = va.mean(axis=0, keepdims=True)
        return self._append(Node("row_mean", (a,), out, self._requires(a)))

    def gather_rows(self, table: int, ids) -> int:
        """Select rows of ``table`` by index; repeated ids accumulate in backward."""
        vt = self.value(table)
        idx = np.asarray(ids, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("ids must be a non-empty 1-D integer list")
        if idx.min() < 0 or idx.max() >= vt.shape[0]:
            raise ValueError(f"gather id out of range [0, {vt.shape[0]})")
        return self._append(Node("gather_rows", (table,), vt[idx], self._requires(table), aux=idx))

    def unit_normalize(self, v: int) -> int:
        """Scale a (1,d) vector to unit Euclidean norm."""
        vv = self.value(v)
        if vv.shape[0] != 1:
            raise ValueError("unit_normalize expects a (1,d) row vector")
        norm = float(np.linalg.norm(vv))
        if norm <= 1e-12:
            raise ValueError("cannot normalize a (near-)zero vector")
        return self._append(Node("unit_normalize", (v,), vv / norm, self._requires(v), aux=norm))

    def dot(self, a: int, b: int) -> int:
        """Inner product of two (1,d) vectors -> (1,1)."""
        va, vb = self.value(a), self.value(b)
        if va.shape != vb.shape or va.shape[0] != 1:
            raise ValueError(f"dot expects matching (1,d) vectors, got {va.shape} and {vb.shape}")
        out = np.array([[float(va[0] @ vb[0])]])
        return self._append(Node("dot", (a, b), out, self._requires(a, b)))

    def masked_log_softmax(self, scores: int, mask, temperature: float) -> int:
        """Log-softmax of scores/temperature over entries where ``mask`` is False.

        ``mask[i] = True`` excludes entry i: its output is a -1e30-scale
        sentinel, it receives zero gradient, and it contributes nothing to the
        normalizer.
        """
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        vs = self.value(scores)
        if vs.shape[0] != 1:
            raise ValueError("masked_log_softmax expects a (1,n) row vector")
        excluded = np.asarray(mask, dtype=bool).reshape(-1)
        if excluded.shape[0] != vs.shape[1]:
            raise ValueError("mask length must match the number of scores")
        if excluded.all():
            raise ValueError("at least one entry must be unmasked")
        z = np.where(excluded, MASK_SENTINEL, vs[0] / temperature)
        m = z.max()
        w = np.exp(z - m)  # excluded entries underflow to exactly 0
        out = (z - (m + np.log(w.sum()))).reshape(1, -1)
        probs = np.where(excluded, 0.0, np.exp(out[0]))
        return self._append(
            Node(
                "masked_log_softmax",
                (scores,),
                out,
                self._requires(scores),
                aux=(excluded, probs, temperature),
            )
        )

    # -- scalar / elementwise plumbing ----------------------------------------

    def add(self, a: int, b: int) -> int:
        va, vb = self.value(a), self.value(b)
        if va.shape != vb.shape:
            raise ValueError(f"add shape mismatch: {va.shape} vs {vb.shape}")
        return self._append(Node("add", (a, b), va + vb, self._requires(a, b)))

    def scale(self, a: int, c: float) -> int:
        return self._append(Node("scale", (a,), self.value(a) * c, self._requires(a), aux=float(c)))

    def shift(self, a: int, c: float) -> int:
        return self._append(Node("shift", (a,), self.value(a) + c, self._requires(a)))

    def exp(self, a: int) -> int:
        out = np.exp(self.value(a))
        if not np.all(np.isfinite(out)):
            raise ValueError("exp overflowed to non-finite values")
        return self._append(Node("exp", (a,), out, self._requires(a)))

    def clip(self, a: int, lo: float, hi: float) -> int:
        """Clamp to [lo, hi]; zero gradient outside the open interval."""
        if not lo < hi:
            raise ValueError("clip requires lo < hi")
        va = self.value(a)
        out = np.clip(va, lo, hi)
        inside = (va > lo) & (va < hi)
        return self._append(Node("clip", (a,), out, self._requires(a), aux=inside))

    def minimum(self, a: int, b: int) -> int:
        """Elementwise minimum; ties route the gradient to the first input."""
        va, vb = self.value(a), self.value(b)
        if va.shape != vb.shape:
            raise ValueError(f"minimum shape mismatch: {va.shape} vs {vb.shape}")
        take_a = va <= vb
        return self._append(
            Node("minimum", (a, b), np.where(take_a, va, vb), self._requires(a, b), aux=take_a)
        )

    def select(self, a: int, col: int) -> int:
        """Pick one entry of a (1,n) vector as a (1,1) scalar."""
        va = self.value(a)
        if va.shape[0] != 1:
            raise ValueError("select expects a (1,n) row vector")
        if not 0 <= col < va.shape[1]:
            raise ValueError(f"column {col} out of range [0, {va.shape[1]})")
        out = va[:, col : col + 1].copy()
        return self._append(Node("select", (a,), out, self._requires(a), aux=col))

    def weighted_sum(self, terms: list[tuple[int, float]]) -> int:
        """Scalar linear combination sum_i w_i * x_i of (1,1) nodes."""
        if not terms:
            raise ValueError("weighted_sum needs at least one term")
        total = 0.0
        for nid, w in terms:
            v = self.value(nid)
            if v.shape != (1, 1):
                raise ValueError("weighted_sum terms must be (1,1) scalars")
            total += w * float(v[0, 0])
        req = self._requires(*[nid for nid, _ in terms])
        ids = tuple(nid for nid, _ in terms)
        ws = np.array([w for _, w in terms], dtype=np.float64)
        return self._append(Node("weighted_sum", ids, np.array([[total]]), req, aux=ws))

    # -- reverse sweep ---------------------------------------------------------

    def backward(self, loss: int) -> dict[int, np.ndarray]:
        """Reverse-topological gradient sweep from a scalar loss node.

        Returns a map from requires_grad leaf id to its gradient array. Leaves
        not reached by the sweep get zero gradients. The graph is consumed.
        """
        if self._consumed:
            raise RuntimeError("backward() already called on this graph")
        if self.value(loss).shape != (1, 1):
            raise ValueError("loss must be a scalar (1,1) node")
        self._consumed = True

        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[loss] = np.ones((1, 1))
        for nid in range(loss, -1, -1):
            node = self.nodes[nid]
            g = grads[nid]
            if g is None or not node.requires_grad:
                continue
            self._propagate(node, g, grads)

        out: dict[int, np.ndarray] = {}
        for nid, node in enumerate(self.nodes):
            if node.op == "leaf" and node.requires_grad:
                out[nid] = grads[nid] if grads[nid] is not None else np.zeros_like(node.value)
        return out

    def _propagate(self, node: Node, g: np.ndarray, grads: list[np.ndarray | None]) -> None:
        def acc(nid: int, contribution: np.ndarray) -> None:
            if not self.nodes[nid].requires_grad:
                return
            if grads[nid] is None:
                grads[nid] = np.zeros_like(self.nodes[nid].value)
            grads[nid] += contribution

        op = node.op
        if op == "leaf":
            return
        if op == "matmul":
            a, b = node.inputs
            acc(a, g @ self.value(b).T)
            acc(b, self.value(a).T @ g)
        elif op == "row_mean":
            (a,) = node.inputs
            m = self.value(a).shape[0]
            acc(a, np.repeat(g / m, m, axis=0))
        elif op == "gather_rows":
            (a,) = node.inputs
            gt = np.zeros_like(self.value(a))
            np.add.at(gt, node.aux, g)
            acc(a, gt)
        elif op == "unit_normalize":
            (a,) = node.inputs
            norm = node.aux
            y = node.value
            acc(a, (g - y * float(g[0] @ y[0])) / norm)
        elif op == "dot":
            a, b = node.inputs
            s = float(g[0, 0])
            acc(a, s * self.value(b))
            acc(b, s * self.value(a))
        elif op == "masked_log_softmax":
            (a,) = node.inputs
            excluded, probs, tau = node.aux
            g_eff = np.where(excluded, 0.0, g[0])
            grad = (g_eff - probs * g_eff.sum()) / tau
            grad[excluded] = 0.0
            acc(a, grad.reshape(1, -1))
        elif op == "add":
            a, b = node.inputs
            acc(a, g)
            acc(b, g)
        elif op == "scale":
            (a,) = node.inputs
            acc(a, g * node.aux)
        elif op == "shift":
            (a,) = node.inputs
            acc(a, g)
        elif op == "exp":
            (a,) = node.inputs
            acc(a, g * node.value)
        elif op == "clip":
            (a,) = node.inputs
            acc(a, g * node.aux)
        elif op == "minimum":
            a, b = node.inputs
            acc(a, g * node.aux)
            acc(b, g * ~node.aux)
        elif op == "select":
            (a,) = node.inputs
            ga = np.zeros_like(self.value(a))
            ga[0, node.aux] = g[0, 0]
            acc(a, ga)
        elif op == "weighted_sum":
            for nid, w in zip(node.inputs, node.aux):
                acc(nid, g * w)
        else:  # pragma: no cover - exhaustive over op constructors
            raise RuntimeError(f"unknown op {op!r}")


def finite_diff_check(f: Callable[[Graph, int], int], x, h: float) -> float:
    """Compare the reverse-mode gradient of ``f`` at ``x`` to central differences.

    ``f(graph, input_node_id)`` must build and return a scalar node. Returns
    max_i |g_ad_i - g_fd_i| / max(1, |g_fd_i|).
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    x = _as_matrix(x)

    g = Graph()
    xid = g.leaf(x, requires_grad=True)
    out = f(g, xid)
    g_ad = g.backward(out)[xid]

    def eval_at(xp: np.ndarray) -> float:
        gg = Graph()
        nid = f(gg, gg.leaf(xp))
        v = gg.value(nid)
        if v.shape != (1, 1):
            raise ValueError("f must evaluate to a scalar node")
        return float(v[0, 0])

    g_fd = np.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += h
        xm[i] -= h
        g_fd.reshape(-1)[i] = (eval_at(xp.reshape(x.shape)) - eval_at(xm.reshape(x.shape))) / (2 * h)

    rel = np.abs(g_ad - g_fd) / np.maximum(1.0, np.abs(g_fd))
    return float(rel.max())
