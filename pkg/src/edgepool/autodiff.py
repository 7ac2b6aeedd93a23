"""Minimal reverse-mode tape over numpy arrays.

A ``Var`` wraps an array and remembers how it was produced: its parents
and a vector-Jacobian-product closure. Calling :func:`backward` on a
scalar (or seeded) output walks the recorded graph once in reverse
topological order and accumulates gradients into every reachable Var.
Layers register a single fused vjp each, so the per-layer backward math
stays explicit and individually checkable.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = ["Var", "backward"]


class Var:
    """Array node in the tape. Leaf Vars have no parents."""

    __slots__ = ("data", "grad", "parents", "vjp")

    def __init__(
        self,
        data,
        parents: Sequence["Var"] = (),
        vjp: Callable[[np.ndarray], tuple] | None = None,
    ):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.parents = tuple(parents)
        self.vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Var(shape={self.data.shape}, leaf={not self.parents})"


def _topo_order(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
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
    return order


def backward(root: Var, seed: np.ndarray | None = None) -> None:
    """Accumulate gradients of ``root`` into every Var it depends on.

    ``seed`` defaults to ones, i.e. the gradient of root.sum().
    """
    root.grad = (
        np.ones_like(root.data) if seed is None else np.asarray(seed, dtype=root.data.dtype)
    )
    if root.grad.shape != root.data.shape:
        raise ValueError(f"seed shape {root.grad.shape} != output shape {root.data.shape}")
    for node in reversed(_topo_order(root)):
        if node.vjp is None or node.grad is None:
            continue
        grads = node.vjp(node.grad)
        for parent, g in zip(node.parents, grads):
            if g is None:
                continue
            if parent.grad is None:
                parent.grad = np.asarray(g, dtype=parent.data.dtype)
            else:
                parent.grad = parent.grad + np.asarray(g, dtype=parent.data.dtype)
