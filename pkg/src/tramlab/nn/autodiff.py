"""Reverse-mode differentiation over dense numpy arrays.

Only the operations a stack of affine layers needs are provided. A graph is
built eagerly by calling the op functions on :class:`Tensor` values and is
differentiated with :func:`backward`, which accumulates into ``Tensor.grad``.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Sequence

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(
        self,
        data: np.ndarray,
        parents: Sequence[Tensor] = (),
        backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
        requires_grad: bool = False,
        name: str = "",
    ) -> None:
        self.data = data
        self.grad: np.ndarray | None = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor({self.name or 'anon'}, shape={self.data.shape})"


def leaf(data: np.ndarray, name: str = "", requires_grad: bool = True) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def constant(data: np.ndarray) -> Tensor:
    return Tensor(np.asarray(data, dtype=float))


def stop_gradient(t: Tensor) -> Tensor:
    """Same value, no parents: nothing upstream receives gradient through it."""
    return Tensor(t.data, name=f"sg({t.name})" if t.name else "sg")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def back(g: np.ndarray):
        return g @ b.data.T, a.data.T @ g

    return Tensor(a.data @ b.data, (a, b), back)


def add_bias(a: Tensor, bias: Tensor) -> Tensor:
    def back(g: np.ndarray):
        return g, g.sum(axis=0)

    return Tensor(a.data + bias.data, (a, bias), back)


def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    return add_bias(matmul(x, W), b)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"add needs equal shapes, got {a.data.shape} and {b.data.shape}")
    return Tensor(a.data + b.data, (a, b), lambda g: (g, g))


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor(c * a.data, (a,), lambda g: (c * g,))


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the feature axis."""
    widths = [p.data.shape[1] for p in parts]
    cuts = np.cumsum(widths)[:-1]

    def back(g: np.ndarray):
        return tuple(np.split(g, cuts, axis=1))

    return Tensor(np.concatenate([p.data for p in parts], axis=1), parts, back)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return Tensor(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a: Tensor) -> Tensor:
    z = a.data
    out = np.logaddexp(0.0, z)
    return Tensor(out, (a,), lambda g: (g * _sigmoid(z),))


def identity(a: Tensor) -> Tensor:
    return a


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "tanh": tanh,
    "relu": relu,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "identity": identity,
}


def _topological(roots: Iterable[Tensor]) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    for root in roots:
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, done = stack.pop()
            if done:
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


def backward(seeds: Sequence[tuple[Tensor, np.ndarray]]) -> None:
    """Propagate the given output gradients to every reachable leaf.

    Leaves accumulate into ``grad``; intermediate gradients are discarded.
    """
    roots = [t for t, _ in seeds if t.requires_grad]
    grads: dict[int, np.ndarray] = {}
    for t, g in seeds:
        if not t.requires_grad:
            continue
        g = np.asarray(g, dtype=float)
        if g.shape != t.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match output {t.data.shape}")
        grads[id(t)] = grads[id(t)] + g if id(t) in grads else g
    for node in reversed(_topological(roots)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
