"""Dense 2-D tensors with reverse-mode differentiation.

Every tensor is a 2-D float64 matrix; scalars are ``1x1``. There is no
broadcasting: row-vector biases are expanded explicitly with
:func:`repeat_rows`. A compute graph is recorded as operations run and is
torn down by :func:`backward`.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from hlsrank.errors import ContractError, DimensionError, InternalError, NumericalError

_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate without recording a compute graph."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A value in the compute graph.

    Leaves are created by the constructor; interior nodes by the operations
    below. ``grad`` is populated by :func:`backward`.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"tensors are 2-D, got shape {arr.shape}")
        if arr.size == 0:
            raise DimensionError(f"extents must be positive, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NumericalError("tensor data contains NaN or Inf")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._consumed = False

    @classmethod
    def _node(cls, data: np.ndarray, op: str, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.op = op
        t._consumed = False
        if _grad_enabled and any(p.requires_grad for p in parents):
            t.requires_grad = True
            t._parents = parents
            t._backward = backward_fn
        else:
            t.requires_grad = False
            t._parents = ()
            t._backward = None
        return t

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __add__(self, other: Tensor) -> Tensor:
        return add(self, other)

    def __sub__(self, other: Tensor) -> Tensor:
        return sub(self, other)

    def __mul__(self, other: Tensor) -> Tensor:
        return hadamard(self, other)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __neg__(self) -> Tensor:
        return scale(self, -1.0)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner extents of {a.shape} and {b.shape} do not match")
    ad, bd = a.data, b.data

    def bw(g):
        return (g @ bd.T if a.requires_grad else None, ad.T @ g if b.requires_grad else None)

    return Tensor._node(ad @ bd, "matmul", (a, b), bw)


def transpose(x: Tensor) -> Tensor:
    return Tensor._node(x.data.T.copy(), "transpose", (x,), lambda g: (g.T,))


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "add")
    return Tensor._node(a.data + b.data, "add", (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "sub")
    return Tensor._node(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "hadamard")
    ad, bd = a.data, b.data
    return Tensor._node(ad * bd, "hadamard", (a, b), lambda g: (g * bd, g * ad))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0  # subgradient 0 at exactly 0
    return Tensor._node(np.where(mask, x.data, 0.0), "relu", (x,), lambda g: (g * mask,))


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return Tensor._node(x.data * c, "scale", (x,), lambda g: (g * c,))


def elementwise(kind: str, a: Tensor, b: Tensor | None = None) -> Tensor:
    binary = {"add": add, "sub": sub, "hadamard": hadamard}
    if kind in binary:
        if b is None:
            raise ContractError(f"elementwise {kind} needs two operands")
        return binary[kind](a, b)
    if kind == "relu":
        if b is not None:
            raise ContractError("relu is unary")
        return relu(a)
    raise ContractError(f"unknown elementwise kind {kind!r}")


def sum_rows(x: Tensor) -> Tensor:
    m = x.shape[0]
    return Tensor._node(
        x.data.sum(axis=0, keepdims=True), "sum_rows", (x,), lambda g: (np.repeat(g, m, axis=0),)
    )


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return Tensor._node(
        np.array([[x.data.sum()]]), "sum_all", (x,), lambda g: (np.full(shape, g[0, 0]),)
    )


def mean_all(x: Tensor) -> Tensor:
    shape, n = x.shape, x.data.size
    return Tensor._node(
        np.array([[x.data.sum() / n]]), "mean_all", (x,), lambda g: (np.full(shape, g[0, 0] / n),)
    )


def reduce(kind: str, x: Tensor) -> Tensor:
    ops = {"sum_rows": sum_rows, "sum_all": sum_all, "mean_all": mean_all}
    if kind not in ops:
        raise ContractError(f"unknown reduce kind {kind!r}")
    return ops[kind](x)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def row_softmax(x: Tensor) -> Tensor:
    p = _softmax_rows(x.data)

    def bw(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return Tensor._node(p, "row_softmax", (x,), bw)


def row_log_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    p = np.exp(out)

    def bw(g):
        return (g - p * g.sum(axis=1, keepdims=True),)

    return Tensor._node(out, "row_log_softmax", (x,), bw)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    rows = parts[0].shape[0]
    for p in parts[1:]:
        if p.shape[0] != rows:
            raise DimensionError(
                f"concat_cols: row extents differ: {[q.shape for q in parts]}"
            )
    widths = np.cumsum([0] + [p.shape[1] for p in parts])

    def bw(g):
        return tuple(g[:, widths[k] : widths[k + 1]] for k in range(len(parts)))

    return Tensor._node(np.hstack([p.data for p in parts]), "concat_cols", tuple(parts), bw)


def repeat_rows(row: Tensor, m: int) -> Tensor:
    """Stack ``m`` copies of a ``1xn`` row (explicit stand-in for broadcasting)."""
    if row.shape[0] != 1:
        raise DimensionError(f"repeat_rows expects a single row, got {row.shape}")
    return Tensor._node(
        np.repeat(row.data, m, axis=0), "repeat_rows", (row,), lambda g: (g.sum(axis=0, keepdims=True),)
    )


# ---------------------------------------------------------------------------
# reverse pass


def _topological(loss: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    state: dict[int, int] = {}  # 1 = on stack, 2 = done
    stack: list[tuple[Tensor, int]] = [(loss, 0)]
    while stack:
        node, k = stack.pop()
        if k == 0:
            s = state.get(id(node))
            if s == 2:
                continue
            if s == 1:
                raise InternalError("cycle detected in compute graph")
            state[id(node)] = 1
        if k < len(node._parents):
            stack.append((node, k + 1))
            child = node._parents[k]
            if child.requires_grad:
                cs = state.get(id(child))
                if cs == 1:
                    raise InternalError("cycle detected in compute graph")
                if cs is None:
                    stack.append((child, 0))
        else:
            state[id(node)] = 2
            order.append(node)
    return order


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Populate ``grad`` on every leaf that requires it and return them.

    The graph is released afterwards; a second call on the same loss, or a
    call while a leaf still holds an un-reset gradient, raises
    :class:`ContractError`.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise ContractError("backward already ran on this graph")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor requiring grad")
    order = _topological(loss)
    leaves = [n for n in order if n._backward is None]
    for leaf in leaves:
        if leaf.grad is not None:
            raise ContractError("leaf gradient was not reset before backward")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            g = np.zeros_like(node.data)
        if node._backward is None:
            node.grad = g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
        node.grad = g
        node._backward = None
        node._parents = ()
        node._consumed = True
    loss._consumed = True
    return {leaf: leaf.grad for leaf in leaves}


def finite_diff_check(f: Callable[[Tensor], Tensor], at, eps: float = 1e-6) -> float:
    """Max over elements of ``|numeric - analytic| / max(1, |analytic|)``.

    ``numeric`` is the central difference of ``f`` at ``at`` with step ``eps``.
    """
    if not eps > 0:
        raise ContractError(f"eps must be positive, got {eps}")
    base = at.data if isinstance(at, Tensor) else np.asarray(at, dtype=np.float64)
    x = Tensor(base.copy(), requires_grad=True)
    backward(f(x))
    analytic = x.grad
    numeric = np.zeros_like(base)
    with no_grad():
        for idx in np.ndindex(*base.shape):
            plus = base.copy()
            plus[idx] += eps
            minus = base.copy()
            minus[idx] -= eps
            numeric[idx] = (f(constant(plus)).item() - f(constant(minus)).item()) / (2 * eps)
    return float(np.max(np.abs(numeric - analytic) / np.maximum(1.0, np.abs(analytic))))


# ---------------------------------------------------------------------------
# parameters


@dataclass
class Parameter:
    name: str
    tensor: Tensor
    trainable: bool = True


@dataclass
class ParameterStore:
    """Ordered collection of named parameters with unique names."""

    params: dict[str, Parameter] = field(default_factory=dict)

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self.params:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = Tensor(value, requires_grad=True)
        self.params[name] = Parameter(name, t, trainable)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name].tensor

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self.params.values())

    def __len__(self) -> int:
        return len(self.params)

    def names(self) -> list[str]:
        return list(self.params)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.tensor.grad = None

    def set_trainable(self, prefix: str, flag: bool) -> None:
        for p in self.params.values():
            if p.name.startswith(prefix):
                p.trainable = flag

    def state(self) -> dict[str, np.ndarray]:
        return {n: p.tensor.data.copy() for n, p in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            missing = set(self.params) ^ set(state)
            raise ContractError(f"parameter names do not match: {sorted(missing)}")
        for n, arr in state.items():
            cur = self.params[n].tensor
            if cur.shape != arr.shape:
                raise DimensionError(f"parameter {n}: shape {arr.shape} != {cur.shape}")
            cur.data = np.array(arr, dtype=np.float64)
