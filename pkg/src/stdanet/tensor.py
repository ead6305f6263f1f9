"""
Dense tensors with reverse-mode differentiation.

Every primitive builds its output through :meth:`Tensor._from_op`, which rejects non-finite
results and, when gradients are enabled, stores the parents and a closure mapping the output
gradient to one gradient per parent. :class:`GradTape` orders those records topologically and
replays them backward, adding into the ``grad`` of the leaves.
"""

import contextlib
import logging
import threading
from typing import Callable, Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from stdanet.config import MESSAGES
from stdanet.exceptions import GradTapeError, NonFiniteError, ShapeMismatchError

logger = logging.getLogger(__name__)

_state = threading.local()

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Operand = Union["Tensor", np.ndarray, float, int]


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disables graph recording in the current thread (inference with shared parameters)."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    # Makes ``ndarray <op> Tensor`` dispatch to the Tensor's reflected operators.
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple["Tensor", ...] = ()
        self._backward_fn: Optional[BackwardFn] = None
        self._op = "leaf"

    @classmethod
    def _from_op(
        cls, data: np.ndarray, parents: Sequence["Tensor"], backward_fn: BackwardFn, op: str
    ) -> "Tensor":
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(MESSAGES["non_finite"].format(op=op))
        out = cls(data)
        out._op = op
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward_fn is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, leaves: Optional[Iterable["Tensor"]] = None) -> "GradTape":
        return backward(self, leaves)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # elementwise arithmetic

    def _coerce(self, other: Operand) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other: Operand) -> "Tensor":
        other = self._coerce(other)
        a, b = self, other
        return Tensor._from_op(
            a.data + b.data,
            (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
            "add",
        )

    __radd__ = __add__

    def __sub__(self, other: Operand) -> "Tensor":
        other = self._coerce(other)
        a, b = self, other
        return Tensor._from_op(
            a.data - b.data,
            (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
            "sub",
        )

    def __rsub__(self, other: Operand) -> "Tensor":
        return self._coerce(other) - self

    def __mul__(self, other: Operand) -> "Tensor":
        other = self._coerce(other)
        a, b = self, other
        return Tensor._from_op(
            a.data * b.data,
            (a, b),
            lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
            "mul",
        )

    __rmul__ = __mul__

    def __truediv__(self, other: Operand) -> "Tensor":
        other = self._coerce(other)
        a, b = self, other
        return Tensor._from_op(
            a.data / b.data,
            (a, b),
            lambda g: (
                _unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
            ),
            "div",
        )

    def __rtruediv__(self, other: Operand) -> "Tensor":
        return self._coerce(other) / self

    def __neg__(self) -> "Tensor":
        return Tensor._from_op(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, exponent: float) -> "Tensor":
        a = self
        return Tensor._from_op(
            a.data**exponent,
            (a,),
            lambda g: (g * exponent * a.data ** (exponent - 1),),
            "pow",
        )

    def __matmul__(self, other: "Tensor") -> "Tensor":
        other = self._coerce(other)
        a, b = self, other
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeMismatchError(
                MESSAGES["shape_mismatch"].format(op="matmul", detail=f"{a.shape} @ {b.shape}")
            )
        return Tensor._from_op(
            a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul"
        )

    # reductions and views

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self
        axes = _normalize_axes(axis, a.ndim)

        def grad_fn(g):
            if not keepdims:
                g = np.expand_dims(g, axes)
            return (np.broadcast_to(g, a.shape),)

        return Tensor._from_op(a.data.sum(axis=axes, keepdims=keepdims), (a,), grad_fn, "sum")

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        axes = _normalize_axes(axis, self.ndim)
        count = int(np.prod([self.shape[i] for i in axes])) if axes else 1
        return self.sum(axis=axes, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        return Tensor._from_op(
            a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape"
        )

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return Tensor._from_op(
            self.data.transpose(axes), (self,), lambda g: (g.transpose(inverse),), "transpose"
        )

    def __getitem__(self, index) -> "Tensor":
        a = self

        def grad_fn(g):
            full = np.zeros_like(a.data)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._from_op(np.array(a.data[index]), (a,), grad_fn, "getitem")


def as_tensor(value: Operand, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    axis = axis % tensors[0].ndim
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op="concat", detail=str(exc))
        ) from None
    return Tensor._from_op(data, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)), "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op="stack", detail=f"shapes {sorted(shapes)}")
        )
    data = np.stack([t.data for t in tensors], axis=axis)
    axis = axis % data.ndim
    return Tensor._from_op(
        data,
        tensors,
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(tensors))),
        "stack",
    )


def _normalize_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sums ``grad`` down to ``shape``, undoing NumPy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, size in enumerate(shape):
        if size == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class GradTape:
    """
    Ordered record of the executed primitives that a value depends on.

    ``nodes`` is a topological order (inputs before outputs); :meth:`replay` walks it in
    reverse, so each node is visited only after every consumer has contributed its gradient.
    """

    def __init__(self, root: Tensor, nodes: list[Tensor]):
        self.root = root
        self.nodes = nodes

    @classmethod
    def record(cls, root: Tensor) -> "GradTape":
        order: list[Tensor] = []
        visited: set[int] = set()
        pending: list[tuple[Tensor, bool]] = [(root, False)]
        while pending:
            node, expanded = pending.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            pending.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    pending.append((parent, False))
        return cls(root, order)

    def __len__(self) -> int:
        return len(self.nodes)

    def leaves(self) -> list[Tensor]:
        return [node for node in self.nodes if node.is_leaf]

    def replay(self, seed: np.ndarray) -> None:
        grads: dict[int, np.ndarray] = {id(self.root): seed}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = np.array(g, dtype=node.dtype) if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg


def backward(loss: Tensor, leaves: Optional[Iterable[Tensor]] = None) -> GradTape:
    """
    Populates ``grad`` on every leaf the scalar ``loss`` depends on.

    Gradients are added to whatever the leaves already hold, so two calls without a reset
    double them. Leaves listed in ``leaves`` that the loss does not reach get a zero gradient.

    :param loss: Scalar tensor.
    :type loss: Tensor
    :param leaves: Optional leaves that must end up with a gradient array.
    :type leaves: Optional[Iterable[Tensor]]
    :raises GradTapeError: If ``loss`` is not a scalar.
    :return: The replayed tape.
    :rtype: GradTape
    """
    if loss.size != 1:
        raise GradTapeError(MESSAGES["not_scalar"].format(shape=loss.shape))
    tape = GradTape.record(loss)
    if loss.requires_grad:
        tape.replay(np.ones_like(loss.data))
    else:
        logger.debug("backward() on a loss that does not depend on any parameter")
    for leaf in leaves or ():
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
    return tape
