"""Reverse-mode autodiff core: Tensor values, the gradient tape, and parameter storage.

The engine is define-by-run: every differentiable op records a node on the
thread-local active tape (if one is open and an input wants gradients), and
``Tape.backward`` replays the recorded nodes in reverse. Creation order is a
valid topological order, so no sorting is needed. With no tape open, ops run
as plain array math - that is the inference fast path.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

REAL_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


class Tensor:
    """A dense N-d real array with an optional gradient slot.

    Feature maps use N x C x H x W layout. ``grad`` is populated by
    ``Tape.backward`` for tensors with ``requires_grad=True`` and accumulates
    across backward calls until ``zero_grad``.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in REAL_DTYPES:
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


class TapeNode:
    """One recorded op: its inputs, its output, and the rule mapping the
    output gradient to per-input gradients (None for inputs that need none)."""

    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs: Sequence[Tensor], output: Tensor,
                 backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        self.inputs = tuple(inputs)
        self.output = output
        self.backward_fn = backward_fn


_tls = threading.local()


def active_tape() -> Optional["Tape"]:
    return getattr(_tls, "tape", None)


class Tape:
    """Ordered record of one forward pass, confined to a single thread.

    Use as a context manager around the forward computation, then call
    ``backward(loss)``. Nodes are appended in creation order, which is
    topological by construction; backward walks them exactly once in reverse.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def __enter__(self) -> "Tape":
        if active_tape() is not None:
            raise RuntimeError("a Tape is already active on this thread")
        _tls.tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _tls.tape = None

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every requires_grad leaf reachable from ``loss``.

        ``loss`` must be scalar. Repeated calls accumulate into leaf grads.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
        # id -> [tensor, pending gradient, owned]; holding the tensor ref keeps
        # ids stable. Gradients returned by backward rules may be views into
        # other buffers, so a slot's buffer is only mutated once we own it.
        pending: dict[int, list] = {id(loss): [loss, np.ones_like(loss.data), True]}
        produced = {id(node.output) for node in self.nodes}
        for node in reversed(self.nodes):
            entry = pending.pop(id(node.output), None)
            if entry is None:
                continue
            grads = node.backward_fn(entry[1])
            for t, g in zip(node.inputs, grads):
                if g is None:
                    continue
                slot = pending.get(id(t))
                if slot is None:
                    pending[id(t)] = [t, g, False]
                elif slot[2]:
                    slot[1] += g
                else:
                    slot[1] = slot[1] + g
                    slot[2] = True
        for t, g, _ in pending.values():
            if t.requires_grad and id(t) not in produced:
                t.grad = g.copy() if t.grad is None else t.grad + g


def record(output: Tensor, inputs: Sequence[Tensor],
           backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    """Attach ``output`` to the active tape if any input tracks gradients."""
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        tape.nodes.append(TapeNode(inputs, output, backward_fn))
    return output


def backward(loss: Tensor) -> None:
    """Run backward on the currently active tape (convenience wrapper)."""
    tape = active_tape()
    if tape is None:
        raise RuntimeError("backward() needs an active Tape")
    tape.backward(loss)


class ParamStore:
    """Named map of trainable tensors with deterministic (lexicographic) iteration."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name!r}")
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in sorted(self._params):
            yield name, self._params[name]

    def tensors(self) -> Iterator[Tensor]:
        for name in sorted(self._params):
            yield self._params[name]

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def total_size(self) -> int:
        return sum(t.size for t in self._params.values())
