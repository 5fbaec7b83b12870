"""Dense f64 tensors on a reverse-mode autodiff tape.

A :class:`Tensor` wraps a row-major float64 numpy array.  Operations (see
``ops``) record :class:`TapeEntry` items onto the currently active
:class:`Tape`; entries are appended in execution order, which is already a
topological order of the computation graph.  :func:`backward` walks the tape
in reverse, visiting each entry exactly once, and accumulates gradients into
the ``grad`` buffers of leaf tensors (tensors not produced by a recorded op,
which includes all :class:`Parameter` instances).

Gradients accumulate across calls; use :func:`zero_grad` between steps.
Tensors are immutable after creation except for their grad buffers, and a
tape is single-writer: independent model instances may run on separate
threads (the active-tape stack is thread-local), but a single tape must not
be shared.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError

_ids = itertools.count()
_tls = threading.local()


class Tensor:
    """Dense float64 array, optionally carrying a gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "tid", "_produced_by")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.tid = next(_ids)
        self._produced_by: Optional["TapeEntry"] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self._produced_by is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Trainable tensor with a unique dotted-path name within a model."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.shape})"


@dataclass
class TapeEntry:
    """One recorded forward op: inputs precede the entry on the tape."""

    op: str
    inputs: tuple  # Tensor refs
    output: Tensor
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
    tape: "Tape"

    @property
    def input_ids(self) -> tuple:
        return tuple(t.tid for t in self.inputs)

    @property
    def output_id(self) -> int:
        return self.output.tid


class Tape:
    """Ordered record of forward operations; a context manager that
    activates itself for recording while entered."""

    def __init__(self):
        self.entries: list[TapeEntry] = []

    def _record(self, op: str, inputs: tuple, output: Tensor, backward_fn) -> None:
        entry = TapeEntry(op, inputs, output, backward_fn, self)
        output._produced_by = entry
        self.entries.append(entry)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()


def _stack() -> list:
    if not hasattr(_tls, "stack"):
        _tls.stack = []
    return _tls.stack


def active_tape() -> Optional[Tape]:
    stack = _stack()
    return stack[-1] if stack else None


def apply_op(op: str, inputs: tuple, out_data: np.ndarray, backward_fn) -> Tensor:
    """Create the output tensor for a forward op, recording it when a tape
    is active and any input requires grad."""
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=track)
    if track:
        tape._record(op, inputs, out, backward_fn)
    return out


def backward(loss: Tensor, tape: Optional[Tape] = None) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's grad buffer.

    The walk is a single reverse pass over the tape, so each entry is
    visited exactly once and the result is bit-deterministic.  Repeated
    calls without zeroing accumulate.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    if tape is None:
        entry = loss._produced_by
        tape = None if entry is None else entry.tape
    if tape is None:
        if loss.requires_grad:
            _accumulate_leaf(loss, np.ones_like(loss.data))
        return

    grads: dict[int, np.ndarray] = {loss.tid: np.ones_like(loss.data)}
    if loss.is_leaf and loss.requires_grad:
        _accumulate_leaf(loss, grads[loss.tid])
    for entry in reversed(tape.entries):
        g = grads.pop(entry.output_id, None)
        if g is None:
            continue
        input_grads = entry.backward_fn(g)
        for t, ig in zip(entry.inputs, input_grads):
            if ig is None or not t.requires_grad:
                continue
            if t.is_leaf:
                _accumulate_leaf(t, ig)
            elif t.tid in grads:
                grads[t.tid] = grads[t.tid] + ig
            else:
                grads[t.tid] = ig


def _accumulate_leaf(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()


def clip_gradient_norm(params: Iterable[Parameter], max_norm: float) -> float:
    """Scale all grads so the global L2 norm is at most ``max_norm``.

    Returns the applied scale, min(1, max_norm / norm); 1.0 when the norm is
    zero or already within bounds.
    """
    if max_norm <= 0:
        raise ContractError(f"max_norm must be positive, got {max_norm}")
    grads = [p.grad for p in params if p.grad is not None]
    total = 0.0
    for g in grads:
        total += float(np.dot(g.reshape(-1), g.reshape(-1)))
    norm = float(np.sqrt(total))
    if norm == 0.0 or norm <= max_norm:
        return 1.0
    scale = max_norm / norm
    for g in grads:
        g *= scale
    return scale


def check_matmul_shapes(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError.mismatch(op, a.shape, b.shape)
