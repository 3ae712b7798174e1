"""Dense 2-D float64 tensors with an opt-in reverse-mode tape.

Every op is a plain function. If none of its operands is tracked by a
:class:`Tape` the op only computes; otherwise it appends a node holding a
backward rule. ``grad`` then walks the tape once, newest node first.

Ops that do arithmetic accept ``meter=``: any object with an ``add(int)``
method. Counting conventions: matmul ``m x n x k`` -> ``m*n*k``, scaling
one per element, softmax two per finite element.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from gsitlab.errors import ContractError, DegenerateRowError, ShapeError

__all__ = [
    "Tensor2",
    "Tape",
    "grad",
    "matmul",
    "bmm",
    "bmm_nt",
    "add",
    "scale",
    "transpose",
    "softmax_rows",
    "relu",
    "concat_cols",
    "concat_rows",
    "slice_cols",
    "take_rows",
    "sum_all",
    "mse",
]


class Tensor2:
    """Immutable row-major matrix of 64-bit reals."""

    __slots__ = ("data", "_tape", "__weakref__")

    def __init__(self, data, *, _tape: "Tape | None" = None, _copy: bool = True):
        arr = np.array(data, dtype=np.float64, copy=True) if _copy else data
        if arr.ndim != 2:
            raise ShapeError(f"Tensor2 needs a 2-D array, got ndim={arr.ndim}")
        arr.flags.writeable = False
        self.data = arr
        self._tape = _tape

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Tensor2":
        return cls(np.zeros((rows, cols)))

    @classmethod
    def eye(cls, n: int) -> "Tensor2":
        return cls(np.eye(n))

    @classmethod
    def _wrap(cls, arr: np.ndarray, tape: "Tape | None" = None) -> "Tensor2":
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        return cls(arr, _tape=tape, _copy=False)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def tracked(self) -> bool:
        return self._tape is not None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        flag = ", tracked" if self.tracked else ""
        return f"Tensor2({self.rows}x{self.cols}{flag})"


class _Node:
    __slots__ = ("op", "out", "inputs", "backward")

    def __init__(self, op, out, inputs, backward):
        self.op = op
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Single-writer record of primitive ops, in execution order."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.leaves: list[Tensor2] = []

    def watch(self, t: Tensor2) -> Tensor2:
        """Return a tracked leaf sharing ``t``'s values."""
        leaf = Tensor2._wrap(t.data, self)
        self.leaves.append(leaf)
        return leaf

    def __len__(self) -> int:
        return len(self.nodes)


def _tape_of(inputs: Sequence[Tensor2]) -> Tape | None:
    tape = None
    for t in inputs:
        if t._tape is not None:
            if tape is not None and t._tape is not tape:
                raise ContractError("operands are tracked by different tapes")
            tape = t._tape
    return tape


def _emit(op: str, out: np.ndarray, inputs: Sequence[Tensor2], backward: Callable) -> Tensor2:
    tape = _tape_of(inputs)
    result = Tensor2._wrap(out, tape)
    if tape is not None:
        tape.nodes.append(_Node(op, result, tuple(inputs), backward))
    return result


def grad(tape: Tape, loss: Tensor2, wrt: Iterable[Tensor2] | None = None) -> dict[Tensor2, np.ndarray]:
    """Gradients of a 1x1 ``loss`` with respect to the tape's leaves.

    Returns a mapping leaf -> gradient array; leaves the loss does not
    depend on get zeros.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"loss must be 1x1, got {loss.shape}")
    if loss._tape is not tape:
        raise ContractError("loss was not recorded on this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(tape.nodes):
        g_out = grads.pop(id(node.out), None)
        if g_out is None:
            continue
        for inp, g_in in zip(node.inputs, node.backward(g_out)):
            if g_in is None or inp._tape is None:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + g_in
            else:
                grads[key] = g_in
    targets = tape.leaves if wrt is None else list(wrt)
    return {leaf: grads.get(id(leaf), np.zeros(leaf.shape)) for leaf in targets}


# ---------------------------------------------------------------- primitives


def matmul(a: Tensor2, b: Tensor2, meter=None) -> Tensor2:
    if a.cols != b.rows:
        raise ShapeError(f"matmul {a.shape} x {b.shape}")
    out = a.data @ b.data
    if meter is not None:
        meter.add(a.rows * a.cols * b.cols)
    ad, bd = a.data, b.data
    return _emit("matmul", out, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def _groups_of(x: Tensor2, groups: int) -> np.ndarray:
    if groups < 1 or x.rows % groups:
        raise ShapeError(f"{x.rows} rows do not split into {groups} groups")
    return x.data.reshape(groups, x.rows // groups, x.cols)


def bmm(a: Tensor2, b: Tensor2, groups: int, meter=None) -> Tensor2:
    """Grouped product: row group ``g`` of ``a`` times row group ``g`` of ``b``.

    ``a`` is ``(G*m) x k``, ``b`` is ``(G*k) x n``; the result is ``(G*m) x n``.
    """
    a3, b3 = _groups_of(a, groups), _groups_of(b, groups)
    if a3.shape[2] != b3.shape[1]:
        raise ShapeError(f"bmm group shapes {a3.shape[1:]} x {b3.shape[1:]}")
    out = np.matmul(a3, b3)
    if meter is not None:
        meter.add(groups * a3.shape[1] * a3.shape[2] * b3.shape[2])

    def backward(g):
        g3 = g.reshape(out.shape)
        da = np.matmul(g3, b3.transpose(0, 2, 1)).reshape(a.shape)
        db = np.matmul(a3.transpose(0, 2, 1), g3).reshape(b.shape)
        return da, db

    return _emit("bmm", out.reshape(-1, out.shape[2]), (a, b), backward)


def bmm_nt(a: Tensor2, b: Tensor2, groups: int, meter=None) -> Tensor2:
    """Grouped ``a_g b_g^T``: ``(G*m) x h`` with ``(G*n) x h`` -> ``(G*m) x n``."""
    a3, b3 = _groups_of(a, groups), _groups_of(b, groups)
    if a3.shape[2] != b3.shape[2]:
        raise ShapeError(f"bmm_nt widths {a3.shape[2]} vs {b3.shape[2]}")
    out = np.matmul(a3, b3.transpose(0, 2, 1))
    if meter is not None:
        meter.add(groups * a3.shape[1] * a3.shape[2] * b3.shape[1])

    def backward(g):
        g3 = g.reshape(out.shape)
        da = np.matmul(g3, b3).reshape(a.shape)
        db = np.matmul(g3.transpose(0, 2, 1), a3).reshape(b.shape)
        return da, db

    return _emit("bmm_nt", out.reshape(-1, out.shape[2]), (a, b), backward)


def add(a: Tensor2, b: Tensor2) -> Tensor2:
    if a.shape != b.shape:
        raise ShapeError(f"add {a.shape} + {b.shape}")
    return _emit("add", a.data + b.data, (a, b), lambda g: (g, g))


def scale(x: Tensor2, c: float, meter=None) -> Tensor2:
    if meter is not None:
        meter.add(x.rows * x.cols)
    return _emit("scale", x.data * c, (x,), lambda g: (g * c,))


def transpose(x: Tensor2) -> Tensor2:
    return _emit("transpose", x.data.T, (x,), lambda g: (g.T,))


def softmax_rows(x: Tensor2, mask: Tensor2 | None = None, meter=None) -> Tensor2:
    """Row-wise softmax of ``x + mask``; ``mask`` holds 0 / -inf only."""
    z = x.data
    if mask is not None:
        if mask.shape != x.shape:
            raise ShapeError(f"mask {mask.shape} does not match logits {x.shape}")
        z = z + mask.data
    finite = np.isfinite(z)
    per_row = finite.sum(axis=1)
    empty = np.flatnonzero(per_row == 0)
    if empty.size:
        raise DegenerateRowError(int(empty[0]), "softmax_rows")
    row_max = np.where(finite, z, -np.inf).max(axis=1, keepdims=True)
    e = np.where(finite, np.exp(np.where(finite, z - row_max, 0.0)), 0.0)
    y = e / e.sum(axis=1, keepdims=True)
    if meter is not None:
        meter.add(2 * int(per_row.sum()))

    def backward(g):
        return ((g - (g * y).sum(axis=1, keepdims=True)) * y,)

    return _emit("softmax_rows", y, (x,), backward)


def relu(x: Tensor2) -> Tensor2:
    on = x.data > 0
    return _emit("relu", np.where(on, x.data, 0.0), (x,), lambda g: (g * on,))


def concat_cols(parts: Sequence[Tensor2]) -> Tensor2:
    """Feature-axis concatenation."""
    rows = {p.rows for p in parts}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols row counts differ: {sorted(rows)}")
    edges = np.cumsum([0] + [p.cols for p in parts])
    out = np.concatenate([p.data for p in parts], axis=1)

    def backward(g):
        return tuple(g[:, edges[k]:edges[k + 1]] for k in range(len(parts)))

    return _emit("concat_cols", out, tuple(parts), backward)


def concat_rows(parts: Sequence[Tensor2]) -> Tensor2:
    cols = {p.cols for p in parts}
    if len(cols) != 1:
        raise ShapeError(f"concat_rows column counts differ: {sorted(cols)}")
    edges = np.cumsum([0] + [p.rows for p in parts])
    out = np.concatenate([p.data for p in parts], axis=0)

    def backward(g):
        return tuple(g[edges[k]:edges[k + 1]] for k in range(len(parts)))

    return _emit("concat_rows", out, tuple(parts), backward)


def slice_cols(x: Tensor2, start: int, stop: int) -> Tensor2:
    if not 0 <= start < stop <= x.cols:
        raise ShapeError(f"column slice [{start}:{stop}] out of range for {x.shape}")
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        full[:, start:stop] = g
        return (full,)

    return _emit("split", x.data[:, start:stop], (x,), backward)


def take_rows(x: Tensor2, index) -> Tensor2:
    """Gather rows by integer index (a slice, list or array)."""
    if isinstance(index, slice):
        index = np.arange(x.rows)[index]
    idx = np.asarray(index, dtype=np.intp).reshape(-1)
    if idx.size == 0 or idx.min() < -x.rows or idx.max() >= x.rows:
        raise ShapeError(f"row index out of range for {x.shape}")
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _emit("take_rows", x.data[idx], (x,), backward)


def sum_all(x: Tensor2) -> Tensor2:
    shape = x.shape
    return _emit("sum", np.array([[x.data.sum()]]), (x,), lambda g: (np.full(shape, g[0, 0]),))


def mse(pred: Tensor2, target: Tensor2) -> Tensor2:
    if pred.shape != target.shape:
        raise ShapeError(f"mse {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    out = np.array([[np.mean(diff * diff)]])

    def backward(g):
        d = (2.0 / n) * g[0, 0] * diff
        return (d, -d)

    return _emit("mse", out, (pred, target), backward)
