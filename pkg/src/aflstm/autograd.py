"""A small reverse-mode differentiation engine over float64 numpy arrays.

Operations executed while a :class:`Tape` is active (``with Tape() as tape``)
are recorded together with a closure that maps the output gradient to input
gradients.  ``tape.backward(loss)`` replays the record in reverse and
accumulates into :attr:`Parameter.grad`.  Outside a tape, ops run as plain
numpy and nothing is recorded, which is what inference uses.

Broadcasting is deliberately absent: binary ops accept identical shapes or a
0-d scalar operand.  Where a model needs a tensor repeated along an axis it
says so with :func:`expand`.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """An op was called outside its documented preconditions."""


class DegenerateMaskError(ValueError):
    """A softmax mask has no true position in some row."""


class DeterminismError(RuntimeError):
    """Two evaluations of the same closure disagreed."""


class Tensor:
    __slots__ = ("data", "requires_grad", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(shape={self.shape})"

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: mul(self, -1.0)
    __getitem__ = lambda self, index: getitem(self, index)


class Parameter(Tensor):
    """A trainable leaf.  ``grad`` has the value's shape and accumulates.

    ``frozen_rows`` lists leading-axis rows that never receive updates (the
    padding row of an embedding table).
    """

    __slots__ = ("grad", "name", "frozen_rows")

    def __init__(self, value, name: str = "", frozen_rows: Sequence[int] = ()):
        super().__init__(np.array(value, dtype=DTYPE), requires_grad=True)
        self.grad = np.zeros_like(self.data)
        self.name = name
        self.frozen_rows = tuple(frozen_rows)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def num_trainable(self) -> int:
        if not self.frozen_rows:
            return self.size
        row = self.size // self.shape[0]
        return self.size - row * len(self.frozen_rows)


_active: list["Tape"] = []


class Tape:
    """Ordered record of executed primitives.

    Each record is ``(output, inputs, backward_fn)`` where ``backward_fn``
    maps the output gradient to a tuple of input gradients (``None`` for
    inputs that need none).
    """

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _active.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _active.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], fn: Callable) -> None:
        self.records.append((out, inputs, fn))

    def clear(self) -> None:
        self.records.clear()

    def backward(self, loss: Tensor) -> None:
        backward(loss, self)


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(param) into every Parameter reached by ``tape``."""
    if loss.size != 1 or loss.data.ndim > 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {}

    def push(t: Tensor, g: np.ndarray) -> None:
        if isinstance(t, Parameter):
            t.grad += g
        elif id(t) in grads:
            grads[id(t)] = grads[id(t)] + g
        else:
            grads[id(t)] = g

    push(loss, np.ones_like(loss.data))
    for out, inputs, fn in reversed(tape.records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for inp, gi in zip(inputs, fn(g)):
            if gi is not None and inp.requires_grad:
                push(inp, gi)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, inputs: tuple[Tensor, ...], fn: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs and _active:
        _active[-1].record(out, inputs, fn)
    return out


def no_grad_value(t) -> np.ndarray:
    return t.data if isinstance(t, Tensor) else np.asarray(t, dtype=DTYPE)


# -- elementwise ---------------------------------------------------------------

def _binary_shapes(a: Tensor, b: Tensor, opname: str) -> None:
    if a.shape != b.shape and a.data.ndim != 0 and b.data.ndim != 0:
        raise DimensionError(f"{opname}: shapes {a.shape} and {b.shape} differ")


def _reduce_to(g: np.ndarray, t: Tensor) -> np.ndarray:
    return np.asarray(g.sum()) if t.data.ndim == 0 and g.ndim else g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "add")
    return _result(a.data + b.data, (a, b),
                   lambda g: (_reduce_to(g, a), _reduce_to(g, b)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "sub")
    return _result(a.data - b.data, (a, b),
                   lambda g: (_reduce_to(g, a), _reduce_to(-g, b)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "mul")
    return _result(a.data * b.data, (a, b),
                   lambda g: (_reduce_to(g * b.data, a), _reduce_to(g * a.data, b)))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    # split form avoids overflow in exp for large |x|
    x = a.data
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),))


def log(a: Tensor, floor: float = 1e-12) -> Tensor:
    """Natural log with the argument clamped below at ``floor``."""
    x = np.maximum(a.data, floor)
    return _result(np.log(x), (a,), lambda g: (g / x,))


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "tanh": tanh, "sigmoid": sigmoid}


def elementwise(kind: str, a, b=None) -> Tensor:
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None
    if kind in ("tanh", "sigmoid"):
        return fn(_as_tensor(a))
    if b is None:
        raise ContractError(f"{kind} needs two operands")
    return fn(a, b)


def where(mask: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """``a`` where ``mask`` else ``b``; ``mask`` is a constant of the same shape."""
    mask = np.asarray(mask, dtype=bool)
    if not (mask.shape == a.shape == b.shape):
        raise DimensionError(f"where: shapes {mask.shape}, {a.shape}, {b.shape} differ")
    return _result(np.where(mask, a.data, b.data), (a, b),
                   lambda g: (np.where(mask, g, 0.0), np.where(mask, 0.0, g)))


# -- linear algebra and shape --------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _result(a.data @ b.data, (a, b),
                   lambda g: (g @ b.data.T, a.data.T @ g))


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched product ``[B, m, n] @ [B, n, p]``; batch sizes must match."""
    if (a.data.ndim != 3 or b.data.ndim != 3 or a.shape[0] != b.shape[0]
            or a.shape[2] != b.shape[1]):
        raise DimensionError(f"bmm: cannot multiply {a.shape} by {b.shape}")
    return _result(a.data @ b.data, (a, b),
                   lambda g: (g @ b.data.transpose(0, 2, 1),
                              a.data.transpose(0, 2, 1) @ g))


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.data.ndim)))
    inverse = np.argsort(axes)
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def expand(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Explicit broadcast of ``a`` to ``shape`` (numpy rules); grads sum back."""
    shape = tuple(shape)
    try:
        data = np.broadcast_to(a.data, shape)
    except ValueError:
        raise DimensionError(f"expand: cannot broadcast {a.shape} to {shape}") from None
    lead = len(shape) - a.data.ndim
    keep = tuple(i + lead for i, n in enumerate(a.shape) if n == 1 and shape[i + lead] != 1)

    def fn(g):
        g = g.sum(axis=tuple(range(lead)) + keep, keepdims=True) if (lead or keep) else g
        return (g.reshape(a.shape),)

    return _result(np.array(data), (a,), fn)


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    if axis is None:
        return _result(np.asarray(a.data.sum()), (a,),
                       lambda g: (np.broadcast_to(g, a.shape).copy(),))
    out = a.data.sum(axis=axis)
    return _result(out, (a,),
                   lambda g: (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),))


def mean(a: Tensor) -> Tensor:
    return mul(sum(a), 1.0 / a.size)


def _is_basic(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis for p in parts)


def getitem(a: Tensor, index) -> Tensor:
    basic = _is_basic(index)

    def fn(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _result(a.data[index], (a,), fn)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    ax = axis % parts[0].data.ndim
    for p in parts[1:]:
        if p.data.ndim != parts[0].data.ndim or any(
                p.shape[i] != parts[0].shape[i] for i in range(p.data.ndim) if i != ax):
            raise DimensionError(
                f"concat: shapes {[q.shape for q in parts]} disagree off axis {axis}")
    bounds = np.cumsum([p.shape[ax] for p in parts])[:-1]
    return _result(np.concatenate([p.data for p in parts], axis=ax), tuple(parts),
                   lambda g: tuple(np.split(g, bounds, axis=ax)))


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    shape = parts[0].shape
    if any(p.shape != shape for p in parts):
        raise DimensionError(f"stack: shapes {[p.shape for p in parts]} differ")
    n = len(parts)
    return _result(np.stack([p.data for p in parts], axis=axis), tuple(parts),
                   lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


def take_rows(table: Tensor, index: np.ndarray, padding_idx: int | None = None) -> Tensor:
    """Gather ``table[index]``; ``padding_idx`` positions read as zeros and
    send no gradient back to the table."""
    index = np.asarray(index, dtype=np.intp)
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise IndexError(f"row index out of range [0, {table.shape[0]})")

    def fn(g):
        full = np.zeros_like(table.data)
        np.add.at(full, index, g)
        if padding_idx is not None:
            full[padding_idx] = 0.0
        return (full,)

    out = table.data[index]
    if padding_idx is not None:
        out[index == padding_idx] = 0.0
    return _result(out, (table,), fn)


def pick(a: Tensor, index: np.ndarray) -> Tensor:
    """Row-wise gather ``a[i, index[i]]`` from a 2-D tensor."""
    index = np.asarray(index, dtype=np.intp)
    rows = np.arange(a.shape[0])

    def fn(g):
        full = np.zeros_like(a.data)
        full[rows, index] = g
        return (full,)

    return _result(a.data[rows, index], (a,), fn)


# -- softmax -------------------------------------------------------------------

def masked_softmax(x: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis; masked-out positions are exactly zero."""
    if mask is None:
        mask = np.ones(x.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise DimensionError(f"masked_softmax: mask {mask.shape} vs input {x.shape}")
    if not mask.any(axis=-1).all():
        raise DegenerateMaskError("every softmax row needs at least one unmasked position")
    z = np.where(mask, x.data, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    y = e / e.sum(axis=-1, keepdims=True)

    def fn(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, (x,), fn)


def softmax(x: Tensor) -> Tensor:
    return masked_softmax(x, None)


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability ``p``, scale survivors by 1/(1-p)."""
    if p <= 0.0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul(x, Tensor(keep))


# -- gradient checking ---------------------------------------------------------

def grad_check(forward: Callable[[], Tensor], params: Iterable[Parameter],
               eps: float = 1e-6, order: int = 2) -> float:
    """Max relative error between tape gradients and central differences.

    Relative error per entry is ``|a - n| / max(1e-8, |a| + |n|)``.  Frozen
    rows are skipped.  ``forward`` must be deterministic.  ``order`` selects
    the central stencil: 2 (two-point) or 4 (four-point, truncation error
    O(eps^4), which lets deep stacks use a larger ``eps``).
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    params = list(params)
    first = forward().item()
    if forward().item() != first:
        raise DeterminismError("forward closure is not deterministic")
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = forward()
    tape.backward(loss)

    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        flat = p.data.reshape(-1)
        row = p.size // p.shape[0] if p.data.ndim else 1
        frozen = set(p.frozen_rows)
        for j in range(flat.size):
            if frozen and j // row in frozen:
                continue
            orig = flat[j]

            def at(delta: float) -> float:
                flat[j] = orig + delta
                value = forward().item()
                flat[j] = orig
                return value

            numeric = (at(eps) - at(-eps)) / (2 * eps)
            if order == 4:
                far = (at(2 * eps) - at(-2 * eps)) / (4 * eps)
                numeric = (4 * numeric - far) / 3
            a = analytic.reshape(-1)[j]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
        p.zero_grad()
    return worst
