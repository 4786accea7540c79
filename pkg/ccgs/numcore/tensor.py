"""
Dense tensors with tape-based reverse-mode differentiation.

Operations are plain functions over :class:`Tensor` objects. While a
:class:`Tape` is active (``with Tape() as tape: ...``), every operation with
at least one input that requires gradients is recorded on it, in execution
order. ``tape.backward(loss)`` then walks the record in reverse and
accumulates gradients into the ``grad`` attribute of every leaf tensor
(a tensor not produced by a recorded operation) that requires gradients.

Outside of a tape nothing is recorded, which is how inference runs.
"""
from __future__ import annotations

import contextvars
import numpy as np

from dataclasses import dataclass
from numpy.typing import ArrayLike, NDArray as ndarray
from typing import Callable, Iterable, Sequence

from ..core.constants import SENTINEL, SENTINEL_THRESHOLD
from ..errors import ConfigError, GradientError, ShapeError
from ..utils.random import np_random



### Tensor

class Tensor:
    """
    Dense n-dimensional array of real values with an optional gradient.

    Attributes
    ----------
    data : ndarray[float]
        Row-major array of values
    requires_grad : bool
        Whether gradients are tracked for this tensor
    grad : ndarray[float] or None
        Accumulated gradient (leaf tensors only)
    name : str or None
        Optional name (parameters carry their parameter name)
    """
    __slots__ = ('data', 'requires_grad', 'grad', 'name')

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: str | None = None,
        dtype: np.dtype | type | None = None):
        """
        Parameters
        ----------
        data : ArrayLike
            Tensor values
        requires_grad : bool
            Whether to track gradients for this tensor
        name : str or None
            Optional tensor name
        dtype : np.dtype or None
            Floating point type (defaults to the input's float type, or float64)
        """
        array = np.asarray(data)
        if dtype is None:
            dtype = array.dtype if np.issubdtype(array.dtype, np.floating) else np.float64
        self.data: ndarray = np.ascontiguousarray(array, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad: ndarray | None = None
        self.name = name

    def __repr__(self) -> str:
        name = f", name={self.name!r}" if self.name else ''
        return f"Tensor(shape={self.shape}{name}, requires_grad={self.requires_grad})"

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
    def T(self) -> 'Tensor':
        return transpose(self)

    def numpy(self) -> ndarray:
        """
        Return a copy of the underlying array.
        """
        return self.data.copy()

    def item(self) -> float:
        """
        Return the value of a single-element tensor as a Python float.
        """
        if self.data.size != 1:
            raise ShapeError('item', self.shape, detail="expected a single element")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> 'Tensor':
        """
        Return a tensor sharing no history with this one.
        """
        return Tensor(self.data.copy(), dtype=self.dtype)

    def zero_grad(self):
        """
        Clear the accumulated gradient.
        """
        self.grad = None

    def __matmul__(self, other: 'Tensor') -> 'Tensor':
        return matmul(self, other)

    def __add__(self, other: 'Tensor') -> 'Tensor':
        return add(self, other)

    def __mul__(self, other: 'Tensor | float') -> 'Tensor':
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self) -> 'Tensor':
        return scale(self, -1.0)



### Tape

_ACTIVE_TAPE: contextvars.ContextVar['Tape | None'] = contextvars.ContextVar(
    'ccgs_active_tape', default=None)

BackwardFn = Callable[[ndarray], Sequence['ndarray | None']]


@dataclass
class Node:
    """
    Record of one executed operation.

    Attributes
    ----------
    op : str
        Operation name
    inputs : tuple[Tensor, ...]
        Operation inputs
    output : Tensor
        Operation output
    backward : Callable(grad_output) -> tuple[ndarray or None, ...]
        Function mapping the output gradient to one gradient per input
    """
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """
    Ordered record of executed operations.

    The record is built in execution order, which is a topological order of
    the computation graph, so the backward pass is a single reverse sweep that
    visits each node exactly once.

    Examples
    --------
    >>> x = Tensor([[1.0, -2.0]], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum_(relu(x))
    >>> tape.backward(loss)
    >>> x.grad
    array([[1., 0.]])
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._produced: set[int] = set()
        self._token: contextvars.Token | None = None
        self._backward_calls = 0

    def __enter__(self) -> 'Tape':
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc_info):
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: Node):
        """
        Append an executed operation to the record.
        """
        self.nodes.append(node)
        self._produced.add(id(node.output))

    def reset(self):
        """
        Clear the record so the tape can be reused.
        """
        self.nodes.clear()
        self._produced.clear()
        self._backward_calls = 0

    def backward(self, loss: Tensor, accumulate: bool = False):
        """
        Backpropagate from a scalar loss, accumulating into leaf ``grad`` arrays.

        Parameters
        ----------
        loss : Tensor
            Single-element tensor produced by an operation on this tape
        accumulate : bool
            Allow a repeated backward pass over the same record, adding to the
            gradients of the previous pass

        Raises
        ------
        GradientError
            If the loss is not a scalar, was not recorded on this tape,
            or backward was already called without ``accumulate=True``
        """
        if loss.size != 1:
            raise GradientError(f"backward requires a scalar loss, got shape {loss.shape}")
        if id(loss) not in self._produced:
            raise GradientError("loss was not produced by an operation on this tape")
        if self._backward_calls and not accumulate:
            raise GradientError(
                "backward already called on this tape (pass accumulate=True to add gradients)")
        self._backward_calls += 1

        grads: dict[int, ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}

        for node in reversed(self.nodes):
            grad_out = grads.pop(id(node.output), None)
            if grad_out is None:
                continue

            for tensor, grad in zip(node.inputs, node.backward(grad_out)):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                grads[key] = grads[key] + grad if key in grads else grad
                if key not in self._produced:
                    leaves[key] = tensor

        for key, tensor in leaves.items():
            grad = grads[key].astype(tensor.dtype, copy=False)
            tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad


def active_tape() -> Tape | None:
    """
    Return the tape currently recording operations, if any.
    """
    return _ACTIVE_TAPE.get()

def _result(
    op: str,
    data: ndarray,
    inputs: tuple[Tensor, ...],
    backward: BackwardFn) -> Tensor:
    """
    Wrap an operation result, recording it on the active tape when needed.
    """
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires_grad, dtype=data.dtype)
    tape = _ACTIVE_TAPE.get()
    if tape is not None and requires_grad:
        tape.record(Node(op, inputs, out, backward))
    return out

def _check_same_shape(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ShapeError(op, a.shape, b.shape)

def _check_matrix(op: str, *tensors: Tensor):
    if any(t.ndim != 2 for t in tensors):
        raise ShapeError(op, *(t.shape for t in tensors), detail="expected 2-D operands")

def _check_row(op: str, a: Tensor, row: Tensor):
    _check_matrix(op, a, row)
    if row.shape != (1, a.shape[1]):
        raise ShapeError(op, a.shape, row.shape, detail="expected a 1 x n row vector")



### Constructors

def constant(data: ArrayLike, dtype: np.dtype | type | None = None) -> Tensor:
    """
    Create a tensor that does not require gradients.
    """
    return Tensor(data, requires_grad=False, dtype=dtype)

def zeros(shape: Sequence[int], dtype: np.dtype | type = np.float64) -> Tensor:
    """
    Create a tensor of zeros that does not require gradients.
    """
    return Tensor(np.zeros(tuple(shape), dtype=dtype))



### Linear Algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of an (m x k) and a (k x n) tensor.
    """
    _check_matrix('matmul', a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError('matmul', a.shape, b.shape)

    def backward(g: ndarray):
        return g @ b.data.T, a.data.T @ g

    return _result('matmul', a.data @ b.data, (a, b), backward)

def transpose(a: Tensor) -> Tensor:
    """
    Transpose of a matrix.
    """
    _check_matrix('transpose', a)
    return _result('transpose', a.data.T.copy(), (a,), lambda g: (g.T,))



### Elementwise

def add(a: Tensor, b: Tensor) -> Tensor:
    """
    Elementwise sum of two tensors of the same shape.
    """
    _check_same_shape('add', a, b)
    return _result('add', a.data + b.data, (a, b), lambda g: (g, g))

def sub(a: Tensor, b: Tensor) -> Tensor:
    """
    Elementwise difference of two tensors of the same shape.
    """
    _check_same_shape('sub', a, b)
    return _result('sub', a.data - b.data, (a, b), lambda g: (g, -g))

def mul(a: Tensor, b: Tensor) -> Tensor:
    """
    Elementwise (Hadamard) product of two tensors of the same shape.
    """
    _check_same_shape('mul', a, b)

    def backward(g: ndarray):
        return g * b.data, g * a.data

    return _result('mul', a.data * b.data, (a, b), backward)

def scale(a: Tensor, factor: float) -> Tensor:
    """
    Multiply every entry by a constant.
    """
    return _result('scale', a.data * factor, (a,), lambda g: (g * factor,))

def add_broadcast(a: Tensor, row: Tensor) -> Tensor:
    """
    Add a (1 x n) row vector onto every row of an (m x n) matrix.
    """
    _check_row('add_broadcast', a, row)

    def backward(g: ndarray):
        return g, g.sum(axis=0, keepdims=True)

    return _result('add_broadcast', a.data + row.data, (a, row), backward)

def mul_broadcast(a: Tensor, row: Tensor) -> Tensor:
    """
    Multiply every row of an (m x n) matrix elementwise by a (1 x n) row vector.
    """
    _check_row('mul_broadcast', a, row)

    def backward(g: ndarray):
        return g * row.data, (g * a.data).sum(axis=0, keepdims=True)

    return _result('mul_broadcast', a.data * row.data, (a, row), backward)

def expand_rows(row: Tensor, num_rows: int) -> Tensor:
    """
    Repeat a (1 x n) row vector into an (num_rows x n) matrix.
    """
    _check_matrix('expand_rows', row)
    if row.shape[0] != 1:
        raise ShapeError('expand_rows', row.shape, detail="expected a 1 x n row vector")

    def backward(g: ndarray):
        return (g.sum(axis=0, keepdims=True),)

    data = np.repeat(row.data, int(num_rows), axis=0)
    return _result('expand_rows', data, (row,), backward)

def relu(a: Tensor) -> Tensor:
    """
    Rectified linear unit.
    """
    active = a.data > 0
    return _result('relu', np.where(active, a.data, 0.0), (a,), lambda g: (g * active,))

def masked_fill(a: Tensor, mask: ndarray, value: float = SENTINEL) -> Tensor:
    """
    Replace the entries selected by a boolean mask with a constant.
    Filled entries pass no gradient.

    Parameters
    ----------
    a : Tensor
        Input tensor
    mask : ndarray[bool]
        Boolean mask with the same shape as ``a`` (True = fill)
    value : float
        Fill value (defaults to the masking sentinel)
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ShapeError('masked_fill', a.shape, mask.shape)

    data = np.where(mask, a.data.dtype.type(value), a.data)
    return _result('masked_fill', data, (a,), lambda g: (np.where(mask, 0.0, g),))

def dropout(a: Tensor, p: float, train: bool, seed: int | None = None) -> Tensor:
    """
    Inverted dropout: at train time, zero each entry with probability ``p``
    and divide kept entries by ``1 - p``. At inference this is the identity.

    Parameters
    ----------
    a : Tensor
        Input tensor
    p : float
        Drop probability in [0, 1)
    train : bool
        Whether dropout is active
    seed : int or None
        Seed of the dropout mask
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return a

    keep = np_random(seed).random(a.shape) >= p
    factor = (keep / (1.0 - p)).astype(a.dtype)
    return _result('dropout', a.data * factor, (a,), lambda g: (g * factor,))



### Reductions & Normalization

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """
    Numerically stable softmax along an axis.
    Entries holding the masking sentinel receive (numerically) zero mass.
    """
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    s = exp / exp.sum(axis=axis, keepdims=True)

    def backward(g: ndarray):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _result('softmax', s, (a,), backward)

def mean(a: Tensor, axis: int | None = None, keepdims: bool = True) -> Tensor:
    """
    Mean along an axis (or over all entries).
    """
    count = a.size if axis is None else a.shape[axis]
    data = a.data.mean(axis=axis, keepdims=keepdims)

    def backward(g: ndarray):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape) / count,)

    return _result('mean', data, (a,), backward)

def sum_(a: Tensor) -> Tensor:
    """
    Sum of all entries, as a single-element tensor.
    """
    def backward(g: ndarray):
        return (np.broadcast_to(g.reshape(()), a.shape).copy(),)

    return _result('sum', np.asarray(a.data.sum()), (a,), backward)



### Shape Manipulation

def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """
    Concatenate tensors along an axis.
    """
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError('concat', detail="nothing to concatenate")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError('concat', *(t.shape for t in tensors), detail=str(e)) from None

    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g: ndarray):
        return tuple(np.split(g, bounds, axis=axis))

    return _result('concat', data, tensors, backward)

def slice_(a: Tensor, *ranges: tuple[int, int] | None) -> Tensor:
    """
    Take a contiguous block: one (start, stop) range per leading axis
    (None keeps the whole axis).

    Examples
    --------
    >>> t = Tensor(np.arange(12.0).reshape(4, 3))
    >>> slice_(t, (1, 3)).shape
    (2, 3)
    >>> slice_(t, None, (0, 2)).shape
    (4, 2)
    """
    if len(ranges) > a.ndim:
        raise ShapeError('slice', a.shape, detail=f"{len(ranges)} ranges for {a.ndim} axes")

    index = []
    for axis, bounds in enumerate(ranges):
        if bounds is None:
            index.append(slice(None))
            continue
        start, stop = bounds
        if not 0 <= start <= stop <= a.shape[axis]:
            raise ShapeError(
                'slice', a.shape, detail=f"range {bounds} out of bounds on axis {axis}")
        index.append(slice(start, stop))
    index = tuple(index)

    def backward(g: ndarray):
        grad = np.zeros_like(a.data)
        grad[index] = g
        return (grad,)

    return _result('slice', a.data[index].copy(), (a,), backward)

def flatten(a: Tensor) -> Tensor:
    """
    Row-major flatten into a (1 x size) row vector.
    """
    return _result('flatten', a.data.reshape(1, -1).copy(), (a,), lambda g: (g.reshape(a.shape),))

def embedding(table: Tensor, ids: ArrayLike) -> Tensor:
    """
    Gather rows of an embedding table. Gradients are scatter-added back
    into the gathered rows.

    Parameters
    ----------
    table : Tensor of shape (num_rows, dim)
        Embedding table
    ids : ArrayLike[int] of shape (n,)
        Row indices
    """
    _check_matrix('embedding', table)
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError('embedding', table.shape, ids.shape, detail="row index out of range")

    def backward(g: ndarray):
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids, g)
        return (grad,)

    return _result('embedding', table.data[ids], (table,), backward)



### Losses

def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """
    Cross-entropy of a (1 x L) logit row against a target index,
    i.e. ``-log softmax(logits)[target]``.

    Raises
    ------
    GradientError
        If the target is out of range or points at a masked entry
    """
    if logits.ndim != 2 or logits.shape[0] != 1:
        raise ShapeError('cross_entropy', logits.shape, detail="expected a 1 x L row")
    length = logits.shape[1]
    if not 0 <= target < length:
        raise GradientError(f"cross_entropy target {target} out of range [0, {length})")
    if logits.data[0, target] <= SENTINEL_THRESHOLD:
        raise GradientError(f"cross_entropy target {target} points at a masked logit")

    row = logits.data[0]
    top = row.max()
    log_z = top + np.log(np.exp(row - top).sum())
    loss = np.asarray(log_z - row[target])
    probs = np.exp(row - log_z)

    def backward(g: ndarray):
        grad = probs.copy()
        grad[target] -= 1.0
        return ((g.reshape(()) * grad).reshape(1, -1),)

    return _result('cross_entropy', loss, (logits,), backward)



### Gradient Checking

def numerical_gradient(
    fn: Callable[[], Tensor],
    tensor: Tensor,
    eps: float = 1e-4,
    entries: Iterable[tuple[int, ...]] | None = None) -> ndarray:
    """
    Central finite-difference gradient of a scalar function with respect to
    the entries of a tensor (modified in place and restored).

    Parameters
    ----------
    fn : Callable() -> Tensor
        Function returning a scalar tensor
    tensor : Tensor
        Tensor whose entries are perturbed
    eps : float
        Perturbation size
    entries : Iterable[tuple[int, ...]] or None
        Entries to perturb (defaults to all); other entries are left at zero
    """
    grad = np.zeros_like(tensor.data)
    for index in (entries if entries is not None else np.ndindex(tensor.shape)):
        original = tensor.data[index]
        tensor.data[index] = original + eps
        plus = fn().item()
        tensor.data[index] = original - eps
        minus = fn().item()
        tensor.data[index] = original
        grad[index] = (plus - minus) / (2 * eps)

    return grad

def relative_error(analytic: ndarray, numeric: ndarray, floor: float = 1e-6) -> float:
    """
    Maximum elementwise relative error ``|a - n| / max(|a|, |n|, floor)``.
    """
    scale_ = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale_)) if analytic.size else 0.0

def check_gradients(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    eps: float = 1e-4) -> dict[str, float]:
    """
    Compare tape gradients of a scalar function with central finite differences.

    Parameters
    ----------
    fn : Callable() -> Tensor
        Function computing a scalar from ``tensors`` (called repeatedly)
    tensors : Sequence[Tensor]
        Tensors requiring gradients
    eps : float
        Finite-difference step

    Returns
    -------
    errors : dict[str, float]
        Maximum relative error per tensor (keyed by name, or position)
    """
    for t in tensors:
        t.zero_grad()
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)

    errors = {}
    for i, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_gradient(fn, t, eps=eps)
        errors[t.name or str(i)] = relative_error(analytic, numeric)

    return errors
