from __future__ import annotations

import numpy as np

from collections import OrderedDict
from numpy.typing import ArrayLike, NDArray as ndarray
from typing import Iterable, Iterator

from .tensor import Tensor
from ..errors import ConfigError, GradientError



class ParameterSet:
    """
    Named trainable tensors together with their AdamW moment estimates.

    Attributes
    ----------
    step : int
        Number of optimizer steps taken
    m : dict[str, ndarray]
        First moment estimate per parameter
    v : dict[str, ndarray]
        Second moment estimate per parameter

    Examples
    --------
    >>> params = ParameterSet()
    >>> w = params.add('w', np.ones((2, 2)))
    >>> params['w'] is w
    True
    >>> params.names()
    ['w']
    """

    def __init__(self, dtype: np.dtype | type = np.float64):
        """
        Parameters
        ----------
        dtype : np.dtype
            Floating point type of every parameter
        """
        self.dtype = np.dtype(dtype)
        self._tensors: OrderedDict[str, Tensor] = OrderedDict()
        self.m: dict[str, ndarray] = {}
        self.v: dict[str, ndarray] = {}
        self.step = 0

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self._tensors.values())

    def __len__(self) -> int:
        return len(self._tensors)

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}({len(self)} tensors, step={self.step})"

    def add(self, name: str, value: ArrayLike) -> Tensor:
        """
        Register a new trainable tensor (with zeroed moments).

        Parameters
        ----------
        name : str
            Unique parameter name
        value : ArrayLike
            Initial value
        """
        assert name not in self._tensors, f"duplicate parameter {name!r}"
        tensor = Tensor(value, requires_grad=True, name=name, dtype=self.dtype)
        self._tensors[name] = tensor
        self.m[name] = np.zeros_like(tensor.data)
        self.v[name] = np.zeros_like(tensor.data)
        return tensor

    def names(self) -> list[str]:
        """
        Return parameter names in registration order.
        """
        return list(self._tensors)

    def items(self) -> Iterable[tuple[str, Tensor]]:
        return self._tensors.items()

    def num_values(self) -> int:
        """
        Return the total number of scalar parameters.
        """
        return sum(t.size for t in self._tensors.values())

    def zero_grad(self):
        """
        Clear the gradients of all parameters.
        """
        for tensor in self._tensors.values():
            tensor.grad = None

    def copy(self) -> 'ParameterSet':
        """
        Return a deep copy of values, moments and step counter (gradients are not copied).
        """
        other = ParameterSet(self.dtype)
        for name, tensor in self._tensors.items():
            other.add(name, tensor.data.copy())
            other.m[name] = self.m[name].copy()
            other.v[name] = self.v[name].copy()
        other.step = self.step
        return other

    def astype(self, dtype: np.dtype | type) -> 'ParameterSet':
        """
        Return a copy of this parameter set in another floating point type.
        """
        other = ParameterSet(dtype)
        for name, tensor in self._tensors.items():
            other.add(name, tensor.data)
            other.m[name] = self.m[name].astype(dtype)
            other.v[name] = self.v[name].astype(dtype)
        other.step = self.step
        return other

    def equals(self, other: 'ParameterSet') -> bool:
        """
        Return whether two parameter sets hold bit-identical values and state.
        """
        if self.names() != other.names() or self.step != other.step:
            return False
        return all(
            np.array_equal(self[name].data, other[name].data)
            and np.array_equal(self.m[name], other.m[name])
            and np.array_equal(self.v[name], other.v[name])
            for name in self.names()
        )



### Optimizer

def adamw_step(
    params: ParameterSet,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    names: Iterable[str] | None = None) -> ParameterSet:
    """
    Apply one AdamW update with decoupled weight decay, then clear gradients.

    For each parameter ``p`` with gradient ``g``::

        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g^2
        p = p - lr * wd * p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)

    Parameters
    ----------
    params : ParameterSet
        Parameters to update (in place)
    lr : float
        Learning rate
    beta1 : float
        Decay rate of the first moment
    beta2 : float
        Decay rate of the second moment
    eps : float
        Denominator offset
    weight_decay : float
        Decoupled weight decay coefficient
    names : Iterable[str] or None
        Parameters to update (defaults to all); other parameters are untouched

    Returns
    -------
    params : ParameterSet
        The updated parameter set

    Raises
    ------
    GradientError
        If a parameter to update has no gradient
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    names = params.names() if names is None else list(names)
    missing = [name for name in names if params[name].grad is None]
    if missing:
        raise GradientError(f"missing gradient for parameters: {', '.join(missing)}")

    params.step += 1
    t = params.step
    bias1 = 1.0 - beta1 ** t
    bias2 = 1.0 - beta2 ** t

    for name in names:
        tensor = params[name]
        grad = tensor.grad
        m = params.m[name] = beta1 * params.m[name] + (1.0 - beta1) * grad
        v = params.v[name] = beta2 * params.v[name] + (1.0 - beta2) * grad * grad
        update = (m / bias1) / (np.sqrt(v / bias2) + eps)
        tensor.data -= lr * weight_decay * tensor.data + lr * update
        tensor.grad = None

    return params
