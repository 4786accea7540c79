from __future__ import annotations

import numpy as np

from gymnasium.utils import seeding
from typing import Iterable, Sequence, TypeVar

T = TypeVar('T')



### Seeding

def np_random(seed: int | None = None) -> np.random.Generator:
    """
    Return a random number generator for the given seed.

    Parameters
    ----------
    seed : int or None
        Non-negative integer seed (or None for fresh entropy)
    """
    rng, _ = seeding.np_random(seed)
    return rng

def derive_seed(seed: int, *keys: int) -> int:
    """
    Derive a child seed from a base seed and a sequence of integer keys
    (e.g. training step, batch item, negative index).

    The result depends only on its arguments, so any component that draws
    from ``np_random(derive_seed(seed, step, ...))`` is reproducible and
    can be resumed from any step.

    Parameters
    ----------
    seed : int
        Base seed
    keys : int
        Integer keys identifying the consumer
    """
    sequence = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    return int(sequence.generate_state(1, dtype=np.uint32)[0])



class RandomMixin:
    """
    Mixin class for random number generation.
    """

    def __init__(self, random_generator: np.random.Generator):
        """
        Parameters
        ----------
        random_generator : np.random.Generator
            Random number generator
        """
        self.__np_random = random_generator

    def _rand_int(self, low: int, high: int) -> int:
        """
        Generate random integer in range [low, high).

        :meta public:
        """
        return int(self.__np_random.integers(low, high))

    def _rand_elem(self, sequence: Sequence[T]) -> T:
        """
        Pick a random element in a sequence.

        :meta public:
        """
        return sequence[self._rand_int(0, len(sequence))]

    def _rand_subset(self, iterable: Iterable[T], num_elems: int) -> list[T]:
        """
        Sample a random subset of distinct elements (without replacement),
        preserving the sampled order.

        :meta public:
        """
        lst = list(iterable)
        assert num_elems <= len(lst)
        idx = self.__np_random.choice(len(lst), size=num_elems, replace=False)
        return [lst[i] for i in idx]

    def _rand_indices(self, n: int, size: int) -> list[int]:
        """
        Draw ``size`` indices in range [0, n), distinct whenever size <= n.

        :meta public:
        """
        idx = self.__np_random.choice(n, size=size, replace=size > n)
        return [int(i) for i in idx]

    def _rand_perm(self, iterable: Iterable[T]) -> list[T]:
        """
        Randomly permute a list.

        :meta public:
        """
        lst = list(iterable)
        self.__np_random.shuffle(lst)
        return lst
