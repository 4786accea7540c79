from __future__ import annotations

import aenum as enum
import functools

from typing import Any

from ..errors import ConfigError



### Helper Functions

@functools.cache
def _enum_index(enum_item: enum.Enum) -> int:
    """
    Return the index of the given enum item.

    Parameters
    ----------
    enum_item : enum.Enum
        Enum item
    """
    return list(enum_item.__class__).index(enum_item)

@functools.cache
def _enum_lookup(enum_cls: enum.EnumMeta) -> dict[str, enum.Enum]:
    """
    Return a mapping from lowercased names and values to items of the given enum.

    Parameters
    ----------
    enum_cls : enum.EnumMeta
        Enum class
    """
    lookup = {}
    for item in enum_cls:
        lookup[item.name.lower()] = item
        lookup[str(item.value).lower()] = item
    return lookup



### Enumeration

class IndexedEnum(enum.Enum):
    """
    Enum where each member has a corresponding integer index,
    and which can be parsed from case-insensitive config strings.

    Examples
    --------
    >>> class Split(str, IndexedEnum):
    ...     train = 'train'
    ...     test = 'test'
    >>> Split.parse('TEST')
    <Split.test: 'test'>
    >>> int(Split.test)
    1
    """

    def __int__(self):
        return self.to_index()

    def __str__(self) -> str:
        return str(self.value)

    @classmethod
    def choices(cls) -> tuple[str, ...]:
        """
        Return the string values of all members, in definition order.
        """
        return tuple(str(item.value) for item in cls)

    @classmethod
    def parse(cls, value: Any) -> 'IndexedEnum':
        """
        Parse an enum item from a member, a value or a member name.

        Parameters
        ----------
        value : Any
            Enum item, enum value, or case-insensitive name

        Raises
        ------
        ConfigError
            If the value does not name a member of this enumeration
        """
        if isinstance(value, cls):
            return value

        item = _enum_lookup(cls).get(str(value).strip().lower())
        if item is None:
            raise ConfigError(
                f"invalid {cls.__name__} {value!r} "
                f"(expected one of: {', '.join(cls.choices())})")

        return item

    def to_index(self) -> int:
        """
        Return the integer index of this enum item.
        """
        return _enum_index(self)
