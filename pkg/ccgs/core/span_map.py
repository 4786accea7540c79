"""
Span-label mapping between subtitle time intervals, subtitle units, and
token positions of the global-span matrix.

Each kept subtitle unit owns a contiguous, inclusive token range
``[a_j, b_j]``. The ranges of consecutive units are adjacent and together
cover ``[0, r - 1]``, where ``r`` is the number of subtitle tokens kept.
"""
from __future__ import annotations

import logging
import numpy as np

from dataclasses import dataclass
from numpy.typing import NDArray as ndarray
from typing import NamedTuple

from .corpus import TimeInterval, VideoDoc
from ..errors import ConfigError, SpanError
from ..utils.kernels import overlapping_units

logger = logging.getLogger(__name__)



class SpanPoint(NamedTuple):
    """
    Cell of the global-span matrix: start token ``y`` and end token ``x``.
    """
    y: int
    x: int

    def flat_index(self, r: int) -> int:
        """
        Row-major index of this cell in a flattened r x r matrix.
        """
        return self.y * r + self.x

    @classmethod
    def from_flat_index(cls, index: int, r: int) -> 'SpanPoint':
        """
        Inverse of :meth:`flat_index`.
        """
        return cls(*divmod(int(index), r))


@dataclass(frozen=True, eq=False)
class SpanLabelMap:
    """
    Token layout of one video's subtitles.

    Attributes
    ----------
    video_id : str
        Identifier of the mapped video
    unit_index : ndarray[int] of shape (n,)
        1-based ordinals of the kept units
    token_start : ndarray[int] of shape (n,)
        First token of each kept unit (a_j)
    token_end : ndarray[int] of shape (n,)
        Last token of each kept unit (b_j)
    time_start : ndarray[float] of shape (n,)
        Start time of each kept unit
    time_end : ndarray[float] of shape (n,)
        End time of each kept unit
    tokens : tuple[str, ...]
        The r kept subtitle tokens
    truncated : bool
        Whether tokens were dropped to respect the length cap
    """
    video_id: str
    unit_index: ndarray[np.int64]
    token_start: ndarray[np.int64]
    token_end: ndarray[np.int64]
    time_start: ndarray[np.float64]
    time_end: ndarray[np.float64]
    tokens: tuple[str, ...]
    truncated: bool

    @property
    def r(self) -> int:
        """
        Number of subtitle tokens (side length of the span matrix).
        """
        return len(self.tokens)

    @property
    def num_units(self) -> int:
        return len(self.unit_index)

    @property
    def covered(self) -> TimeInterval:
        """
        Time range spanned by the kept units.
        """
        return TimeInterval(float(self.time_start[0]), float(self.time_end[-1]))

    def unit_of_token(self, position: int) -> int:
        """
        Return the position (0-based, among kept units) of the unit owning a token.
        """
        return int(np.searchsorted(self.token_start, position, side='right')) - 1

    def token_units(self) -> ndarray[np.int64]:
        """
        Return the kept-unit position of every token, shape (r,).
        """
        lengths = self.token_end - self.token_start + 1
        return np.repeat(np.arange(self.num_units), lengths)

    def __repr__(self) -> str:
        flag = ', truncated' if self.truncated else ''
        return f"SpanLabelMap({self.video_id!r}, units={self.num_units}, r={self.r}{flag})"



### Construction

def build_span_label_map(video: VideoDoc, max_length: int) -> SpanLabelMap:
    """
    Assign token ranges to the units of a video, in order.

    Units are kept whole while the cumulative token count stays within
    ``max_length``. If not even the first unit fits, it is clipped to
    ``max_length`` tokens. Units without tokens own no range.

    Parameters
    ----------
    video : VideoDoc
        Video to map
    max_length : int
        Maximum number of subtitle tokens

    Raises
    ------
    SpanError
        If the video has no subtitle tokens
    """
    if max_length < 1:
        raise ConfigError(f"max_length must be positive, got {max_length}")

    units = [unit for unit in video.units if unit.tokens]
    if not units:
        raise SpanError(f"video {video.video_id!r} has no subtitle tokens")

    kept, tokens, truncated = [], [], False
    for unit in units:
        if len(tokens) + len(unit.tokens) > max_length:
            truncated = True
            break
        kept.append(unit)
        tokens.extend(unit.tokens)

    lengths = [len(unit.tokens) for unit in kept]
    if not kept:
        kept, tokens = [units[0]], list(units[0].tokens[:max_length])
        lengths = [len(tokens)]

    if truncated:
        logger.warning(
            "Video %s truncated to %d of %d subtitle tokens (%d of %d units)",
            video.video_id, len(tokens), len(video.tokens), len(kept), len(video.units))

    token_end = np.cumsum(lengths, dtype=np.int64) - 1
    return SpanLabelMap(
        video_id=video.video_id,
        unit_index=np.array([unit.index for unit in kept], dtype=np.int64),
        token_start=token_end - np.asarray(lengths, dtype=np.int64) + 1,
        token_end=token_end,
        time_start=np.array([unit.interval.start for unit in kept], dtype=np.float64),
        time_end=np.array([unit.interval.end for unit in kept], dtype=np.float64),
        tokens=tuple(tokens),
        truncated=truncated,
    )



### Mapping

def time_to_span(span_map: SpanLabelMap, gt: TimeInterval) -> SpanPoint:
    """
    Map a time interval to the span point covering every unit it overlaps.

    A unit is included when its intersection with ``gt`` has positive length.
    A zero-length ``gt`` selects the unit(s) containing it. Only the kept
    (untruncated) units are considered.

    Raises
    ------
    SpanError
        If no kept unit overlaps the interval
    """
    first, last = overlapping_units(
        span_map.time_start, span_map.time_end, float(gt.start), float(gt.end))
    if first < 0:
        raise SpanError(
            f"interval [{gt.start}, {gt.end}] overlaps no subtitle unit "
            f"of video {span_map.video_id!r} (covered {span_map.covered.to_tuple()})")

    return SpanPoint(int(span_map.token_start[first]), int(span_map.token_end[last]))

def span_to_time(span_map: SpanLabelMap, point: tuple[int, int]) -> TimeInterval:
    """
    Map a span point to the interval from the start of the unit owning
    token ``y`` to the end of the unit owning token ``x``.

    Raises
    ------
    SpanError
        If the span point is out of range or has y > x
    """
    y, x = point
    if not 0 <= y <= x < span_map.r:
        raise SpanError(f"invalid span point ({y}, {x}) for r={span_map.r}")

    return TimeInterval(
        float(span_map.time_start[span_map.unit_of_token(y)]),
        float(span_map.time_end[span_map.unit_of_token(x)]),
    )
