import numba as nb
import numpy as np

from numpy.typing import NDArray as ndarray

from ..core.constants import SENTINEL_THRESHOLD



### Span Kernels

@nb.njit(cache=True)
def upper_triangle_argmax(logits: ndarray[np.floating]) -> tuple[int, int, float]:
    """
    Find the maximum entry of the upper triangle (y <= x) of a square matrix.
    Ties are broken by smallest row, then smallest column.

    Parameters
    ----------
    logits : ndarray[float] of shape (r, r)
        Span logits (row = start, column = end)

    Returns
    -------
    y : int
        Row of the maximum
    x : int
        Column of the maximum
    score : float
        Maximum value
    """
    r = logits.shape[0]
    best_y, best_x = 0, 0
    best = logits[0, 0]
    for y in range(r):
        for x in range(y, r):
            if logits[y, x] > best:
                best = logits[y, x]
                best_y, best_x = y, x

    return best_y, best_x, best

@nb.njit(cache=True)
def overlapping_units(
    starts: ndarray[np.floating],
    ends: ndarray[np.floating],
    query_start: float,
    query_end: float) -> tuple[int, int]:
    """
    Find the first and last unit whose interval overlaps a query interval
    with positive length. A zero-length query selects the units containing it.

    Parameters
    ----------
    starts : ndarray[float] of shape (n,)
        Unit start times (sorted)
    ends : ndarray[float] of shape (n,)
        Unit end times
    query_start : float
        Query interval start
    query_end : float
        Query interval end

    Returns
    -------
    first : int
        Index of the first overlapping unit (-1 if none)
    last : int
        Index of the last overlapping unit (-1 if none)
    """
    first, last = -1, -1
    point = query_end <= query_start
    for j in range(starts.shape[0]):
        if point:
            hit = starts[j] <= query_start and query_start <= ends[j]
        else:
            hit = min(ends[j], query_end) - max(starts[j], query_start) > 0
        if hit:
            if first < 0:
                first = j
            last = j

    return first, last

@nb.njit(cache=True)
def count_masked(values: ndarray[np.floating]) -> int:
    """
    Count entries at or below the masking threshold.
    """
    count = 0
    for value in values.ravel():
        if value <= SENTINEL_THRESHOLD:
            count += 1

    return count



### Interval Kernels

@nb.njit(cache=True)
def interval_iou(
    a_start: ndarray[np.floating],
    a_end: ndarray[np.floating],
    b_start: ndarray[np.floating],
    b_end: ndarray[np.floating]) -> ndarray[np.float64]:
    """
    Elementwise temporal intersection-over-union of two interval arrays.

    When the union has zero length the IoU is 1 for identical points and 0 otherwise.
    """
    n = a_start.shape[0]
    out = np.zeros(n, dtype=np.float64)
    for i in range(n):
        inter = max(0.0, min(a_end[i], b_end[i]) - max(a_start[i], b_start[i]))
        union = (a_end[i] - a_start[i]) + (b_end[i] - b_start[i]) - inter
        if union > 0:
            out[i] = inter / union
        elif a_start[i] == b_start[i] and a_end[i] == b_end[i]:
            out[i] = 1.0

    return out
