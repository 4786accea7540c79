"""
Global-span matrix: every cell (y, x) with y <= x scores the answer span
running from subtitle token y to subtitle token x of one video.

The same matrix serves localization (argmax over the valid cells) and
retrieval (the winning logit is the video's score). Training combines a
span predictor loss over one matrix with a contrastive loss over the
concatenated matrices of the gold video and M negative videos.
"""
from __future__ import annotations

import json
import numpy as np

from dataclasses import dataclass
from numpy.typing import NDArray as ndarray
from typing import NamedTuple, Sequence

from ..core.constants import POSITION_BASE, SENTINEL, PositionForm
from ..core.span_map import SpanPoint
from ..errors import ShapeError, SpanError
from ..numcore import (
    ParameterSet,
    Tensor,
    add,
    add_broadcast,
    concat,
    constant,
    cross_entropy,
    flatten,
    masked_fill,
    matmul,
    scale,
    slice_,
    transpose,
)
from ..utils.kernels import upper_triangle_argmax



### Parameters

@dataclass
class SpanParams:
    """
    Trainable tensors of the global-span layers.

    Attributes
    ----------
    es_weight : Tensor of shape (d, 2d)
        Split linear layer weight (first d columns -> X, last d -> Y)
    es_bias : Tensor of shape (1, 2d)
        Split linear layer bias
    position : Tensor of shape (max_length, d) or None
        Learned position table (``PositionForm.learned`` only)
    """
    es_weight: Tensor
    es_bias: Tensor
    position: Tensor | None = None

    @property
    def d(self) -> int:
        return self.es_weight.shape[0]

    @classmethod
    def create(
        cls,
        params: ParameterSet,
        d: int,
        rng: np.random.Generator,
        position_form: PositionForm = PositionForm.sinusoid,
        max_length: int = 1) -> 'SpanParams':
        """
        Register the global-span parameters in a parameter set.
        """
        es_weight = params.add('span.es.weight', rng.normal(0.0, d ** -0.5, size=(d, 2 * d)))
        es_bias = params.add('span.es.bias', np.zeros((1, 2 * d)))
        position = None
        if PositionForm.parse(position_form) == PositionForm.learned:
            position = params.add('span.position', position_table(max_length, d))

        return cls(es_weight, es_bias, position)



### Types

@dataclass
class SplitFeatures:
    """
    Outputs of the split linear layer, before and after adding positions.

    Attributes
    ----------
    X, Y : Tensor of shape (r, d)
        Tail (X-axis) and head (Y-axis) features
    X_hat, Y_hat : Tensor of shape (r, d)
        Features with the position table added
    P : Tensor of shape (r, d)
        Position table
    """
    X: Tensor
    Y: Tensor
    X_hat: Tensor | None = None
    Y_hat: Tensor | None = None
    P: Tensor | None = None


@dataclass
class GlobalSpanMatrix:
    """
    Span logits of one video.

    Attributes
    ----------
    logits : Tensor of shape (r, r)
        Cell (y, x) scores the span from token y (head) to token x (tail);
        cells with y > x hold the masking sentinel
    valid_mask : ndarray[bool] of shape (r, r)
        True exactly on the upper triangle (y <= x)
    """
    logits: Tensor
    valid_mask: ndarray[np.bool_]

    @property
    def r(self) -> int:
        return self.logits.shape[0]

    def to_json(self) -> str:
        """
        Dump the matrix for inspection: side length, row-major logits and mask.
        """
        return json.dumps({
            'r': self.r,
            'logits': self.logits.data.reshape(-1).tolist(),
            'mask': self.valid_mask.reshape(-1).astype(int).tolist(),
        })


@dataclass
class GlobalLogits:
    """
    Flattened logits of a positive matrix followed by its negatives.

    Attributes
    ----------
    logits : Tensor of shape (1, L)
        Concatenated flattened logits
    target : int
        Index of the gold cell (always within the first segment)
    offsets : tuple[int, ...]
        Start index of each segment
    """
    logits: Tensor
    target: int
    offsets: tuple[int, ...]

    @property
    def num_negatives(self) -> int:
        return len(self.offsets) - 1


class DecodedSpan(NamedTuple):
    """
    Highest scoring valid cell of a global-span matrix.
    """
    y: int
    x: int
    score: float

    @property
    def point(self) -> SpanPoint:
        return SpanPoint(self.y, self.x)



### Layers

def es_layer(fused: Tensor, params: SpanParams) -> SplitFeatures:
    """
    Split linear layer: project each row from d to 2d, then split the output
    into X (first d columns) and Y (last d columns).

    Parameters
    ----------
    fused : Tensor of shape (r, d)
        Fused subtitle features
    params : SpanParams
        Global-span parameters
    """
    d = params.d
    if fused.ndim != 2 or fused.shape[1] != d:
        raise ShapeError('es_layer', fused.shape, params.es_weight.shape)

    out = add_broadcast(matmul(fused, params.es_weight), params.es_bias)
    return SplitFeatures(X=slice_(out, None, (0, d)), Y=slice_(out, None, (d, 2 * d)))

def position_table(r: int, d: int, base: float = POSITION_BASE) -> ndarray[np.float64]:
    """
    Sinusoidal position table: ``P[j, 2k] = sin(j / base^(2k/d))`` and
    ``P[j, 2k+1] = cos(j / base^(2k/d))``.

    Examples
    --------
    >>> position_table(1, 4)
    array([[0., 1., 0., 1.]])
    """
    positions = np.arange(r, dtype=np.float64)[:, None]
    rates = base ** (-np.arange(0, d, 2, dtype=np.float64) / d)
    angles = positions * rates[None, :]

    table = np.zeros((r, d), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles[:, :d // 2])
    return table

def add_positions(split: SplitFeatures, params: SpanParams) -> SplitFeatures:
    """
    Add the position table to both halves of the split features.
    """
    r, d = split.X.shape
    if params.position is None:
        P = constant(position_table(r, d), dtype=split.X.dtype)
    else:
        if r > params.position.shape[0]:
            raise ShapeError(
                'add_positions', split.X.shape, params.position.shape,
                detail="more tokens than learned positions")
        P = slice_(params.position, (0, r))

    return SplitFeatures(split.X, split.Y, X_hat=add(split.X, P), Y_hat=add(split.Y, P), P=P)

def upper_triangle_mask(r: int) -> ndarray[np.bool_]:
    """
    Boolean r x r mask, True where y <= x.
    """
    return np.triu(np.ones((r, r), dtype=bool))

def build_matrix(X_hat: Tensor, Y_hat: Tensor) -> GlobalSpanMatrix:
    """
    Build the global-span matrix ``logits[y, x] = (Y_hat[y] . X_hat[x]) / d``
    for y <= x, masking cells with y > x.
    """
    if X_hat.shape != Y_hat.shape or X_hat.ndim != 2:
        raise ShapeError('build_matrix', X_hat.shape, Y_hat.shape)

    r, d = X_hat.shape
    mask = upper_triangle_mask(r)
    scores = scale(matmul(Y_hat, transpose(X_hat)), 1.0 / d)
    return GlobalSpanMatrix(masked_fill(scores, ~mask), mask)

def flatten_matrix(matrix: GlobalSpanMatrix) -> Tensor:
    """
    Row-major flatten; cell (y, x) lands at index ``y * r + x``.
    """
    return flatten(matrix.logits)

def _pad_matrix(logits: Tensor, size: int) -> Tensor:
    r = logits.shape[0]
    if r == size:
        return logits
    if r > size:
        raise ShapeError('pad', logits.shape, detail=f"cannot pad to {size}")

    dtype = logits.dtype
    wide = concat([logits, constant(np.full((r, size - r), SENTINEL), dtype=dtype)], axis=1)
    return concat([wide, constant(np.full((size - r, size), SENTINEL), dtype=dtype)], axis=0)



### Losses

def _check_target(target: tuple[int, int], r: int):
    y, x = target
    if not 0 <= y <= x < r:
        raise SpanError(f"target span point ({y}, {x}) is not a valid cell for r={r}")

def predictor_loss(flat: Tensor, target: tuple[int, int], r: int) -> Tensor:
    """
    Cross-entropy of the flattened logits of one matrix against the gold cell.

    Raises
    ------
    SpanError
        If the target has y > x or lies outside the matrix
    """
    _check_target(target, r)
    if flat.shape != (1, r * r):
        raise ShapeError('predictor_loss', flat.shape, (1, r * r))

    return cross_entropy(flat, SpanPoint(*target).flat_index(r))

def contrastive_concat(
    positive: GlobalSpanMatrix,
    negatives: Sequence[GlobalSpanMatrix],
    target: tuple[int, int],
    pad_to: int | None = None) -> GlobalLogits:
    """
    Concatenate the flattened positive matrix with the flattened negatives.

    Every negative cell is labelled 0; the only positive label is the gold
    cell of the positive matrix.

    Parameters
    ----------
    positive : GlobalSpanMatrix
        Matrix of the gold video
    negatives : Sequence[GlobalSpanMatrix]
        Matrices of the M negative videos
    target : tuple[int, int]
        Gold span point in the positive matrix
    pad_to : int or None
        Pad every matrix to a common side length with sentinel cells
        (defaults to variable-length concatenation)
    """
    _check_target(target, positive.r)
    matrices = [positive, *negatives]

    if pad_to is None:
        segments = [flatten_matrix(m) for m in matrices]
        stride = positive.r
    else:
        segments = [flatten(_pad_matrix(m.logits, pad_to)) for m in matrices]
        stride = pad_to

    offsets = tuple(int(o) for o in np.cumsum([0] + [s.shape[1] for s in segments[:-1]]))
    logits = concat(segments, axis=1) if len(segments) > 1 else segments[0]
    return GlobalLogits(logits, SpanPoint(*target).flat_index(stride), offsets)

def contrastive_loss(global_logits: GlobalLogits) -> Tensor:
    """
    Cross-entropy over the whole concatenation against the gold cell.
    """
    return cross_entropy(global_logits.logits, global_logits.target)

def total_loss(loss1: Tensor, loss2: Tensor) -> Tensor:
    """
    Joint training loss (predictor loss + contrastive loss).
    """
    return add(loss1, loss2)



### Decoding

def decode_span(matrix: GlobalSpanMatrix) -> DecodedSpan:
    """
    Select the highest scoring valid cell, breaking ties by smallest y then smallest x.
    """
    y, x, score = upper_triangle_argmax(matrix.logits.data)
    return DecodedSpan(int(y), int(x), float(score))
