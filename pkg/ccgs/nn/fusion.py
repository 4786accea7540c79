"""
Cross-modal fusion of visual frames and question tokens into the subtitle features.

Shape pipeline::

    V (m x d), T_Q (p x d)
      -> context_query_attention -> V'   (m x d)
      -> context_query_concat    -> V''  (m x d)
      -> visual_condense         -> V''' (1 x d)
      -> elementwise_fuse        -> T_bar (r x d)
"""
from __future__ import annotations

import math
import numpy as np

from dataclasses import dataclass

from ..core.constants import DROPOUT_P, Similarity
from ..errors import ShapeError
from ..numcore import (
    ParameterSet,
    Tensor,
    add,
    add_broadcast,
    concat,
    constant,
    dropout,
    expand_rows,
    matmul,
    mean,
    mul,
    mul_broadcast,
    relu,
    scale,
    slice_,
    softmax,
    transpose,
)



### Parameters

@dataclass
class FusionParams:
    """
    Trainable tensors of the fusion pipeline.

    Attributes
    ----------
    similarity : Similarity
        Context-query similarity function
    trilinear : tuple[Tensor, Tensor, Tensor] or None
        Trilinear similarity weights (w_v, w_q, w_vq), each of shape (d, 1), (d, 1), (1, d)
    ffn_weight : Tensor of shape (4d, d)
        Context-query attention feed-forward weight
    ffn_bias : Tensor of shape (1, d)
        Context-query attention feed-forward bias
    concat_weight : Tensor of shape (2d, d)
        Kernel-1 convolution weight of the context-query concatenation
    concat_bias : Tensor of shape (1, d)
        Kernel-1 convolution bias of the context-query concatenation
    condense_weight : Tensor of shape (d, 1)
        Frame scoring weight of the visual condensation
    condense_bias : Tensor of shape (1, 1)
        Frame scoring bias
    condense_out_bias : Tensor of shape (1, d)
        Output bias of the visual condensation
    """
    similarity: Similarity
    trilinear: tuple[Tensor, Tensor, Tensor] | None
    ffn_weight: Tensor
    ffn_bias: Tensor
    concat_weight: Tensor
    concat_bias: Tensor
    condense_weight: Tensor
    condense_bias: Tensor
    condense_out_bias: Tensor

    @classmethod
    def create(
        cls,
        params: ParameterSet,
        d: int,
        rng: np.random.Generator,
        similarity: Similarity = Similarity.dot) -> 'FusionParams':
        """
        Register the fusion parameters in a parameter set.
        """
        similarity = Similarity.parse(similarity)
        trilinear = None
        if similarity == Similarity.trilinear:
            trilinear = (
                params.add('fusion.similarity.visual', rng.normal(0.0, d ** -0.5, size=(d, 1))),
                params.add('fusion.similarity.query', rng.normal(0.0, d ** -0.5, size=(d, 1))),
                params.add('fusion.similarity.product', rng.normal(0.0, d ** -0.5, size=(1, d))),
            )

        return cls(
            similarity=similarity,
            trilinear=trilinear,
            ffn_weight=params.add('fusion.ffn.weight', rng.normal(0.0, (4 * d) ** -0.5, size=(4 * d, d))),
            ffn_bias=params.add('fusion.ffn.bias', np.zeros((1, d))),
            concat_weight=params.add('fusion.concat.weight', rng.normal(0.0, (2 * d) ** -0.5, size=(2 * d, d))),
            concat_bias=params.add('fusion.concat.bias', np.zeros((1, d))),
            condense_weight=params.add('fusion.condense.weight', rng.normal(0.0, d ** -0.5, size=(d, 1))),
            condense_bias=params.add('fusion.condense.bias', np.zeros((1, 1))),
            condense_out_bias=params.add('fusion.condense.out_bias', np.zeros((1, d))),
        )


@dataclass
class FusionOutput:
    """
    Result of the fusion pipeline.

    Attributes
    ----------
    fused : Tensor of shape (r, d)
        Subtitle features with the condensed visual features added
    condensed : Tensor of shape (1, d) or None
        Condensed visual features
    """
    fused: Tensor
    condensed: Tensor | None = None



### Fusion Operations

def _check_hidden(op: str, V: Tensor, T_Q: Tensor):
    if V.ndim != 2 or T_Q.ndim != 2 or V.shape[1] != T_Q.shape[1]:
        raise ShapeError(op, V.shape, T_Q.shape, detail="hidden sizes differ")

def similarity_matrix(V: Tensor, T_Q: Tensor, params: FusionParams) -> Tensor:
    """
    Context-query similarity S (m x p).

    The dot form is ``V T_Q^T / sqrt(d)``; the trilinear form is
    ``S[i, j] = w_v . V[i] + w_q . T_Q[j] + w_vq . (V[i] * T_Q[j])``.
    """
    _check_hidden('similarity', V, T_Q)
    (m, d), p = V.shape, T_Q.shape[0]

    if params.similarity == Similarity.dot:
        return scale(matmul(V, transpose(T_Q)), 1.0 / math.sqrt(d))

    w_v, w_q, w_vq = params.trilinear
    ones_m = constant(np.ones((m, 1)), dtype=V.dtype)
    ones_p = constant(np.ones((1, p)), dtype=V.dtype)
    visual_term = matmul(matmul(V, w_v), ones_p)
    query_term = matmul(ones_m, transpose(matmul(T_Q, w_q)))
    product_term = matmul(mul_broadcast(V, w_vq), transpose(T_Q))
    return add(add(visual_term, query_term), product_term)

def context_query_attention(V: Tensor, T_Q: Tensor, params: FusionParams) -> Tensor:
    """
    Context-query attention.

    With S_r the row-wise and S_c the column-wise softmax of the similarity S,
    ``A = S_r T_Q`` and ``B = S_c S_r^T V``, and the output is
    ``relu([V; A; V * A; V * B] W + b)``.

    Parameters
    ----------
    V : Tensor of shape (m, d)
        Projected visual features
    T_Q : Tensor of shape (p, d)
        Question features
    params : FusionParams
        Fusion parameters

    Returns
    -------
    V_prime : Tensor of shape (m, d)
    """
    S = similarity_matrix(V, T_Q, params)
    S_r = softmax(S, axis=1)
    S_c = softmax(S, axis=0)

    A = matmul(S_r, T_Q)
    B = matmul(matmul(S_c, transpose(S_r)), V)
    features = concat([V, A, mul(V, A), mul(V, B)], axis=1)
    return relu(add_broadcast(matmul(features, params.ffn_weight), params.ffn_bias))

def context_query_concat(V_prime: Tensor, T_Q: Tensor, params: FusionParams) -> Tensor:
    """
    Context-query concatenation: attend from frames to the question,
    concatenate with the mean question row, then apply a kernel-1
    convolution from 2d to d channels.

    Returns
    -------
    V_double_prime : Tensor of shape (m, d)
    """
    _check_hidden('context_query_concat', V_prime, T_Q)
    m, d = V_prime.shape

    weights = softmax(scale(matmul(V_prime, transpose(T_Q)), 1.0 / math.sqrt(d)), axis=1)
    attended = matmul(weights, T_Q)
    pooled = expand_rows(mean(T_Q, axis=0), m)
    features = concat([attended, pooled], axis=1)
    return add_broadcast(matmul(features, params.concat_weight), params.concat_bias)

def frame_pool(V: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """
    Weighted combination across frames: ``out[k] = sum_i weights[i] * V[i, k] + bias[k]``.

    Parameters
    ----------
    V : Tensor of shape (m, d)
        Frame features
    weights : Tensor of shape (m, 1)
        Frame weights
    bias : Tensor of shape (1, d)
        Output bias
    """
    if weights.shape != (V.shape[0], 1):
        raise ShapeError('frame_pool', V.shape, weights.shape)
    return add(matmul(transpose(weights), V), bias)

def visual_condense(
    V_double_prime: Tensor,
    params: FusionParams,
    train: bool,
    seed: int | None = None,
    p: float = DROPOUT_P) -> Tensor:
    """
    Condense frame features to one row: dropout, then a softmax-normalized
    learned weighting across frames.

    The frame count varies between videos, so the per-frame weights ``w_i``
    are scored from the frames themselves rather than stored one per frame.
    The combination ``sum_i w_i * V''[i, k] + b_k`` itself is :func:`frame_pool`,
    which also takes fixed weights (uniform ``1/m`` gives column means,
    one-hot picks a single frame).

    Returns
    -------
    V_triple_prime : Tensor of shape (1, d)
    """
    x = dropout(V_double_prime, p, train=train, seed=seed)
    scores = add_broadcast(matmul(x, params.condense_weight), params.condense_bias)
    weights = softmax(scores, axis=0)
    return frame_pool(x, weights, params.condense_out_bias)

def elementwise_fuse(V_triple_prime: Tensor, T: Tensor, p: int) -> Tensor:
    """
    Add the condensed visual row to every subtitle row: ``T[p:] + V'''``.

    Raises
    ------
    ShapeError
        If ``T`` has no rows after the first ``p``
    """
    rows = T.shape[0]
    if not 0 <= p < rows:
        raise ShapeError('elementwise_fuse', T.shape, detail=f"question length {p} leaves no subtitle rows")
    return add_broadcast(slice_(T, (p, rows)), V_triple_prime)

def cross_modal_fusion(
    V: Tensor,
    T: Tensor,
    p: int,
    params: FusionParams,
    train: bool = False,
    seed: int | None = None,
    dropout_p: float = DROPOUT_P) -> FusionOutput:
    """
    Run the full fusion pipeline on projected visual features and joint text features.
    """
    T_Q = slice_(T, (0, p))
    V_prime = context_query_attention(V, T_Q, params)
    V_double_prime = context_query_concat(V_prime, T_Q, params)
    V_triple_prime = visual_condense(V_double_prime, params, train=train, seed=seed, p=dropout_p)
    return FusionOutput(elementwise_fuse(V_triple_prime, T, p), V_triple_prime)
