"""
Minimal dense-tensor numerical core: tape-based reverse-mode differentiation,
an AdamW optimizer over named parameter sets, and the checkpoint codec.
"""

from .checkpoint import (
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    restore_into,
    save_checkpoint,
)
from .optim import ParameterSet, adamw_step
from .tensor import (
    Node,
    Tape,
    Tensor,
    active_tape,
    add,
    add_broadcast,
    check_gradients,
    concat,
    constant,
    cross_entropy,
    dropout,
    embedding,
    expand_rows,
    flatten,
    masked_fill,
    matmul,
    mean,
    mul,
    mul_broadcast,
    numerical_gradient,
    relative_error,
    relu,
    scale,
    slice_,
    softmax,
    sub,
    sum_,
    transpose,
    zeros,
)
