"""
Model layers: toy encoders, cross-modal fusion, and the global-span matrix.
"""

from .encoders import (
    EncoderParams,
    TextFeatures,
    VisualFeatures,
    encode_text_toy,
    encode_video_toy,
    load_precomputed_features,
    project_visual,
    write_features,
)
from .fusion import (
    FusionOutput,
    FusionParams,
    context_query_attention,
    context_query_concat,
    cross_modal_fusion,
    elementwise_fuse,
    frame_pool,
    visual_condense,
)
from .globalspan import (
    DecodedSpan,
    GlobalLogits,
    GlobalSpanMatrix,
    SpanParams,
    SplitFeatures,
    add_positions,
    build_matrix,
    contrastive_concat,
    contrastive_loss,
    decode_span,
    es_layer,
    flatten_matrix,
    position_table,
    predictor_loss,
    total_loss,
)
