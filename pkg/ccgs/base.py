from __future__ import annotations

import logging
import numpy as np

from pathlib import Path
from typing import Iterable, Sequence

from .config import EncoderConfig, ModelConfig, RunConfig
from .core.constants import REFERENCE_MAX_LENGTH, Precision
from .core.corpus import TimeInterval, VideoDoc
from .core.span_map import SpanLabelMap, build_span_label_map, span_to_time
from .nn.encoders import (
    EncoderParams,
    TextFeatures,
    VisualFeatures,
    encode_text_toy,
    encode_video_toy,
    load_precomputed_features,
    project_visual,
)
from .nn.fusion import FusionParams, cross_modal_fusion
from .nn.globalspan import (
    DecodedSpan,
    GlobalSpanMatrix,
    SpanParams,
    add_positions,
    build_matrix,
    decode_span,
    es_layer,
)
from .numcore import ParameterSet, restore_into
from .utils.random import derive_seed, np_random

logger = logging.getLogger(__name__)



### Model

class CCGSModel:
    """
    End-to-end question-video scorer.

    For one question and one video the model encodes the video frames and the
    joint question + subtitle tokens, fuses the condensed visual features into
    the subtitle features, and builds the r x r global-span matrix of the video.

    :Parameters:

        All trainable tensors live in one :class:`.ParameterSet`
        (``model.params``), shared by every video a question is scored
        against. Parameters are grouped by prefix:

            * ``visual.*`` : visual lookup table and projection
            * ``text.*`` : token embeddings, position projection, self-attention
            * ``fusion.*`` : context-query attention, concatenation, condensation
            * ``span.*`` : split linear layer (and learned positions)

    Attributes
    ----------
    encoder_config : EncoderConfig
        Encoder settings
    model_config : ModelConfig
        Fusion and global-span settings
    max_length : int
        Maximum number of subtitle tokens per video
    params : ParameterSet
        Trainable parameters

    Examples
    --------
    >>> model = CCGSModel(EncoderConfig(d=8, d_v=4, buckets=32, visual_buckets=16))
    >>> model.params.names()[:3]
    ['visual.table', 'visual.proj.weight', 'visual.proj.bias']
    """

    def __init__(
        self,
        encoder_config: EncoderConfig | None = None,
        model_config: ModelConfig | None = None,
        max_length: int = REFERENCE_MAX_LENGTH):
        """
        Parameters
        ----------
        encoder_config : EncoderConfig
            Encoder settings (the encoder seed also seeds parameter initialization)
        model_config : ModelConfig
            Fusion and global-span settings
        max_length : int
            Maximum number of subtitle tokens per video
        """
        self.encoder_config = encoder_config or EncoderConfig()
        self.model_config = model_config or ModelConfig()
        self.max_length = int(max_length)

        dtype = np.float64 if self.model_config.precision == Precision.float64 else np.float32
        self.params = ParameterSet(dtype)

        d = self.encoder_config.d
        rng = np_random(derive_seed(self.encoder_config.seed, 0))
        use_fusion = self.model_config.use_fusion
        self.encoder_params = EncoderParams.create(
            self.params, self.encoder_config, rng, visual=use_fusion)
        self.fusion_params = None
        if use_fusion:
            self.fusion_params = FusionParams.create(
                self.params, d, rng, similarity=self.model_config.similarity)
        self.span_params = SpanParams.create(
            self.params, d, rng,
            position_form=self.model_config.position_form,
            max_length=self.max_length,
        )

        self._span_maps: dict[str, tuple[VideoDoc, SpanLabelMap]] = {}
        self._visual: dict[str, tuple[VideoDoc, VisualFeatures]] = {}

    @classmethod
    def from_config(cls, config: RunConfig) -> 'CCGSModel':
        """
        Create a freshly initialized model from a run configuration.
        """
        return cls(config.encoder, config.model, config.train.max_length)

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(d={self.encoder_config.d}, "
            f"params={self.params.num_values()}, step={self.params.step})"
        )

    @property
    def dtype(self) -> np.dtype:
        return self.params.dtype

    def load_state(self, state: ParameterSet):
        """
        Copy parameter values and optimizer state from a checkpoint.
        """
        restore_into(self.params, state)

    ### Inputs

    def span_map(self, video: VideoDoc) -> SpanLabelMap:
        """
        Return the (cached) span-label map of a video.
        """
        cached = self._span_maps.get(video.video_id)
        if cached is None or cached[0] is not video:
            cached = (video, build_span_label_map(video, self.max_length))
            self._span_maps[video.video_id] = cached

        return cached[1]

    def visual_features(self, video: VideoDoc) -> VisualFeatures:
        """
        Return the raw visual features of a video, from the toy encoder
        or from its precomputed feature file.
        """
        cfg = self.encoder_config
        if cfg.feature_dir is None:
            return encode_video_toy(video, cfg, self.encoder_params)

        cached = self._visual.get(video.video_id)
        if cached is None or cached[0] is not video:
            path = Path(cfg.feature_dir) / f"{video.video_id}.ccgf"
            cached = (video, load_precomputed_features(path, cfg.d_v))
            logger.debug("Loaded %d precomputed frames for video %s", cached[1].m, video.video_id)
            self._visual[video.video_id] = cached

        return cached[1]

    def text_features(self, question: Sequence[str], video: VideoDoc) -> TextFeatures:
        """
        Encode a tokenized question together with a video's subtitles.
        """
        return encode_text_toy(
            question, self.span_map(video), video, self.encoder_config, self.encoder_params)

    def prepare(self, videos: Iterable[VideoDoc]):
        """
        Build the span-label maps (and load any precomputed features) of
        every video ahead of concurrent inference.
        """
        for video in videos:
            self.span_map(video)
            if self.encoder_config.feature_dir is not None:
                self.visual_features(video)

    ### Forward

    def score_matrix(
        self,
        question: Sequence[str],
        video: VideoDoc,
        train: bool = False,
        seed: int | None = None) -> GlobalSpanMatrix:
        """
        Build the global-span matrix of a video for a question.

        Parameters
        ----------
        question : Sequence[str]
            Question tokens
        video : VideoDoc
            Candidate video
        train : bool
            Whether dropout is active
        seed : int or None
            Seed of the dropout mask
        """
        text = self.text_features(question, video)
        if self.fusion_params is not None:
            V = project_visual(self.visual_features(video), self.encoder_params)
            fused = cross_modal_fusion(
                V, text.matrix, text.p, self.fusion_params,
                train=train, seed=seed, dropout_p=self.model_config.dropout,
            ).fused
        else:
            fused = text.subtitles

        split = add_positions(es_layer(fused, self.span_params), self.span_params)
        return build_matrix(split.X_hat, split.Y_hat)

    def localize(self, question: Sequence[str], video: VideoDoc) -> tuple[DecodedSpan, TimeInterval]:
        """
        Decode the best span of a video for a question (inference mode).

        Returns
        -------
        span : DecodedSpan
            Winning cell and its logit
        interval : TimeInterval
            Time interval of the winning cell
        """
        span = decode_span(self.score_matrix(question, video))
        return span, span_to_time(self.span_map(video), span.point)
