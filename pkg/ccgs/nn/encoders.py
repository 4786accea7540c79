"""
Toy visual and text encoders, and the precomputed visual feature format.

Visual features are one pseudo-frame per ``1 / fps`` seconds, each looked up
in a trainable table at a row chosen by a seeded hash of the video id, the
frame bucket, and the tokens of the subtitle unit showing at that time.

Text features embed each question token and then each subtitle token by a
seeded hash into a trainable table, add a learned projection of a sinusoidal
index signal, and mix all rows with one residual self-attention layer.

Feature file layout (little-endian)::

    b"CCGF" | version u32 | m u32 | d_v u32 | m * d_v float32 (row-major) | m float32 timestamps
"""
from __future__ import annotations

import hashlib
import io
import math
import numpy as np

from dataclasses import dataclass
from numpy.typing import NDArray as ndarray
from pathlib import Path
from typing import Sequence

from .globalspan import position_table
from ..config import EncoderConfig
from ..core.corpus import VideoDoc
from ..core.span_map import SpanLabelMap
from ..errors import CorpusError, FeatureFormatError, ShapeError, SpanError
from ..numcore import (
    ParameterSet,
    Tensor,
    add,
    add_broadcast,
    constant,
    embedding,
    matmul,
    scale,
    slice_,
    softmax,
    transpose,
)

FEATURE_MAGIC = b'CCGF'
FEATURE_VERSION = 1



### Types

@dataclass
class VisualFeatures:
    """
    Raw visual feature sequence of one video.

    Attributes
    ----------
    matrix : Tensor of shape (m, d_v)
        One feature row per pseudo-frame
    timestamps : ndarray[float] of shape (m,)
        Strictly increasing frame times in seconds
    """
    matrix: Tensor
    timestamps: ndarray[np.float64]

    def __post_init__(self):
        assert self.matrix.ndim == 2 and self.matrix.shape[0] >= 1
        assert self.timestamps.shape == (self.matrix.shape[0],)
        assert np.all(np.diff(self.timestamps) > 0)

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def d_v(self) -> int:
        return self.matrix.shape[1]


@dataclass
class TextFeatures:
    """
    Joint question + subtitle feature sequence.

    Attributes
    ----------
    matrix : Tensor of shape (p + r, d)
        Question rows followed by subtitle rows
    p : int
        Number of question tokens
    r : int
        Number of subtitle tokens
    """
    matrix: Tensor
    p: int
    r: int

    @property
    def question(self) -> Tensor:
        return slice_(self.matrix, (0, self.p))

    @property
    def subtitles(self) -> Tensor:
        return slice_(self.matrix, (self.p, self.p + self.r))


@dataclass
class EncoderParams:
    """
    Trainable tensors of the toy encoders.

    Attributes
    ----------
    visual_table : Tensor of shape (visual_buckets, d_v) or None
        Visual lookup table (absent when features are precomputed)
    visual_weight : Tensor of shape (d_v, d)
        Visual projection weight
    visual_bias : Tensor of shape (1, d)
        Visual projection bias
    text_table : Tensor of shape (buckets, d)
        Token embedding table
    position_weight : Tensor of shape (d, d)
        Projection of the sinusoidal index signal
    query, key, value : Tensor of shape (d, d) or None
        Self-attention projections (absent when attention is disabled)
    """
    visual_table: Tensor | None
    visual_weight: Tensor | None
    visual_bias: Tensor | None
    text_table: Tensor
    position_weight: Tensor
    query: Tensor | None = None
    key: Tensor | None = None
    value: Tensor | None = None

    @classmethod
    def create(
        cls,
        params: ParameterSet,
        cfg: EncoderConfig,
        rng: np.random.Generator,
        visual: bool = True) -> 'EncoderParams':
        """
        Register the encoder parameters in a parameter set.

        Parameters
        ----------
        params : ParameterSet
            Parameter set to register into
        cfg : EncoderConfig
            Encoder settings
        rng : np.random.Generator
            Random number generator for initialization
        visual : bool
            Whether to create the visual branch
        """
        d, d_v = cfg.d, cfg.d_v
        visual_table = visual_weight = visual_bias = None
        if visual:
            if cfg.feature_dir is None:
                visual_table = params.add(
                    'visual.table', rng.normal(0.0, 1.0, size=(cfg.visual_buckets, d_v)))
            visual_weight = params.add('visual.proj.weight', rng.normal(0.0, d_v ** -0.5, size=(d_v, d)))
            visual_bias = params.add('visual.proj.bias', np.zeros((1, d)))

        text_table = params.add('text.table', rng.normal(0.0, 1.0, size=(cfg.buckets, d)))
        position_weight = params.add('text.position', 0.1 * np.eye(d))

        query = key = value = None
        if cfg.use_attention:
            query = params.add('text.query', rng.normal(0.0, d ** -0.5, size=(d, d)))
            key = params.add('text.key', rng.normal(0.0, d ** -0.5, size=(d, d)))
            value = params.add('text.value', rng.normal(0.0, 0.1 * d ** -0.5, size=(d, d)))

        return cls(visual_table, visual_weight, visual_bias, text_table, position_weight, query, key, value)



### Hashing

def stable_hash(seed: int, *parts: str | int) -> int:
    """
    Seeded 64-bit hash of a sequence of strings and integers
    (stable across processes and platforms).
    """
    digest = hashlib.blake2b(digest_size=8, key=int(seed).to_bytes(8, 'little'))
    for part in parts:
        digest.update(str(part).encode('utf-8'))
        digest.update(b'\x1f')
    return int.from_bytes(digest.digest(), 'little')

def token_buckets(tokens: Sequence[str], seed: int, buckets: int) -> ndarray[np.int64]:
    """
    Hash tokens into embedding table rows.
    """
    return np.array([stable_hash(seed, 'token', t) % buckets for t in tokens], dtype=np.int64)

def frame_times(duration: float, fps: float) -> ndarray[np.float64]:
    """
    Centre times of the pseudo-frames covering a video.
    """
    m = max(1, math.ceil(duration * fps - 1e-9))
    return (np.arange(m, dtype=np.float64) + 0.5) / fps

def visual_buckets(video: VideoDoc, cfg: EncoderConfig) -> tuple[ndarray[np.int64], ndarray[np.float64]]:
    """
    Return the lookup rows and timestamps of a video's pseudo-frames.
    """
    times = frame_times(video.duration, cfg.fps)
    rows = []
    for bucket, time in enumerate(times):
        unit = video.unit_at(float(time))
        words = ' '.join(unit.tokens) if unit is not None else ''
        rows.append(stable_hash(cfg.seed, 'frame', video.video_id, bucket, words) % cfg.visual_buckets)

    return np.asarray(rows, dtype=np.int64), times



### Encoders

def encode_video_toy(video: VideoDoc, cfg: EncoderConfig, params: EncoderParams) -> VisualFeatures:
    """
    Encode a video as raw (m x d_v) pseudo-frame features.
    The projection to the hidden size is applied by :func:`project_visual`.
    """
    assert params.visual_table is not None, "toy visual encoder requires a lookup table"
    rows, times = visual_buckets(video, cfg)
    return VisualFeatures(embedding(params.visual_table, rows), times)

def project_visual(features: VisualFeatures, params: EncoderParams) -> Tensor:
    """
    Linear projection of raw visual features to the hidden size (m x d).
    """
    matrix = features.matrix
    if matrix.shape[1] != params.visual_weight.shape[0]:
        raise ShapeError('project_visual', matrix.shape, params.visual_weight.shape)
    if matrix.dtype != params.visual_weight.dtype:
        matrix = constant(matrix.data, dtype=params.visual_weight.dtype)

    return add_broadcast(matmul(matrix, params.visual_weight), params.visual_bias)

def self_attention(x: Tensor, params: EncoderParams) -> Tensor:
    """
    Residual single-head self-attention: ``x + softmax(xWq (xWk)^T / sqrt(d)) xWv``.
    """
    d = x.shape[1]
    q, k, v = matmul(x, params.query), matmul(x, params.key), matmul(x, params.value)
    weights = softmax(scale(matmul(q, transpose(k)), 1.0 / math.sqrt(d)), axis=1)
    return add(x, matmul(weights, v))

def encode_text_toy(
    question: Sequence[str],
    span_map: SpanLabelMap,
    video: VideoDoc,
    cfg: EncoderConfig,
    params: EncoderParams) -> TextFeatures:
    """
    Encode question tokens followed by the kept subtitle tokens of a video.

    Parameters
    ----------
    question : Sequence[str]
        Question tokens (p >= 1)
    span_map : SpanLabelMap
        Token layout of the video's subtitles (r >= 1)
    video : VideoDoc
        The video
    cfg : EncoderConfig
        Encoder settings
    params : EncoderParams
        Encoder parameters

    Raises
    ------
    CorpusError
        If the question has no tokens
    SpanError
        If no subtitle tokens remain after truncation
    """
    assert span_map.video_id == video.video_id
    p, r = len(question), span_map.r
    if p < 1:
        raise CorpusError("question has no tokens")
    if r < 1:
        raise SpanError(f"video {video.video_id!r} has no subtitle tokens after truncation")

    table = params.text_table
    ids = token_buckets([*question, *span_map.tokens], cfg.seed, cfg.buckets)
    signal = constant(position_table(p + r, cfg.d), dtype=table.dtype)
    x = add(embedding(table, ids), matmul(signal, params.position_weight))
    if params.query is not None:
        x = self_attention(x, params)

    return TextFeatures(x, p, r)



### Feature Files

def encode_features(matrix: ndarray, timestamps: ndarray) -> bytes:
    """
    Serialize a visual feature matrix and its timestamps.
    """
    matrix = np.asarray(matrix)
    m, d_v = matrix.shape
    stream = io.BytesIO()
    stream.write(FEATURE_MAGIC)
    stream.write(np.array([FEATURE_VERSION, m, d_v], dtype='<u4').tobytes())
    stream.write(np.ascontiguousarray(matrix, dtype='<f4').tobytes())
    stream.write(np.ascontiguousarray(timestamps, dtype='<f4').tobytes())
    return stream.getvalue()

def write_features(path: str | Path, matrix: ndarray, timestamps: ndarray):
    """
    Write a visual feature file.
    """
    Path(path).write_bytes(encode_features(matrix, timestamps))

def decode_features(payload: bytes, expected_d_v: int) -> VisualFeatures:
    """
    Parse a visual feature file.

    Raises
    ------
    FeatureFormatError
        If the header is corrupt, the payload is truncated, the feature size
        differs from ``expected_d_v``, or the timestamps are not increasing
    """
    header = 4 + 3 * 4
    if len(payload) < header or payload[:4] != FEATURE_MAGIC:
        raise FeatureFormatError("not a CCGF feature file (bad magic bytes or header)")

    version, m, d_v = (int(v) for v in np.frombuffer(payload[4:header], dtype='<u4'))
    if version != FEATURE_VERSION:
        raise FeatureFormatError(f"unsupported feature file version {version}")
    if m < 1:
        raise FeatureFormatError("feature file holds no frames")
    if d_v != expected_d_v:
        raise FeatureFormatError(f"feature size {d_v} does not match expected d_v={expected_d_v}")

    expected = header + 4 * (m * d_v + m)
    if len(payload) != expected:
        raise FeatureFormatError(
            f"feature payload has {len(payload)} bytes, expected {expected} for m={m}, d_v={d_v}")

    values = np.frombuffer(payload, dtype='<f4', offset=header)
    matrix = values[:m * d_v].reshape(m, d_v).astype(np.float32)
    timestamps = values[m * d_v:].astype(np.float64)
    if not np.all(np.isfinite(matrix)) or np.any(np.diff(timestamps) <= 0):
        raise FeatureFormatError("feature values must be finite with strictly increasing timestamps")

    return VisualFeatures(constant(matrix, dtype=np.float32), timestamps)

def load_precomputed_features(path: str | Path, expected_d_v: int) -> VisualFeatures:
    """
    Read a visual feature file.
    """
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise FeatureFormatError(f"cannot read feature file {path}: {e}") from None
    return decode_features(payload, expected_d_v)
