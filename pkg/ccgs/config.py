"""
*************
Configuration
*************

Run settings are grouped into one dataclass per concern and collected in
:class:`RunConfig`. Every field is addressable by a dotted path
(``section.field``), which is how command-line overrides are written::

    >>> config = RunConfig().with_overrides(['encoder.d=32', 'train.lr=0.001'])
    >>> config.encoder.d, config.train.lr
    (32, 0.001)

**************
Configurations
**************

Named presets, applied on top of the defaults:

* ``CCGS-Desk`` (desk-scale defaults)
* ``CCGS-Reference`` (reference hyperparameters: d = 768, lr = 1e-5, M = 1, batch size 2)
* ``CCGS-Overfit`` (small synthetic overfitting run)
* ``CCGS-NoFusion`` (no element-wise visual fusion)
* ``CCGS-NoContrastive`` (span predictor loss only)
* ``CCGS-NoPredictor`` (contrastive loss only)
"""
from __future__ import annotations

import dataclasses
import json

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .core.constants import (
    BM25_B,
    BM25_K1,
    DROPOUT_P,
    IOU_THRESHOLDS,
    RANK_KS,
    RECALL_KS,
    REFERENCE_BATCH_SIZE,
    REFERENCE_HIDDEN_SIZE,
    REFERENCE_LEARNING_RATE,
    REFERENCE_MAX_LENGTH,
    REFERENCE_NUM_NEGATIVES,
    REFERENCE_SPLIT_SIZES,
    EvalMode,
    NegativeStrategy,
    PositionForm,
    Precision,
    RankIoU,
    Similarity,
)
from .errors import ConfigError
from .utils.enum import IndexedEnum



### Helper Functions

def _check(condition: bool, message: str):
    if not condition:
        raise ConfigError(message)

def _positive_ints(values: Iterable[Any], name: str) -> tuple[int, ...]:
    values = tuple(int(v) for v in values)
    _check(len(values) > 0 and all(v >= 1 for v in values), f"{name} must be positive integers")
    return values



### Sections

@dataclass
class EncoderConfig:
    """
    Settings of the toy visual and text encoders.

    Attributes
    ----------
    d : int
        Hidden size
    d_v : int
        Raw visual feature size
    buckets : int
        Number of hashing buckets of the token vocabulary
    visual_buckets : int
        Number of rows of the visual lookup table
    fps : float
        Pseudo-frames per second of video
    seed : int
        Seed of the hash functions and parameter initialization
    use_attention : bool
        Whether the text encoder applies its self-attention mixing layer
    feature_dir : str or None
        Directory of precomputed ``<video_id>.ccgf`` visual feature files
        (replaces the toy visual lookup when set)
    """
    d: int = 64
    d_v: int = 32
    buckets: int = 4096
    visual_buckets: int = 1024
    fps: float = 1.0
    seed: int = 0
    use_attention: bool = True
    feature_dir: str | None = None

    def __post_init__(self):
        _check(self.d >= 2, f"encoder.d must be at least 2, got {self.d}")
        _check(self.d_v >= 2, f"encoder.d_v must be at least 2, got {self.d_v}")
        _check(self.buckets >= 1, "encoder.buckets must be positive")
        _check(self.visual_buckets >= 1, "encoder.visual_buckets must be positive")
        _check(self.fps > 0, f"encoder.fps must be positive, got {self.fps}")
        _check(self.seed >= 0, "encoder.seed must be non-negative")


@dataclass
class ModelConfig:
    """
    Settings of the fusion and global-span layers.

    Attributes
    ----------
    similarity : Similarity
        Context-query similarity function
    position_form : PositionForm
        Form of the span position embedding
    dropout : float
        Dropout rate applied before visual condensation
    use_fusion : bool
        Whether condensed visual features are added to subtitle features
    precision : Precision
        Floating point precision of parameters and activations
    """
    similarity: Similarity = Similarity.dot
    position_form: PositionForm = PositionForm.sinusoid
    dropout: float = DROPOUT_P
    use_fusion: bool = True
    precision: Precision = Precision.float64

    def __post_init__(self):
        self.similarity = Similarity.parse(self.similarity)
        self.position_form = PositionForm.parse(self.position_form)
        self.precision = Precision.parse(self.precision)
        _check(0.0 <= self.dropout < 1.0, f"model.dropout must be in [0, 1), got {self.dropout}")


@dataclass
class TrainConfig:
    """
    Settings of the optimization loop.

    Attributes
    ----------
    lr : float
        AdamW learning rate
    num_negatives : int
        Number of negative videos per question (M)
    batch_size : int
        Number of questions per step
    steps : int
        Number of optimizer steps
    max_length : int
        Maximum number of subtitle tokens per video
    seed : int
        Seed of batch sampling and dropout
    negative_strategy : NegativeStrategy
        How negative videos are drawn
    weight_decay : float
        Decoupled weight decay
    beta1, beta2, eps : float
        AdamW moment decay rates and denominator offset
    eval_every : int
        Validation period in steps (0 = only after the last step)
    log_every : int
        Progress logging period in steps
    use_contrastive : bool
        Whether the cross-video contrastive loss is trained
    use_predictor : bool
        Whether the single-video span predictor loss is trained
    pad_negatives : bool
        Whether every matrix of the contrastive concatenation is padded to a
        common side length with sentinel cells
    """
    lr: float = 1e-3
    num_negatives: int = REFERENCE_NUM_NEGATIVES
    batch_size: int = REFERENCE_BATCH_SIZE
    steps: int = 500
    max_length: int = REFERENCE_MAX_LENGTH
    seed: int = 0
    negative_strategy: NegativeStrategy = NegativeStrategy.uniform
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 100
    log_every: int = 50
    use_contrastive: bool = True
    use_predictor: bool = True
    pad_negatives: bool = False

    def __post_init__(self):
        self.negative_strategy = NegativeStrategy.parse(self.negative_strategy)
        _check(self.lr > 0, f"train.lr must be positive, got {self.lr}")
        _check(self.num_negatives >= 0, "train.num_negatives must be non-negative")
        _check(self.batch_size >= 1, "train.batch_size must be at least 1")
        _check(self.steps >= 0, "train.steps must be non-negative")
        _check(self.max_length >= 1, "train.max_length must be positive")
        _check(self.seed >= 0, "train.seed must be non-negative")
        _check(self.eval_every >= 0, "train.eval_every must be non-negative")
        _check(self.log_every >= 1, "train.log_every must be positive")
        _check(0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0, "train.beta1/beta2 must be in [0, 1)")
        _check(
            self.use_contrastive or self.use_predictor,
            "at least one of train.use_contrastive and train.use_predictor must be enabled",
        )


@dataclass
class EvalConfig:
    """
    Settings of corpus-level evaluation.

    Attributes
    ----------
    mode : EvalMode
        Ranking and localization pipeline
    rank_ks : tuple[int, ...]
        Rank cut-offs of the localization metrics
    recall_ks : tuple[int, ...]
        Cut-offs of the retrieval recall metrics
    thresholds : tuple[float, ...]
        IoU thresholds
    rank_iou : RankIoU
        Which span a Rank@k IoU reads (the gold video's, or the best in the top k)
    workers : int
        Number of worker threads ranking questions
    bm25_k1, bm25_b : float
        Okapi BM25 parameters
    """
    mode: EvalMode = EvalMode.ccgs
    rank_ks: tuple[int, ...] = RANK_KS
    recall_ks: tuple[int, ...] = RECALL_KS
    thresholds: tuple[float, ...] = IOU_THRESHOLDS
    rank_iou: RankIoU = RankIoU.gold
    workers: int = 1
    bm25_k1: float = BM25_K1
    bm25_b: float = BM25_B

    def __post_init__(self):
        self.mode = EvalMode.parse(self.mode)
        self.rank_iou = RankIoU.parse(self.rank_iou)
        self.rank_ks = _positive_ints(self.rank_ks, 'eval.rank_ks')
        self.recall_ks = _positive_ints(self.recall_ks, 'eval.recall_ks')
        self.thresholds = tuple(float(t) for t in self.thresholds)
        _check(all(0.0 <= t <= 1.0 for t in self.thresholds), "eval.thresholds must be in [0, 1]")
        _check(self.workers >= 1, "eval.workers must be at least 1")
        _check(self.bm25_k1 >= 0 and 0.0 <= self.bm25_b <= 1.0, "invalid BM25 parameters")


@dataclass
class SynthConfig:
    """
    Settings of the synthetic corpus generator.

    Attributes
    ----------
    n_videos : int
        Number of videos
    units_per_video : int
        Number of subtitle units per video
    tokens_per_unit : int
        Number of tokens per subtitle unit
    vocab_size : int
        Vocabulary size (topic, marker and filler tokens)
    n_questions : int
        Number of questions
    unit_seconds : float
        Duration of each subtitle unit
    max_answer_units : int
        Maximum number of units in an answer span
    n_distractors : int
        Number of filler tokens appended to each question
    split_sizes : tuple[int, int, int]
        Relative train / val / test proportions of the question split
    """
    n_videos: int = 16
    units_per_video: int = 12
    tokens_per_unit: int = 4
    vocab_size: int = 256
    n_questions: int = 32
    unit_seconds: float = 2.0
    max_answer_units: int = 3
    n_distractors: int = 2
    split_sizes: tuple[int, int, int] = REFERENCE_SPLIT_SIZES

    def __post_init__(self):
        self.split_sizes = tuple(int(s) for s in self.split_sizes)
        _check(self.n_videos >= 2, f"synth.n_videos must be at least 2, got {self.n_videos}")
        _check(self.units_per_video >= 2, "synth.units_per_video must be at least 2")
        _check(self.tokens_per_unit >= 3, "synth.tokens_per_unit must be at least 3")
        _check(self.n_questions >= 1, "synth.n_questions must be positive")
        _check(self.unit_seconds > 0, "synth.unit_seconds must be positive")
        _check(self.max_answer_units >= 1, "synth.max_answer_units must be positive")
        _check(self.n_distractors >= 0, "synth.n_distractors must be non-negative")
        _check(
            len(self.split_sizes) == 3 and all(s >= 0 for s in self.split_sizes)
            and sum(self.split_sizes) > 0,
            "synth.split_sizes must be three non-negative proportions",
        )



### Run Configuration

_SECTIONS = {
    'encoder': EncoderConfig,
    'model': ModelConfig,
    'train': TrainConfig,
    'eval': EvalConfig,
    'synth': SynthConfig,
}


def _plain(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, IndexedEnum):
        return value.value
    return value


@dataclass
class RunConfig:
    """
    Complete settings of one run.
    """
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def to_dict(self) -> dict[str, dict[str, Any]]:
        """
        Return a JSON-compatible nested dictionary.
        """
        return {
            name: {f.name: _plain(getattr(section, f.name)) for f in dataclasses.fields(section)}
            for name, section in ((name, getattr(self, name)) for name in _SECTIONS)
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'RunConfig':
        """
        Build a configuration from a nested dictionary, rejecting unknown keys.

        Raises
        ------
        ConfigError
            On unknown sections, unknown fields, or invalid values
        """
        if not isinstance(data, Mapping):
            raise ConfigError(f"configuration must be an object, got {type(data).__name__}")

        unknown = sorted(set(data) - set(_SECTIONS))
        if unknown:
            raise ConfigError(f"unknown configuration sections: {', '.join(unknown)}")

        sections = {}
        for name, section_cls in _SECTIONS.items():
            values = data.get(name, {})
            if not isinstance(values, Mapping):
                raise ConfigError(f"configuration section {name!r} must be an object")
            known = {f.name for f in dataclasses.fields(section_cls)}
            unknown = sorted(set(values) - known)
            if unknown:
                raise ConfigError(
                    f"unknown keys in section {name!r}: {', '.join(unknown)} "
                    f"(expected: {', '.join(sorted(known))})")
            try:
                sections[name] = section_cls(**values)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"invalid value in section {name!r}: {e}") from None

        return cls(**sections)

    @classmethod
    def load(cls, path: str | Path) -> 'RunConfig':
        """
        Read a JSON configuration file.
        """
        try:
            data = json.loads(Path(path).read_text(encoding='utf-8'))
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed config {path}: {e}") from None
        return cls.from_dict(data)

    def with_overrides(self, overrides: Iterable[str]) -> 'RunConfig':
        """
        Return a copy with ``section.field=value`` overrides applied.
        Values are parsed as JSON, falling back to the raw string.
        """
        data = self.to_dict()
        for override in overrides:
            path, sep, raw = override.partition('=')
            section, dot, name = path.strip().partition('.')
            if not sep or not dot or not name:
                raise ConfigError(f"override must look like 'section.field=value', got {override!r}")
            if section not in data:
                raise ConfigError(f"unknown configuration section {section!r} in {override!r}")
            if name not in data[section]:
                raise ConfigError(f"unknown key {path.strip()!r} in override {override!r}")
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            data[section][name] = value

        return RunConfig.from_dict(data)

    def with_preset(self, name: str) -> 'RunConfig':
        """
        Return a copy with a named preset applied.
        """
        if name not in CONFIGURATIONS:
            raise ConfigError(
                f"unknown preset {name!r} (expected one of: {', '.join(CONFIGURATIONS)})")
        data = self.to_dict()
        for section, values in CONFIGURATIONS[name].items():
            data[section].update(values)
        return RunConfig.from_dict(data)


CONFIGURATIONS: dict[str, dict[str, dict[str, Any]]] = {
    'CCGS-Desk': {},
    'CCGS-Reference': {
        'encoder': {'d': REFERENCE_HIDDEN_SIZE},
        'train': {
            'lr': REFERENCE_LEARNING_RATE,
            'num_negatives': REFERENCE_NUM_NEGATIVES,
            'batch_size': REFERENCE_BATCH_SIZE,
            'max_length': REFERENCE_MAX_LENGTH,
        },
    },
    'CCGS-Overfit': {
        'encoder': {'d': 32, 'buckets': 512, 'visual_buckets': 256},
        'train': {'lr': 1e-3, 'num_negatives': 1, 'steps': 500, 'eval_every': 0},
    },
    'CCGS-NoFusion': {'model': {'use_fusion': False}},
    'CCGS-NoContrastive': {'train': {'use_contrastive': False}},
    'CCGS-NoPredictor': {'train': {'use_predictor': False}},
}
