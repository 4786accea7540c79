"""
Joint end-to-end training.

Each step draws a batch of questions, scores the gold video and ``M`` negative
videos of every question with the same parameters, and minimizes

    Loss = Loss_1 + Loss_2

where ``Loss_1`` is the cross-entropy of the gold cell within the gold video's
flattened global-span matrix and ``Loss_2`` the cross-entropy of the gold cell
within the concatenation of the gold and negative matrices. Both are averaged
over the batch.

Every random draw of step ``t`` is seeded by ``derive_seed(seed, t)``, so a run
resumed from a checkpoint taken after step ``t`` continues exactly as the
uninterrupted run would.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import numpy as np

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .base import CCGSModel
from .bm25 import Bm25Index, bm25_build, bm25_rank
from .config import RunConfig, TrainConfig
from .core.constants import EvalMode, NegativeStrategy
from .core.corpus import CorpusSplit, QAInstance, VideoDoc
from .core.span_map import SpanLabelMap, SpanPoint, build_span_label_map, time_to_span
from .errors import ConfigError, CorpusError, SpanError
from .evaluation import evaluate
from .nn.globalspan import (
    contrastive_concat,
    contrastive_loss,
    flatten_matrix,
    predictor_loss,
    total_loss,
)
from .numcore import ParameterSet, Tape, Tensor, add, adamw_step, scale
from .utils.random import RandomMixin, derive_seed, np_random

logger = logging.getLogger(__name__)



### Batches

@dataclass(frozen=True)
class TrainingExample:
    """
    A training question with its gold video and gold span point.
    """
    qa: QAInstance
    positive: VideoDoc
    target: SpanPoint


@dataclass(frozen=True)
class TrainingItem:
    """
    One batch entry: a question, its gold video, its negatives and its gold span point.

    Attributes
    ----------
    qa : QAInstance
        Training question
    positive : VideoDoc
        Gold video
    negatives : tuple[VideoDoc, ...]
        Negative videos (never the gold video)
    target : SpanPoint
        Gold cell in the gold video's span-label map
    """
    qa: QAInstance
    positive: VideoDoc
    negatives: tuple[VideoDoc, ...]
    target: SpanPoint

    def __post_init__(self):
        assert all(v.video_id != self.positive.video_id for v in self.negatives)
        assert len({v.video_id for v in self.negatives}) == len(self.negatives)
        assert 0 <= self.target.y <= self.target.x


@dataclass(frozen=True)
class TrainingBatch:
    """
    Questions of one optimizer step.

    Attributes
    ----------
    items : tuple[TrainingItem, ...]
        Batch entries
    seed : int
        Seed of the step's dropout masks
    """
    items: tuple[TrainingItem, ...]
    seed: int

    def __len__(self) -> int:
        return len(self.items)


def prepare_examples(
    split: CorpusSplit,
    max_length: int,
    span_map: Callable[[VideoDoc], SpanLabelMap] | None = None) -> list[TrainingExample]:
    """
    Resolve the gold span point of every question of a split.

    Questions whose gold video is missing or whose answer lies beyond the
    kept subtitle tokens are excluded with a warning.

    Parameters
    ----------
    split : CorpusSplit
        Training split
    max_length : int
        Maximum number of subtitle tokens per video
    span_map : Callable(VideoDoc) -> SpanLabelMap, optional
        Span-label map provider (defaults to building one per call)
    """
    if span_map is None:
        span_map = lambda video: build_span_label_map(video, max_length)

    examples, excluded = [], []
    for qa in split.qa:
        video = split.videos.get(qa.video_id)
        if video is None:
            excluded.append(qa.question_id)
            continue
        try:
            target = time_to_span(span_map(video), qa.answer)
        except SpanError:
            excluded.append(qa.question_id)
            continue
        examples.append(TrainingExample(qa, video, target))

    if excluded:
        logger.warning(
            "Excluded %d of %d training questions with unmappable answers: %s",
            len(excluded), len(split.qa), ', '.join(excluded[:10]),
        )

    return examples


class BatchSampler(RandomMixin):
    """
    Draws training batches from a fixed set of examples.

    Negatives are drawn without replacement among the other videos of the
    corpus, either uniformly or as the top BM25-ranked wrong videos.
    """

    def __init__(
        self,
        videos: dict[str, VideoDoc],
        examples: Sequence[TrainingExample],
        cfg: TrainConfig,
        seed: int,
        index: Bm25Index | None = None):
        """
        Parameters
        ----------
        videos : dict[str, VideoDoc]
            Candidate videos
        examples : Sequence[TrainingExample]
            Training examples
        cfg : TrainConfig
            Training settings
        seed : int
            Seed of this batch
        index : Bm25Index or None
            BM25 index of the videos (required for hard negatives)
        """
        if not examples:
            raise CorpusError("no training questions left to sample from")
        if len(videos) <= cfg.num_negatives:
            raise ConfigError(
                f"corpus has {len(videos)} videos, need more than "
                f"train.num_negatives={cfg.num_negatives}")
        if cfg.negative_strategy == NegativeStrategy.bm25_hard and index is None:
            index = bm25_build(videos)

        super().__init__(np_random(seed))
        self.videos = videos
        self.examples = examples
        self.cfg = cfg
        self.seed = seed
        self.index = index

    def negatives(self, example: TrainingExample) -> tuple[VideoDoc, ...]:
        """
        Draw the negative videos of one example.
        """
        M = self.cfg.num_negatives
        if M == 0:
            return ()

        gold = example.positive.video_id
        if self.cfg.negative_strategy == NegativeStrategy.bm25_hard:
            ranking = bm25_rank(example.qa.tokens, self.index)
            chosen = [video_id for video_id, _ in ranking if video_id != gold][:M]
        else:
            candidates = [video_id for video_id in self.videos if video_id != gold]
            chosen = self._rand_subset(candidates, M)

        return tuple(self.videos[video_id] for video_id in chosen)

    def sample(self) -> TrainingBatch:
        """
        Draw one batch: distinct questions when the batch fits in the
        training set, questions with replacement otherwise.
        """
        items = []
        for i in self._rand_indices(len(self.examples), self.cfg.batch_size):
            example = self.examples[i]
            items.append(TrainingItem(
                example.qa, example.positive, self.negatives(example), example.target))

        return TrainingBatch(tuple(items), derive_seed(self.seed, 1))


def sample_batch(
    split: CorpusSplit,
    cfg: TrainConfig,
    seed: int,
    examples: Sequence[TrainingExample] | None = None,
    index: Bm25Index | None = None) -> TrainingBatch:
    """
    Draw a training batch; identical arguments give an identical batch.

    Parameters
    ----------
    split : CorpusSplit
        Training split
    cfg : TrainConfig
        Training settings (batch size, M, negative strategy)
    seed : int
        Seed of this batch
    examples : Sequence[TrainingExample], optional
        Precomputed training examples of the split
    index : Bm25Index, optional
        Precomputed BM25 index of the split's videos

    Raises
    ------
    ConfigError
        If the corpus does not have more than M videos
    """
    if examples is None:
        examples = prepare_examples(split, cfg.max_length)
    return BatchSampler(dict(split.videos), examples, cfg, seed, index).sample()



### Losses

@dataclass
class StepLosses:
    """
    Batch-averaged losses of one step.
    """
    loss: Tensor
    loss1: Tensor
    loss2: Tensor

    def values(self) -> tuple[float, float, float]:
        return self.loss.item(), self.loss1.item(), self.loss2.item()


def _average(values: list[Tensor]) -> Tensor:
    out = values[0]
    for value in values[1:]:
        out = add(out, value)
    return scale(out, 1.0 / len(values))

def compute_losses(
    batch: TrainingBatch,
    model: CCGSModel,
    cfg: TrainConfig,
    train: bool = True) -> StepLosses:
    """
    Forward pass of a batch.

    Every video of an item is scored with the model's shared parameters;
    item ``i``'s video ``j`` (0 = gold) uses dropout seed
    ``derive_seed(batch.seed, i, j)``.

    Returns
    -------
    losses : StepLosses
        Trained loss (per the enabled loss terms), Loss_1 and Loss_2
    """
    loss1, loss2 = [], []
    for i, item in enumerate(batch.items):
        question = item.qa.tokens
        positive = model.score_matrix(
            question, item.positive, train=train, seed=derive_seed(batch.seed, i, 0))
        negatives = [
            model.score_matrix(question, video, train=train, seed=derive_seed(batch.seed, i, j))
            for j, video in enumerate(item.negatives, start=1)
        ]

        pad_to = None
        if cfg.pad_negatives:
            pad_to = max(m.r for m in (positive, *negatives))

        loss1.append(predictor_loss(flatten_matrix(positive), item.target, positive.r))
        loss2.append(contrastive_loss(contrastive_concat(positive, negatives, item.target, pad_to)))

    loss1, loss2 = _average(loss1), _average(loss2)
    if cfg.use_predictor and cfg.use_contrastive:
        loss = total_loss(loss1, loss2)
    elif cfg.use_predictor:
        loss = loss1
    else:
        loss = loss2

    return StepLosses(loss, loss1, loss2)



### Optimization

@dataclass
class StepResult:
    """
    Outcome of one optimizer step (losses before the update).
    """
    step: int
    loss: float
    loss1: float
    loss2: float
    params: ParameterSet


def train_step(batch: TrainingBatch, model: CCGSModel, cfg: TrainConfig) -> StepResult:
    """
    Forward, backward and one AdamW update of the model's parameters.
    """
    model.params.zero_grad()
    with Tape() as tape:
        losses = compute_losses(batch, model, cfg, train=True)
    tape.backward(losses.loss)

    adamw_step(
        model.params, cfg.lr,
        beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps, weight_decay=cfg.weight_decay,
    )

    loss, loss1, loss2 = losses.values()
    return StepResult(model.params.step, loss, loss1, loss2, model.params)


@dataclass
class FitResult:
    """
    Outcome of a training run.

    Attributes
    ----------
    best : ParameterSet
        Parameters with the best validation score
    last : ParameterSet
        Parameters after the last step
    best_step : int
        Optimizer step of the best parameters
    best_score : float
        Validation Rank@1 mIoU of the best parameters (NaN without validation)
    log : list[dict]
        Per-step training records
    validation : list[dict]
        Validation records ``{step, score}``
    seed : int
        Training seed
    """
    best: ParameterSet
    last: ParameterSet
    best_step: int
    best_score: float
    log: list[dict] = field(default_factory=list)
    validation: list[dict] = field(default_factory=list)
    seed: int = 0


def validation_score(model: CCGSModel, split: CorpusSplit, config: RunConfig) -> float:
    """
    Rank@1 mIoU of the model on a split.
    """
    eval_config = dataclasses.replace(config.eval, mode=EvalMode.ccgs, rank_ks=(1,), recall_ks=(1,))
    report = evaluate(split, model, eval_config).report
    return report.rank[1].miou

def fit(
    train: CorpusSplit,
    val: CorpusSplit | None,
    config: RunConfig,
    model: CCGSModel | None = None,
    log_path: str | Path | None = None) -> FitResult:
    """
    Train a model, validating periodically and keeping the best parameters.

    Training resumes from ``model.params.step`` when a restored model is passed.

    Parameters
    ----------
    train : CorpusSplit
        Training split
    val : CorpusSplit or None
        Validation split (without one, the last parameters are the best)
    config : RunConfig
        Run settings
    model : CCGSModel, optional
        Model to train (defaults to a fresh model built from ``config``)
    log_path : str or Path, optional
        JSON-lines file receiving one record per step
    """
    cfg = config.train
    model = model or CCGSModel.from_config(config)
    examples = prepare_examples(train, cfg.max_length, model.span_map)
    index = None
    if cfg.negative_strategy == NegativeStrategy.bm25_hard:
        index = bm25_build(train.videos, k1=config.eval.bm25_k1, b=config.eval.bm25_b)

    validate = val is not None and len(val) > 0
    start = model.params.step
    best, best_step, best_score = model.params.copy(), start, float('nan')
    log, validation = [], []

    def check(step: int):
        nonlocal best, best_step, best_score
        if not validate:
            return
        score = validation_score(model, val, config)
        validation.append({'step': step, 'score': score})
        logger.info("Validation at step %d: Rank@1 mIoU=%.2f", step, score)
        if np.isnan(best_score) or score > best_score:
            best, best_step, best_score = model.params.copy(), step, score

    log_file = None
    if log_path is not None:
        log_file = open(log_path, 'a' if start > 0 else 'w', encoding='utf-8')

    try:
        check(start)
        for step in range(start, cfg.steps):
            seed = derive_seed(cfg.seed, step)
            batch = BatchSampler(train.videos, examples, cfg, seed, index).sample()
            result = train_step(batch, model, cfg)

            record = {
                'step': result.step,
                'loss': result.loss,
                'loss1': result.loss1,
                'loss2': result.loss2,
                'lr': cfg.lr,
                'seed': seed,
            }
            log.append(record)
            if log_file is not None:
                log_file.write(json.dumps(record) + '\n')
            if result.step % cfg.log_every == 0:
                logger.info(
                    "Step %d: loss=%.4f loss1=%.4f loss2=%.4f",
                    result.step, result.loss, result.loss1, result.loss2,
                )
            if cfg.eval_every and result.step % cfg.eval_every == 0 and result.step < cfg.steps:
                check(result.step)

        if model.params.step > start:
            check(model.params.step)
    finally:
        if log_file is not None:
            log_file.close()

    if not validate:
        best, best_step = model.params.copy(), model.params.step

    return FitResult(
        best=best,
        last=model.params.copy(),
        best_step=best_step,
        best_score=best_score,
        log=log,
        validation=validation,
        seed=cfg.seed,
    )

def fit_repeats(
    train: CorpusSplit,
    val: CorpusSplit | None,
    config: RunConfig,
    repeats: int = 1,
    log_path: str | Path | None = None) -> FitResult:
    """
    Train ``repeats`` runs seeded ``seed, seed + 1, ...`` (training and
    initialization seeds alike) and keep the run with the best validation score.

    Parameters
    ----------
    log_path : str or Path, optional
        Training log of the first run; later runs write ``<stem>.<i><suffix>``
    """
    if repeats < 1:
        raise ConfigError(f"repeats must be at least 1, got {repeats}")

    best = None
    for i in range(repeats):
        overrides = [f"train.seed={config.train.seed + i}", f"encoder.seed={config.encoder.seed + i}"]
        run_config = config.with_overrides(overrides)
        run_log = log_path
        if log_path is not None and i > 0:
            path = Path(log_path)
            run_log = path.with_name(f"{path.stem}.{i}{path.suffix}")

        result = fit(train, val, run_config, log_path=run_log)
        logger.info("Run %d/%d (seed %d): best score %.2f", i + 1, repeats, result.seed, result.best_score)
        if best is None or result.best_score > best.best_score:
            best = result

    return best
