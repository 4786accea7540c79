"""
Corpus-level inference and metrics.

Every question is ranked against every video of a split. Rankers only ever
see :class:`.Query` objects (question id and text); gold videos and answers
are read by the scorers alone.

Retrieval metrics are MRR and R@k (gold video within the top k). Localization
metrics are IoU@theta and mIoU at Rank@k: a question is credited with the IoU of
the span decoded in its gold video when that video ranks within the top k,
and with 0 otherwise. All rates are percentages.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import numpy as np

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

from .base import CCGSModel
from .bm25 import Bm25Index, bm25_build, bm25_rank
from .config import EvalConfig
from .core.constants import IOU_THRESHOLDS, RANK_KS, RECALL_KS, EvalMode, RankIoU
from .core.corpus import CorpusSplit, QAInstance, Query, TimeInterval, VideoDoc
from .core.span_map import SpanPoint
from .errors import EvaluationError
from .utils.kernels import interval_iou

logger = logging.getLogger(__name__)



### Predictions

@dataclass(frozen=True)
class RankedVideo:
    """
    One candidate video of a ranking.

    Attributes
    ----------
    video_id : str
        Candidate video
    score : float
        Ranking score
    point : SpanPoint or None
        Decoded span point (None when the ranker does not localize)
    interval : TimeInterval or None
        Time interval of the decoded span
    """
    video_id: str
    score: float
    point: SpanPoint | None = None
    interval: TimeInterval | None = None

    def to_dict(self) -> dict:
        out = {'video_id': self.video_id, 'score': self.score}
        if self.point is not None:
            out['span'] = list(self.point)
            out['start'] = self.interval.start
            out['end'] = self.interval.end
        return out


@dataclass(frozen=True)
class Prediction:
    """
    Ranked candidate videos for one question, by non-increasing score.
    """
    question_id: str
    ranking: tuple[RankedVideo, ...]

    def __post_init__(self):
        scores = [entry.score for entry in self.ranking]
        assert all(a >= b for a, b in zip(scores, scores[1:])), "scores must be non-increasing"

    def __len__(self) -> int:
        return len(self.ranking)

    def rank_of(self, video_id: str) -> int | None:
        """
        Return the 1-based rank of a video, or None if it was not ranked.
        """
        for rank, entry in enumerate(self.ranking, start=1):
            if entry.video_id == video_id:
                return rank

    def to_dict(self) -> dict:
        return {
            'question_id': self.question_id,
            'ranking': [entry.to_dict() for entry in self.ranking],
        }


def _sort_entries(entries: Iterable[RankedVideo]) -> tuple[RankedVideo, ...]:
    return tuple(sorted(entries, key=lambda e: (-e.score, e.video_id)))

def rank_videos(
    question: Query | QAInstance,
    videos: Mapping[str, VideoDoc],
    model: CCGSModel) -> Prediction:
    """
    Score every video by the winning logit of its global-span matrix.

    Parameters
    ----------
    question : Query or QAInstance
        Question to rank for (only its id and text are used)
    videos : Mapping[str, VideoDoc]
        Candidate videos
    model : CCGSModel
        Scoring model

    Returns
    -------
    prediction : Prediction
        One entry per video, by descending score (ties by video id)
    """
    if isinstance(question, QAInstance):
        question = question.query()

    entries = []
    for video in videos.values():
        span, interval = model.localize(question.tokens, video)
        entries.append(RankedVideo(video.video_id, span.score, span.point, interval))

    return Prediction(question.question_id, _sort_entries(entries))

def rank_videos_bm25(question: Query | QAInstance, index: Bm25Index) -> Prediction:
    """
    Rank every indexed video by BM25 (no localization).
    """
    if isinstance(question, QAInstance):
        question = question.query()

    ranking = bm25_rank(question.tokens, index)
    return Prediction(question.question_id, tuple(RankedVideo(v, s) for v, s in ranking))

def localize_top(
    prediction: Prediction,
    question: Query,
    videos: Mapping[str, VideoDoc],
    model: CCGSModel) -> Prediction:
    """
    Decode a span in the top-ranked video of an existing ranking.
    """
    if not prediction.ranking:
        return prediction

    top = prediction.ranking[0]
    span, interval = model.localize(question.tokens, videos[top.video_id])
    head = replace(top, point=span.point, interval=interval)
    return Prediction(prediction.question_id, (head, *prediction.ranking[1:]))



### Metrics

def iou(a: TimeInterval, b: TimeInterval) -> float:
    """
    Temporal intersection-over-union of two intervals.

    Examples
    --------
    >>> iou(TimeInterval(0, 10), TimeInterval(5, 15))
    0.3333333333333333
    """
    out = interval_iou(
        np.array([a.start], dtype=np.float64), np.array([a.end], dtype=np.float64),
        np.array([b.start], dtype=np.float64), np.array([b.end], dtype=np.float64),
    )
    return float(out[0])


@dataclass
class LocalizationMetrics:
    """
    IoU rates at one rank cut-off.

    Attributes
    ----------
    iou : dict[float, float]
        Percentage of questions with IoU at or above each threshold
    miou : float
        Mean IoU (percent)
    """
    iou: dict[float, float]
    miou: float


def _lookup(predictions: Mapping[str, Prediction], question_id: str) -> Prediction:
    try:
        return predictions[question_id]
    except KeyError:
        raise EvaluationError(f"no prediction for question {question_id!r}") from None

def _by_question(predictions: Sequence[Prediction] | Mapping[str, Prediction]) -> dict[str, Prediction]:
    if isinstance(predictions, Mapping):
        return dict(predictions)
    return {p.question_id: p for p in predictions}

def retrieval_metrics(
    predictions: Sequence[Prediction] | Mapping[str, Prediction],
    gold: Mapping[str, str],
    ks: Sequence[int] = RECALL_KS) -> tuple[float, dict[int, float]]:
    """
    Mean reciprocal rank and recall at k of the gold videos (percentages).

    Parameters
    ----------
    predictions : Sequence[Prediction]
        Rankings, one per question
    gold : Mapping[str, str]
        Gold video id of each question
    ks : Sequence[int]
        Recall cut-offs

    Returns
    -------
    mrr : float
        Mean reciprocal rank (a gold video that was not ranked counts 0)
    recall : dict[int, float]
        Percentage of questions with the gold video within the top k

    Raises
    ------
    EvaluationError
        If a question has no prediction, or there are no questions
    """
    if not gold:
        raise EvaluationError("no questions to evaluate")

    predictions = _by_question(predictions)
    ranks = np.array([
        _lookup(predictions, qid).rank_of(video_id) or np.inf
        for qid, video_id in gold.items()
    ], dtype=np.float64)

    mrr = 100.0 * float(np.mean(1.0 / ranks))
    recall = {int(k): 100.0 * float(np.mean(ranks <= k)) for k in ks}
    return mrr, recall

def localization_metrics(
    predictions: Sequence[Prediction] | Mapping[str, Prediction],
    gold_videos: Mapping[str, str],
    gold_answers: Mapping[str, TimeInterval],
    ks: Sequence[int] = RANK_KS,
    thresholds: Sequence[float] = IOU_THRESHOLDS,
    reading: RankIoU | str = RankIoU.gold) -> dict[int, LocalizationMetrics]:
    """
    IoU@theta and mIoU at Rank@k (percentages).

    Parameters
    ----------
    predictions : Sequence[Prediction]
        Rankings, one per question
    gold_videos : Mapping[str, str]
        Gold video id of each question
    gold_answers : Mapping[str, TimeInterval]
        Gold answer interval of each question
    ks : Sequence[int]
        Rank cut-offs
    thresholds : Sequence[float]
        IoU thresholds
    reading : RankIoU
        ``gold`` scores the span decoded in the gold video if it ranks within
        the top k; ``best`` scores the best span among the top k videos

    Raises
    ------
    EvaluationError
        If a question has no prediction, or there are no questions
    """
    if not gold_videos:
        raise EvaluationError("no questions to evaluate")

    reading = RankIoU.parse(reading)
    predictions = _by_question(predictions)

    scores = {int(k): [] for k in ks}
    for qid, video_id in gold_videos.items():
        prediction = _lookup(predictions, qid)
        answer = gold_answers[qid]
        overlaps = [
            iou(entry.interval, answer) if entry.interval is not None else 0.0
            for entry in prediction.ranking
        ]
        rank = prediction.rank_of(video_id)
        for k in scores:
            if reading == RankIoU.gold:
                value = overlaps[rank - 1] if rank is not None and rank <= k else 0.0
            else:
                value = max(overlaps[:k], default=0.0)
            scores[k].append(value)

    report = {}
    for k, values in scores.items():
        values = np.asarray(values, dtype=np.float64)
        report[k] = LocalizationMetrics(
            iou={float(t): 100.0 * float(np.mean(values >= t)) for t in thresholds},
            miou=100.0 * float(np.mean(values)),
        )

    return report



### Report

def _threshold_key(threshold: float) -> str:
    return f"{threshold:g}"


@dataclass
class MetricsReport:
    """
    Retrieval and localization metrics of one evaluation run (percentages).

    Attributes
    ----------
    mode : EvalMode
        Evaluation pipeline
    num_questions : int
        Number of evaluated questions
    mrr : float
        Mean reciprocal rank of the gold video
    recall : dict[int, float]
        R@k per cut-off
    rank : dict[int, LocalizationMetrics]
        Localization metrics per Rank@k cut-off (empty for retrieval-only runs)
    """
    mode: EvalMode
    num_questions: int
    mrr: float
    recall: dict[int, float]
    rank: dict[int, LocalizationMetrics] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'mode': self.mode.value,
            'num_questions': self.num_questions,
            'mrr': self.mrr,
            'recall': {str(k): v for k, v in self.recall.items()},
            'rank': {
                str(k): {
                    'iou': {_threshold_key(t): v for t, v in row.iou.items()},
                    'miou': row.miou,
                }
                for k, row in self.rank.items()
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> 'MetricsReport':
        return cls(
            mode=EvalMode.parse(data['mode']),
            num_questions=int(data['num_questions']),
            mrr=float(data['mrr']),
            recall={int(k): float(v) for k, v in data['recall'].items()},
            rank={
                int(k): LocalizationMetrics(
                    iou={float(t): float(v) for t, v in row['iou'].items()},
                    miou=float(row['miou']),
                )
                for k, row in data.get('rank', {}).items()
            },
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str | bytes) -> 'MetricsReport':
        return cls.from_dict(json.loads(text))

    def rows(self) -> list[tuple[str, str, float]]:
        """
        Return (rank, metric, value) rows: retrieval metrics first,
        then the IoU thresholds and mIoU of each Rank@k.
        """
        rows = [('', 'MRR', self.mrr)]
        rows += [('', f"R@{k}", v) for k, v in self.recall.items()]
        for k, row in self.rank.items():
            rows += [(f"Rank@{k}", f"IoU={_threshold_key(t)}", v) for t, v in row.iou.items()]
            rows.append((f"Rank@{k}", 'mIoU', row.miou))
        return rows

    def to_csv(self) -> str:
        """
        Render the report as CSV with one row per (rank, metric), two decimals.
        """
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(['mode', 'rank', 'metric', 'value'])
        for rank, metric, value in self.rows():
            writer.writerow([self.mode.value, rank, metric, f"{value:.2f}"])
        return buffer.getvalue()


def score_predictions(
    predictions: Sequence[Prediction],
    split: CorpusSplit,
    config: EvalConfig,
    mode: EvalMode,
    localize: bool = True) -> MetricsReport:
    """
    Score rankings against the gold annotations of a split.
    """
    gold_videos = split.gold_videos()
    mrr, recall = retrieval_metrics(predictions, gold_videos, config.recall_ks)
    rank = {}
    if localize:
        rank = localization_metrics(
            predictions, gold_videos, split.gold_answers(),
            ks=config.rank_ks, thresholds=config.thresholds, reading=config.rank_iou,
        )

    return MetricsReport(mode, len(gold_videos), mrr, recall, rank)



### Evaluation

@dataclass
class EvaluationResult:
    """
    Metrics of one evaluation run together with the rankings they score.
    """
    report: MetricsReport
    predictions: list[Prediction]


def _map_queries(fn: Callable[[Query], Prediction], queries: list[Query], workers: int) -> list[Prediction]:
    if workers <= 1 or len(queries) <= 1:
        return [fn(q) for q in queries]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, queries))

def evaluate(
    split: CorpusSplit,
    model: CCGSModel | None,
    config: EvalConfig | None = None,
    mode: EvalMode | str | None = None,
    index: Bm25Index | None = None) -> EvaluationResult:
    """
    Rank every video for every question of a split and score the result.

    Parameters
    ----------
    split : CorpusSplit
        Split to evaluate
    model : CCGSModel or None
        Span model (not needed for the retrieval-only BM25 mode)
    config : EvalConfig
        Evaluation settings
    mode : EvalMode or None
        Pipeline (overrides ``config.mode``):

            * ``ccgs`` : rank and localize with the global-span matrix
            * ``bm25`` : rank with BM25 only
            * ``bm25+ccgs-span`` : rank with BM25, localize in the top video
              with the global-span matrix
    index : Bm25Index or None
        Prebuilt BM25 index of the split's videos
    """
    config = config or EvalConfig()
    mode = EvalMode.parse(mode if mode is not None else config.mode)
    queries = split.queries()
    videos = split.videos

    if mode != EvalMode.ccgs and index is None:
        index = bm25_build(videos, k1=config.bm25_k1, b=config.bm25_b)
    if mode != EvalMode.bm25:
        if model is None:
            raise EvaluationError(f"evaluation mode {mode.value!r} requires a model")
        model.prepare(videos.values())

    if mode == EvalMode.ccgs:
        fn = lambda q: rank_videos(q, videos, model)
    elif mode == EvalMode.bm25:
        fn = lambda q: rank_videos_bm25(q, index)
    else:
        fn = lambda q: localize_top(rank_videos_bm25(q, index), q, videos, model)

    predictions = _map_queries(fn, queries, config.workers)
    report = score_predictions(
        predictions, split, config, mode, localize=mode != EvalMode.bm25)

    logger.info(
        "Evaluated %d %s questions (%s): MRR=%.2f R@1=%.2f",
        report.num_questions, split.split_name.value, mode.value, report.mrr,
        report.recall.get(1, float('nan')),
    )
    return EvaluationResult(report, predictions)

def compare(
    split: CorpusSplit,
    model: CCGSModel,
    config: EvalConfig | None = None) -> dict[EvalMode, MetricsReport]:
    """
    Evaluate a split with every pipeline.
    """
    config = config or EvalConfig()
    index = bm25_build(split.videos, k1=config.bm25_k1, b=config.bm25_b)
    return {mode: evaluate(split, model, config, mode=mode, index=index).report for mode in EvalMode}
