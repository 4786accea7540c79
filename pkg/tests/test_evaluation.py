from __future__ import annotations

import dataclasses
import numpy as np
import pytest

from hypothesis import HealthCheck, given, settings, strategies as st

from ccgs.base import CCGSModel
from ccgs.config import EvalConfig
from ccgs.core.constants import EvalMode, RankIoU
from ccgs.core.corpus import Query, TimeInterval
from ccgs.core.span_map import SpanPoint
from ccgs.errors import EvaluationError
from ccgs.evaluation import (
    LocalizationMetrics,
    MetricsReport,
    Prediction,
    RankedVideo,
    compare,
    evaluate,
    iou,
    localization_metrics,
    rank_videos,
    retrieval_metrics,
)
from ccgs.nn.globalspan import GlobalSpanMatrix
from ccgs.numcore import constant
from ccgs.utils.random import np_random



def _prediction(question_id: str, *entries: tuple[str, float, tuple[float, float] | None]) -> Prediction:
    ranking = tuple(
        RankedVideo(v, s, SpanPoint(0, 0) if span else None, TimeInterval(*span) if span else None)
        for v, s, span in entries
    )
    return Prediction(question_id, ranking)


@pytest.fixture
def tiny_model(tiny_run_config) -> CCGSModel:
    return CCGSModel.from_config(tiny_run_config)


@pytest.mark.parametrize('a, b, expected', [
    ((0, 10), (5, 15), 1 / 3),
    ((0, 10), (0, 10), 1.0),
    ((0, 4), (4, 8), 0.0),
    ((2, 2), (2, 2), 1.0),
    ((2, 2), (0, 4), 0.0),
    ((1, 3), (0, 4), 0.5),
])
def test_iou(a, b, expected):
    assert iou(TimeInterval(*a), TimeInterval(*b)) == pytest.approx(expected)


def test_prediction_ranks():
    prediction = _prediction('q', ('a', 3.0, None), ('b', 1.0, None), ('c', 1.0, None))
    assert len(prediction) == 3
    assert prediction.rank_of('b') == 2
    assert prediction.rank_of('z') is None
    assert prediction.to_dict()['ranking'][0] == {'video_id': 'a', 'score': 3.0}
    with pytest.raises(AssertionError):
        _prediction('q', ('a', 1.0, None), ('b', 2.0, None))



### Retrieval Metrics

def test_mrr_and_recall():
    videos = ['g', 'x1', 'x2', 'x3', 'x4', 'x5', 'x6']
    def ranked(question_id, gold_rank):
        order = [v for v in videos if v != 'g']
        order.insert(gold_rank - 1, 'g')
        return _prediction(question_id, *((v, float(-i), None) for i, v in enumerate(order)))

    predictions = [ranked('q1', 1), ranked('q2', 2), ranked('q3', 4)]
    gold = {'q1': 'g', 'q2': 'g', 'q3': 'g'}
    mrr, recall = retrieval_metrics(predictions, gold, ks=(1, 5, 10))
    assert mrr == pytest.approx(100 * (1 + 1 / 2 + 1 / 4) / 3)
    assert mrr == pytest.approx(58.33, abs=0.01)
    assert recall == pytest.approx({1: 100 / 3, 5: 100.0, 10: 100.0})

    mrr, recall = retrieval_metrics([ranked('q1', 6)], {'q1': 'g'}, ks=(5, 10))
    assert recall == {5: 0.0, 10: 100.0}


def test_unranked_gold_counts_zero():
    prediction = _prediction('q', ('a', 1.0, None))
    mrr, recall = retrieval_metrics([prediction], {'q': 'missing'}, ks=(1,))
    assert mrr == 0.0 and recall == {1: 0.0}


def test_missing_prediction():
    with pytest.raises(EvaluationError):
        retrieval_metrics([], {'q': 'a'})
    with pytest.raises(EvaluationError):
        retrieval_metrics([], {})
    with pytest.raises(EvaluationError):
        localization_metrics([], {'q': 'a'}, {'q': TimeInterval(0, 1)})



### Localization Metrics

def test_gold_and_best_readings():
    answers = {'q': TimeInterval(0, 10)}
    prediction = _prediction('q', ('x', 2.0, (0, 10)), ('g', 1.0, (5, 15)))

    gold = localization_metrics([prediction], {'q': 'g'}, answers, ks=(1, 2), thresholds=(0.3, 0.5))
    assert gold[1].miou == 0.0
    assert gold[2].miou == pytest.approx(100 / 3)
    assert gold[2].iou == {0.3: 100.0, 0.5: 0.0}

    best = localization_metrics(
        [prediction], {'q': 'g'}, answers, ks=(1, 2), thresholds=(0.3,), reading=RankIoU.best)
    assert best[1].miou == 100.0
    assert best[2].iou == {0.3: 100.0}


def _brute_force(predictions, gold_videos, gold_answers, ks, thresholds):
    out = {}
    for k in ks:
        values = []
        for qid, video_id in gold_videos.items():
            value = 0.0
            for rank, entry in enumerate(predictions[qid].ranking, start=1):
                if entry.video_id == video_id and rank <= k:
                    a, b = entry.interval, gold_answers[qid]
                    inter = max(0.0, min(a.end, b.end) - max(a.start, b.start))
                    union = a.end - a.start + b.end - b.start - inter
                    value = inter / union if union > 0 else float(a == b)
            values.append(value)
        out[k] = (
            {t: 100 * sum(v >= t for v in values) / len(values) for t in thresholds},
            100 * sum(values) / len(values),
        )
    return out


def test_metrics_match_brute_force():
    rng = np_random(2024)
    videos = [f"v{i}" for i in range(12)]
    predictions, gold_videos, gold_answers = {}, {}, {}
    for n in range(200):
        qid = f"q{n}"
        scores = np.sort(rng.normal(size=len(videos)))[::-1]
        order = rng.permutation(videos).tolist()
        entries = []
        for video_id, score in zip(order, scores):
            start = float(rng.integers(0, 20))
            entries.append((video_id, float(score), (start, start + float(rng.integers(0, 10)))))
        predictions[qid] = _prediction(qid, *entries)
        gold_videos[qid] = videos[int(rng.integers(len(videos)))]
        start = float(rng.integers(0, 20))
        gold_answers[qid] = TimeInterval(start, start + float(rng.integers(1, 10)))

    ks, thresholds = (1, 3, 10), (0.3, 0.5, 0.7)
    metrics = localization_metrics(predictions, gold_videos, gold_answers, ks, thresholds)
    expected = _brute_force(predictions, gold_videos, gold_answers, ks, thresholds)
    for k in ks:
        assert metrics[k].iou == pytest.approx(expected[k][0])
        assert metrics[k].miou == pytest.approx(expected[k][1])

    ranks = [predictions[q].rank_of(v) for q, v in gold_videos.items()]
    mrr, recall = retrieval_metrics(predictions, gold_videos, ks=ks)
    assert mrr == pytest.approx(100 * np.mean([1 / r for r in ranks]))
    for k in ks:
        assert recall[k] == pytest.approx(100 * np.mean([r <= k for r in ranks]))

    for reading in RankIoU:
        metrics = localization_metrics(predictions, gold_videos, gold_answers, ks, thresholds, reading)
        for lo, hi in zip(ks, ks[1:]):
            assert metrics[lo].miou <= metrics[hi].miou
        for k in ks:
            rates = [metrics[k].iou[t] for t in thresholds]
            assert rates == sorted(rates, reverse=True)



### Reports

@pytest.fixture
def report() -> MetricsReport:
    return MetricsReport(
        mode=EvalMode.ccgs,
        num_questions=4,
        mrr=62.5,
        recall={1: 50.0, 5: 100.0},
        rank={1: LocalizationMetrics({0.3: 50.0, 0.5: 25.0}, 31.25)},
    )


def test_report_json_round_trip(report):
    again = MetricsReport.from_json(report.to_json())
    assert again == report
    assert report.to_dict()['rank']['1']['iou'] == {'0.3': 50.0, '0.5': 25.0}


def test_report_csv(report):
    lines = report.to_csv().splitlines()
    assert lines[0] == 'mode,rank,metric,value'
    assert lines[1:] == [
        'ccgs,,MRR,62.50',
        'ccgs,,R@1,50.00',
        'ccgs,,R@5,100.00',
        'ccgs,Rank@1,IoU=0.3,50.00',
        'ccgs,Rank@1,IoU=0.5,25.00',
        'ccgs,Rank@1,mIoU,31.25',
    ]



### Evaluation

def test_rank_videos(tiny_split, tiny_model):
    prediction = rank_videos(tiny_split.qa[0], tiny_split.videos, tiny_model)
    assert prediction.question_id == 'q1'
    assert sorted(e.video_id for e in prediction.ranking) == ['a', 'b', 'c']
    for entry in prediction.ranking:
        assert entry.point.y <= entry.point.x
        assert entry.interval is not None

    query = Query('q1', tiny_split.qa[0].question)
    assert rank_videos(query, tiny_split.videos, tiny_model) == prediction


@settings(
    max_examples=10, deadline=None,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
@given(c=st.floats(-50, 50, allow_nan=False))
def test_rank_videos_ignores_constant_logit_shift(tiny_split, tiny_run_config, c):
    model = CCGSModel.from_config(tiny_run_config)
    before = rank_videos(tiny_split.qa[1], tiny_split.videos, model)

    score_matrix = model.score_matrix

    def shifted(question, video, train=False, seed=None):
        matrix = score_matrix(question, video, train=train, seed=seed)
        logits = matrix.logits.data.copy()
        logits[matrix.valid_mask] += c
        return GlobalSpanMatrix(constant(logits), matrix.valid_mask)

    model.score_matrix = shifted
    after = rank_videos(tiny_split.qa[1], tiny_split.videos, model)

    assert [e.video_id for e in after.ranking] == [e.video_id for e in before.ranking]
    assert [e.point for e in after.ranking] == [e.point for e in before.ranking]
    np.testing.assert_allclose(
        [e.score for e in after.ranking], [e.score + c for e in before.ranking], atol=1e-9)


@pytest.mark.parametrize('mode', list(EvalMode))
def test_evaluate_modes(tiny_split, tiny_model, mode):
    config = EvalConfig(rank_ks=(1, 2), recall_ks=(1, 3))
    result = evaluate(tiny_split, tiny_model, config, mode=mode)
    report = result.report
    assert report.mode == mode
    assert report.num_questions == 3
    assert len(result.predictions) == 3
    assert report.recall[3] == 100.0
    assert 0.0 <= report.mrr <= 100.0

    heads = [p.ranking[0] for p in result.predictions]
    if mode == EvalMode.bm25:
        assert report.rank == {}
        assert all(h.interval is None for h in heads)
    else:
        assert set(report.rank) == {1, 2}
        assert all(h.interval is not None for h in heads)
    if mode == EvalMode.pipeline:
        assert all(e.interval is None for p in result.predictions for e in p.ranking[1:])


def test_evaluate_requires_model(tiny_split):
    with pytest.raises(EvaluationError):
        evaluate(tiny_split, None, mode=EvalMode.ccgs)
    assert evaluate(tiny_split, None, mode=EvalMode.bm25).report.recall[1] >= 0.0


def test_parallel_evaluation_matches_serial(tiny_split, tiny_model):
    serial = evaluate(tiny_split, tiny_model, EvalConfig(workers=1))
    parallel = evaluate(tiny_split, tiny_model, EvalConfig(workers=3))
    assert parallel.predictions == serial.predictions
    assert parallel.report == serial.report


def test_compare(tiny_split, tiny_model):
    reports = compare(tiny_split, tiny_model, dataclasses.replace(EvalConfig(), rank_ks=(1,)))
    assert list(reports) == list(EvalMode)
    assert reports[EvalMode.bm25].mrr == reports[EvalMode.pipeline].mrr
