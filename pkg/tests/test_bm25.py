from __future__ import annotations

import math
import numpy as np
import pytest

from ccgs.bm25 import bm25_build, bm25_rank, bm25_scores
from ccgs.config import SynthConfig
from ccgs.core.synthetic import generate_synthetic_corpus
from ccgs.errors import CorpusError
from ccgs.evaluation import rank_videos_bm25, retrieval_metrics

from conftest import make_video



@pytest.fixture
def two_videos():
    return {
        'x': make_video('x', ['wrap the ankle', 'the end']),
        'y': make_video('y', ['boil the water']),
    }


def test_index_statistics(two_videos):
    index = bm25_build(two_videos)
    assert index.N == 2
    assert index.doc_len.tolist() == [5.0, 3.0]
    assert index.avgdl == 4.0
    assert index.tf[0, index.vocabulary['the']] == 2.0
    assert index.df[index.vocabulary['the']] == 2

    idf = index.idf
    assert abs(idf[index.vocabulary['ankle']] - math.log(2.0)) < 1e-12
    assert abs(idf[index.vocabulary['the']] - math.log(1.2)) < 1e-12


def test_score_formula(two_videos):
    index = bm25_build(two_videos, k1=1.2, b=0.75)
    scores = bm25_scores(['ankle', 'the'], index)

    def term(tf, dl, idf):
        return idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * dl / 4.0))

    expected_x = term(1, 5, math.log(2.0)) + term(2, 5, math.log(1.2))
    expected_y = term(1, 3, math.log(1.2))
    np.testing.assert_allclose(scores, [expected_x, expected_y], rtol=1e-12)


def test_query_multiplicity(two_videos):
    index = bm25_build(two_videos)
    once = bm25_scores(['ankle'], index)
    twice = bm25_scores(['ankle', 'ankle'], index)
    np.testing.assert_allclose(twice, 2 * once)


def test_rare_term_ranks_first(two_videos):
    index = bm25_build(two_videos)
    assert bm25_rank(['boil'], index)[0][0] == 'y'
    assert bm25_rank(['wrap', 'ankle'], index)[0][0] == 'x'


def test_unknown_terms_tie_by_video_id(two_videos):
    index = bm25_build(two_videos)
    assert bm25_scores(['unseen'], index).tolist() == [0.0, 0.0]
    assert bm25_rank(['unseen'], index) == [('x', 0.0), ('y', 0.0)]


def test_empty_corpus():
    with pytest.raises(CorpusError):
        bm25_build({})


def test_synthetic_retrieval_is_perfect():
    split = generate_synthetic_corpus(SynthConfig(), seed=0)
    index = bm25_build(split.videos)
    predictions = {qa.question_id: rank_videos_bm25(qa, index) for qa in split.qa}
    mrr, recall = retrieval_metrics(predictions, split.gold_videos())
    assert mrr == 100.0
    assert recall[1] == 100.0
