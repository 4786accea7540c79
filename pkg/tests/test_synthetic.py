from __future__ import annotations

import pytest

from ccgs.bm25 import bm25_build, bm25_rank
from ccgs.config import SynthConfig
from ccgs.core import Split
from ccgs.core.corpus import serialize_corpus
from ccgs.core.span_map import build_span_label_map, span_to_time, time_to_span
from ccgs.core.synthetic import (
    SyntheticCorpusGenerator,
    allocate_split_sizes,
    generate_synthetic_corpus,
    split_corpus,
)
from ccgs.errors import ConfigError



def test_shape(synth_config, synth_split):
    assert len(synth_split.videos) == synth_config.n_videos
    assert len(synth_split.qa) == synth_config.n_questions
    for video in synth_split.videos.values():
        assert len(video.units) == synth_config.units_per_video
        assert all(len(u.tokens) == synth_config.tokens_per_unit for u in video.units)


def test_deterministic(synth_config):
    a = generate_synthetic_corpus(synth_config, seed=5)
    b = generate_synthetic_corpus(synth_config, seed=5)
    c = generate_synthetic_corpus(synth_config, seed=6)
    assert serialize_corpus(a) == serialize_corpus(b)
    assert serialize_corpus(a) != serialize_corpus(c)


def test_answers_align_to_units(synth_split):
    for qa in synth_split.qa:
        span_map = build_span_label_map(synth_split.videos[qa.video_id], 1300)
        point = time_to_span(span_map, qa.answer)
        assert span_to_time(span_map, point) == qa.answer


def test_topic_token_identifies_video(synth_split):
    generator_words = {
        video_id: set(video.tokens) for video_id, video in synth_split.videos.items()
    }
    for qa in synth_split.qa:
        topic = qa.tokens[0]
        holders = [v for v, words in generator_words.items() if topic in words]
        assert holders == [qa.video_id]


def test_answer_markers_bound_the_span(synth_split):
    for qa in synth_split.qa:
        video = synth_split.videos[qa.video_id]
        span_map = build_span_label_map(video, 1300)
        y, x = time_to_span(span_map, qa.answer)
        assert span_map.tokens[y] == qa.tokens[1]
        assert span_map.tokens[x] == qa.tokens[2]


def test_bm25_ranks_gold_video_first(synth_split):
    index = bm25_build(synth_split.videos)
    for qa in synth_split.qa:
        assert bm25_rank(qa.tokens, index)[0][0] == qa.video_id


def test_vocabulary_too_small():
    with pytest.raises(ConfigError):
        SyntheticCorpusGenerator(SynthConfig(n_videos=4, n_questions=8, vocab_size=20), seed=0)


def test_too_many_questions_per_video():
    config = SynthConfig(n_videos=2, units_per_video=3, n_questions=6, vocab_size=64)
    with pytest.raises(ConfigError):
        SyntheticCorpusGenerator(config, seed=0)


def test_allocate_split_sizes():
    assert allocate_split_sizes(151, (2710, 145, 155)) == (136, 7, 8)
    assert allocate_split_sizes(10, (1, 1, 1)) == (4, 3, 3)
    assert sum(allocate_split_sizes(97, (3, 5, 11))) == 97


def test_split_corpus(synth_split):
    splits = split_corpus(synth_split, (4, 2, 2), seed=1)
    assert list(splits) == [Split.train, Split.val, Split.test]
    assert [len(s) for s in splits.values()] == [4, 2, 2]

    ids = [qa.question_id for s in splits.values() for qa in s.qa]
    assert sorted(ids) == sorted(qa.question_id for qa in synth_split.qa)
    assert all(s.split_name == name for name, s in splits.items())
    again = split_corpus(synth_split, (4, 2, 2), seed=1)
    assert [s.qa for s in again.values()] == [s.qa for s in splits.values()]
