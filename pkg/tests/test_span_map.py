from __future__ import annotations

import logging
import pytest

from hypothesis import given, strategies as st

from ccgs.core.corpus import SubtitleUnit, TimeInterval, VideoDoc
from ccgs.core.span_map import SpanPoint, build_span_label_map, span_to_time, time_to_span
from ccgs.errors import ConfigError, SpanError

from conftest import make_video



def test_token_layout(twelve_unit_video):
    span_map = build_span_label_map(twelve_unit_video, max_length=1300)
    assert span_map.r == 24
    assert not span_map.truncated
    assert span_map.token_start.tolist() == list(range(0, 24, 2))
    assert span_map.token_end.tolist() == list(range(1, 24, 2))
    assert span_map.token_units().tolist() == [k // 2 for k in range(24)]


def test_answer_maps_to_overlapped_units(twelve_unit_video):
    span_map = build_span_label_map(twelve_unit_video, max_length=1300)
    point = time_to_span(span_map, TimeInterval(14.0, 23.0))
    assert point == SpanPoint(10, 17)
    assert span_to_time(span_map, point) == TimeInterval(14.0, 23.5)


def test_touching_boundary_is_not_overlap():
    video = make_video('v', ['a b', 'c d', 'e f'])
    span_map = build_span_label_map(video, 10)
    assert time_to_span(span_map, TimeInterval(2.0, 4.0)) == SpanPoint(2, 3)


def test_zero_length_answer():
    video = make_video('v', ['a b', 'c d'], gap=1.0)
    span_map = build_span_label_map(video, 10)
    assert time_to_span(span_map, TimeInterval(3.5, 3.5)) == SpanPoint(2, 3)
    with pytest.raises(SpanError):
        time_to_span(span_map, TimeInterval(2.5, 2.5))


def test_answer_outside_subtitles():
    video = make_video('v', ['a b', 'c d'], gap=1.0)
    span_map = build_span_label_map(video, 10)
    with pytest.raises(SpanError):
        time_to_span(span_map, TimeInterval(2.1, 2.9))


def test_truncation_keeps_whole_units(caplog):
    video = make_video('v', ['a b c', 'd e', 'f g h'])
    with caplog.at_level(logging.WARNING):
        span_map = build_span_label_map(video, max_length=6)
    assert span_map.tokens == ('a', 'b', 'c', 'd', 'e')
    assert span_map.truncated
    assert span_map.num_units == 2
    assert 'truncated' in caplog.text

    with pytest.raises(SpanError):
        time_to_span(span_map, TimeInterval(4.5, 5.5))


def test_oversized_first_unit_is_clipped():
    video = make_video('v', ['a b c d e', 'f'])
    span_map = build_span_label_map(video, max_length=3)
    assert span_map.tokens == ('a', 'b', 'c')
    assert span_map.token_end.tolist() == [2]
    assert span_to_time(span_map, (0, 2)) == TimeInterval(0.0, 2.0)


def test_units_without_tokens_are_skipped():
    video = make_video('v', ['a b', '...', 'c'])
    span_map = build_span_label_map(video, 10)
    assert span_map.unit_index.tolist() == [1, 3]
    with pytest.raises(SpanError):
        time_to_span(span_map, TimeInterval(2.5, 3.5))
    assert time_to_span(span_map, TimeInterval(1.0, 5.0)) == SpanPoint(0, 2)


def test_video_without_tokens():
    video = VideoDoc('v', (SubtitleUnit(1, '?!', TimeInterval(0, 1)),), 1.0)
    with pytest.raises(SpanError):
        build_span_label_map(video, 10)
    with pytest.raises(ConfigError):
        build_span_label_map(make_video('w', ['a']), 0)


@pytest.mark.parametrize('point', [(3, 2), (-1, 0), (0, 24)])
def test_invalid_span_point(twelve_unit_video, point):
    span_map = build_span_label_map(twelve_unit_video, 1300)
    with pytest.raises(SpanError):
        span_to_time(span_map, point)


@given(r=st.integers(1, 40), data=st.data())
def test_flat_index_round_trip(r, data):
    y = data.draw(st.integers(0, r - 1))
    x = data.draw(st.integers(y, r - 1))
    point = SpanPoint(y, x)
    assert SpanPoint.from_flat_index(point.flat_index(r), r) == point


@given(
    lengths=st.lists(st.integers(1, 4), min_size=1, max_size=10),
    data=st.data(),
)
def test_unit_ranges_round_trip(lengths, data):
    texts = [' '.join(f"t{i}" for i in range(n)) for n in lengths]
    video = make_video('v', texts, unit_seconds=1.5, gap=0.5)
    span_map = build_span_label_map(video, max_length=100)

    first = data.draw(st.integers(0, len(lengths) - 1))
    last = data.draw(st.integers(first, len(lengths) - 1))
    answer = TimeInterval(video.units[first].interval.start, video.units[last].interval.end)

    point = time_to_span(span_map, answer)
    assert point.y == sum(lengths[:first])
    assert point.x == sum(lengths[:last + 1]) - 1
    assert span_to_time(span_map, point) == answer
