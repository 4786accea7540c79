"""
Corpus data model: subtitled videos, questions with answer intervals,
and the JSON document format they are stored in.

Corpus document schema::

    {
        "split": "train" | "val" | "test",
        "videos": [
            {
                "video_id": str,
                "duration": float,
                "subtitles": [{"start": float, "end": float, "text": str}, ...]
            },
            ...
        ],
        "qa": [
            {
                "question_id": str,
                "question": str,
                "video_id": str,
                "answer_start": float,
                "answer_end": float
            },
            ...
        ]
    }

Times are in seconds. Documents are UTF-8 encoded.
"""
from __future__ import annotations

import functools
import json
import logging
import math
import re

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping

from .constants import Split
from ..errors import CorpusError, SpanError

logger = logging.getLogger(__name__)

_PUNCTUATION = re.compile(r'[^\w\s]')



### Tokenization

def tokenize(text: str) -> list[str]:
    """
    Lowercase, strip punctuation, and split on whitespace.

    Examples
    --------
    >>> tokenize("Wrap the bandage.")
    ['wrap', 'the', 'bandage']
    >>> tokenize("")
    []
    """
    return _PUNCTUATION.sub('', text.lower()).split()



### Domain Types

@dataclass(frozen=True)
class TimeInterval:
    """
    Closed time interval in seconds.

    Attributes
    ----------
    start : float
        Start time (non-negative)
    end : float
        End time (not before start)
    """
    start: float
    end: float

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise SpanError(f"interval bounds must be finite, got [{self.start}, {self.end}]")
        if self.start < 0:
            raise SpanError(f"interval start must be non-negative, got {self.start}")
        if self.start > self.end:
            raise SpanError(f"interval start {self.start} is after its end {self.end}")

    @property
    def length(self) -> float:
        return self.end - self.start

    def overlap(self, other: 'TimeInterval') -> float:
        """
        Return the length of the intersection with another interval.
        """
        return max(0.0, min(self.end, other.end) - max(self.start, other.start))

    def contains(self, other: 'TimeInterval') -> bool:
        """
        Return whether another interval lies within this one.
        """
        return self.start <= other.start and other.end <= self.end

    def to_tuple(self) -> tuple[float, float]:
        return (self.start, self.end)


@dataclass(frozen=True)
class SubtitleUnit:
    """
    One timestamped subtitle segment.

    Attributes
    ----------
    index : int
        1-based ordinal of the unit within its video
    text : str
        Subtitle text
    interval : TimeInterval
        Time span of the subtitle
    """
    index: int
    text: str
    interval: TimeInterval

    @functools.cached_property
    def tokens(self) -> tuple[str, ...]:
        return tuple(tokenize(self.text))


@dataclass(frozen=True)
class VideoDoc:
    """
    A subtitled video.

    Attributes
    ----------
    video_id : str
        Unique video identifier
    units : tuple[SubtitleUnit, ...]
        Subtitle units ordered by start time
    duration : float
        Video length in seconds
    """
    video_id: str
    units: tuple[SubtitleUnit, ...]
    duration: float

    def __post_init__(self):
        if not self.units:
            raise CorpusError("video has no subtitle units", record=self.video_id)
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise CorpusError(f"invalid duration {self.duration}", record=self.video_id)
        for prev, unit in zip(self.units, self.units[1:]):
            if unit.interval.start < prev.interval.end:
                raise CorpusError(
                    f"subtitle {unit.index} starts at {unit.interval.start} "
                    f"before subtitle {prev.index} ends at {prev.interval.end}",
                    record=self.video_id,
                )
        if self.units[-1].interval.end > self.duration:
            raise CorpusError(
                f"last subtitle ends at {self.units[-1].interval.end} "
                f"after the video duration {self.duration}",
                record=self.video_id,
            )

    @functools.cached_property
    def tokens(self) -> tuple[str, ...]:
        """
        All subtitle tokens, in order.
        """
        return tuple(token for unit in self.units for token in unit.tokens)

    def unit_at(self, time: float) -> SubtitleUnit | None:
        """
        Return the unit whose interval covers the given time, if any.
        """
        for unit in self.units:
            if unit.interval.start <= time <= unit.interval.end:
                return unit


@dataclass(frozen=True)
class Query:
    """
    A question as seen by a ranker: its identifier and text, with no gold video.
    """
    question_id: str
    question: str

    @functools.cached_property
    def tokens(self) -> tuple[str, ...]:
        return tuple(tokenize(self.question))


@dataclass(frozen=True)
class QAInstance:
    """
    A question together with its gold video and answer interval.

    Attributes
    ----------
    question_id : str
        Unique question identifier
    question : str
        Question text
    video_id : str
        Identifier of the video holding the answer
    answer : TimeInterval
        Ground-truth answer interval
    """
    question_id: str
    question: str
    video_id: str
    answer: TimeInterval

    @functools.cached_property
    def tokens(self) -> tuple[str, ...]:
        return tuple(tokenize(self.question))

    def query(self) -> Query:
        """
        Return the question stripped of its gold video and answer.
        """
        return Query(self.question_id, self.question)


def _intersects_video(answer: TimeInterval, video: VideoDoc) -> bool:
    span = TimeInterval(0.0, video.duration)
    if answer.length > 0:
        return answer.overlap(span) > 0
    return span.contains(answer)


@dataclass(frozen=True)
class CorpusSplit:
    """
    A collection of videos with the questions asked about them.

    Attributes
    ----------
    videos : Mapping[str, VideoDoc]
        Videos indexed by id (in document order)
    qa : tuple[QAInstance, ...]
        Questions
    split_name : Split
        Name of the split
    """
    videos: Mapping[str, VideoDoc]
    qa: tuple[QAInstance, ...]
    split_name: Split = Split.train
    _qa_index: dict[str, QAInstance] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'split_name', Split.parse(self.split_name))
        object.__setattr__(self, 'qa', tuple(self.qa))

        index = {}
        for qa in self.qa:
            if qa.question_id in index:
                raise CorpusError("duplicate question id", record=qa.question_id)
            index[qa.question_id] = qa

            video = self.videos.get(qa.video_id)
            if video is None:
                if self.split_name != Split.test:
                    raise CorpusError(
                        f"question refers to unknown video {qa.video_id!r}",
                        record=qa.question_id,
                    )
                logger.warning(
                    "Test question %s refers to unknown video %r",
                    qa.question_id, qa.video_id)
            elif not _intersects_video(qa.answer, video):
                raise CorpusError(
                    f"answer [{qa.answer.start}, {qa.answer.end}] lies outside "
                    f"video {qa.video_id!r} of duration {video.duration}",
                    record=qa.question_id,
                )

        object.__setattr__(self, '_qa_index', index)

    def __len__(self) -> int:
        return len(self.qa)

    def __iter__(self) -> Iterator[QAInstance]:
        return iter(self.qa)

    @property
    def video_ids(self) -> list[str]:
        return list(self.videos)

    def question(self, question_id: str) -> QAInstance:
        """
        Look up a question by id.
        """
        try:
            return self._qa_index[question_id]
        except KeyError:
            raise CorpusError("unknown question id", record=question_id) from None

    def queries(self) -> list[Query]:
        """
        Return the questions without their gold videos or answers.
        """
        return [qa.query() for qa in self.qa]

    def gold_videos(self) -> dict[str, str]:
        """
        Return the gold video id of each question.
        """
        return {qa.question_id: qa.video_id for qa in self.qa}

    def gold_answers(self) -> dict[str, TimeInterval]:
        """
        Return the gold answer interval of each question.
        """
        return {qa.question_id: qa.answer for qa in self.qa}

    def with_questions(self, qa: tuple[QAInstance, ...], split_name: Split | str) -> 'CorpusSplit':
        """
        Return a split over the same videos with a different question set.
        """
        return CorpusSplit(dict(self.videos), tuple(qa), Split.parse(split_name))



### Parsing

def _require(record: Mapping[str, Any], key: str, kind: type | tuple[type, ...], record_id: str):
    """
    Fetch a required field of the given type from a JSON record.
    """
    if not isinstance(record, Mapping):
        raise CorpusError(f"expected an object, got {type(record).__name__}", record=record_id)
    if key not in record:
        raise CorpusError(f"missing field {key!r}", record=record_id)

    value = record[key]
    if isinstance(value, bool) or not isinstance(value, kind):
        raise CorpusError(f"field {key!r} has invalid type {type(value).__name__}", record=record_id)

    return value

def _interval(start: Any, end: Any, record_id: str) -> TimeInterval:
    try:
        return TimeInterval(float(start), float(end))
    except SpanError as e:
        raise CorpusError(str(e), record=record_id) from None

def _parse_video(record: Mapping[str, Any], position: int) -> VideoDoc:
    video_id = _require(record, 'video_id', str, f"videos[{position}]")
    duration = _require(record, 'duration', (int, float), video_id)
    subtitles = _require(record, 'subtitles', list, video_id)

    units = []
    for j, subtitle in enumerate(subtitles, start=1):
        unit_id = f"{video_id}/subtitles[{j - 1}]"
        interval = _interval(
            _require(subtitle, 'start', (int, float), unit_id),
            _require(subtitle, 'end', (int, float), unit_id),
            unit_id,
        )
        units.append(SubtitleUnit(j, _require(subtitle, 'text', str, unit_id), interval))

    return VideoDoc(video_id, tuple(units), float(duration))

def _parse_qa(record: Mapping[str, Any], position: int) -> QAInstance:
    question_id = _require(record, 'question_id', str, f"qa[{position}]")
    answer = _interval(
        _require(record, 'answer_start', (int, float), question_id),
        _require(record, 'answer_end', (int, float), question_id),
        question_id,
    )
    return QAInstance(
        question_id,
        _require(record, 'question', str, question_id),
        _require(record, 'video_id', str, question_id),
        answer,
    )

def parse_corpus(payload: bytes | str) -> CorpusSplit:
    """
    Parse and validate a corpus document.

    Parameters
    ----------
    payload : bytes or str
        UTF-8 JSON document

    Raises
    ------
    CorpusError
        If the document is malformed, naming the offending record
    """
    try:
        document = json.loads(payload)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CorpusError(f"malformed corpus JSON: {e}") from None

    split_name = _require(document, 'split', str, 'document')
    if split_name not in Split.choices():
        raise CorpusError(f"unknown split {split_name!r}", record='document')

    videos = {}
    for i, record in enumerate(_require(document, 'videos', list, 'document')):
        video = _parse_video(record, i)
        if video.video_id in videos:
            raise CorpusError("duplicate video id", record=video.video_id)
        videos[video.video_id] = video

    qa = tuple(
        _parse_qa(record, i)
        for i, record in enumerate(_require(document, 'qa', list, 'document'))
    )

    return CorpusSplit(videos, qa, Split.parse(split_name))

def serialize_corpus(split: CorpusSplit) -> bytes:
    """
    Serialize a corpus split to its JSON document (UTF-8).
    """
    document = {
        'split': split.split_name.value,
        'videos': [
            {
                'video_id': video.video_id,
                'duration': video.duration,
                'subtitles': [
                    {'start': u.interval.start, 'end': u.interval.end, 'text': u.text}
                    for u in video.units
                ],
            }
            for video in split.videos.values()
        ],
        'qa': [
            {
                'question_id': qa.question_id,
                'question': qa.question,
                'video_id': qa.video_id,
                'answer_start': qa.answer.start,
                'answer_end': qa.answer.end,
            }
            for qa in split.qa
        ],
    }
    return json.dumps(document, indent=2, ensure_ascii=False).encode('utf-8')

def load_corpus(path: str | Path) -> CorpusSplit:
    """
    Read a corpus document from disk.
    """
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise CorpusError(f"cannot read corpus {path}: {e}") from None
    return parse_corpus(payload)

def save_corpus(split: CorpusSplit, path: str | Path):
    """
    Write a corpus document to disk.
    """
    Path(path).write_bytes(serialize_corpus(split))
