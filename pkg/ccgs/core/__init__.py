from .constants import *
from .corpus import (
    CorpusSplit,
    QAInstance,
    Query,
    SubtitleUnit,
    TimeInterval,
    VideoDoc,
    load_corpus,
    parse_corpus,
    save_corpus,
    serialize_corpus,
    tokenize,
)
from .span_map import SpanLabelMap, SpanPoint, build_span_label_map, span_to_time, time_to_span
