from __future__ import annotations

import pytest

from ccgs.config import EncoderConfig, RunConfig, SynthConfig
from ccgs.core.corpus import CorpusSplit, QAInstance, SubtitleUnit, TimeInterval, VideoDoc
from ccgs.core.synthetic import generate_synthetic_corpus



def make_video(video_id: str, texts: list[str], unit_seconds: float = 2.0, gap: float = 0.0) -> VideoDoc:
    """
    Build a video whose unit k covers [k * (unit_seconds + gap), k * (unit_seconds + gap) + unit_seconds].
    """
    stride = unit_seconds + gap
    units = tuple(
        SubtitleUnit(k + 1, text, TimeInterval(k * stride, k * stride + unit_seconds))
        for k, text in enumerate(texts)
    )
    return VideoDoc(video_id, units, len(texts) * stride)


@pytest.fixture
def twelve_unit_video() -> VideoDoc:
    """
    Twelve two-token units; unit j covers [2.5 j - 1, 2.5 j + 1], so the
    answer [14, 23] overlaps exactly units 6 to 9 (tokens 10 to 17).
    """
    units = tuple(
        SubtitleUnit(j, f"step{j} part{j}", TimeInterval(2.5 * j - 1.0, 2.5 * j + 1.0))
        for j in range(1, 13)
    )
    return VideoDoc('vid-fig', units, 32.0)


@pytest.fixture
def tiny_split() -> CorpusSplit:
    videos = {
        'a': make_video('a', ['apply pressure', 'to the wound', 'then wrap it']),
        'b': make_video('b', ['boil the water', 'add the pasta', 'stir gently']),
        'c': make_video('c', ['stretch your arms', 'hold the pose', 'breathe slowly']),
    }
    qa = (
        QAInstance('q1', 'how do I wrap a wound?', 'a', TimeInterval(2.0, 6.0)),
        QAInstance('q2', 'when do I add pasta?', 'b', TimeInterval(2.0, 4.0)),
        QAInstance('q3', 'how should I breathe?', 'c', TimeInterval(4.0, 6.0)),
    )
    return CorpusSplit(videos, qa, 'train')


@pytest.fixture
def synth_config() -> SynthConfig:
    return SynthConfig(
        n_videos=4, units_per_video=6, tokens_per_unit=3,
        vocab_size=64, n_questions=8, n_distractors=1,
    )


@pytest.fixture
def synth_split(synth_config: SynthConfig) -> CorpusSplit:
    return generate_synthetic_corpus(synth_config, seed=7)


@pytest.fixture
def tiny_encoder() -> EncoderConfig:
    return EncoderConfig(d=8, d_v=4, buckets=64, visual_buckets=32, seed=3)


@pytest.fixture
def tiny_run_config() -> RunConfig:
    return RunConfig().with_overrides([
        'encoder.d=8',
        'encoder.d_v=4',
        'encoder.buckets=64',
        'encoder.visual_buckets=32',
        'train.max_length=64',
        'train.steps=3',
        'train.eval_every=2',
        'train.log_every=1',
        'train.lr=0.01',
        'train.seed=11',
        'model.dropout=0.1',
    ])
