"""
Desk-scale synthetic corpora where every question is answerable by construction.

Vocabulary layout (tokens are named ``w<i>``)::

    [0, n_videos)                            one topic token per video
    [n_videos, n_videos + 2 * n_questions)   start / end answer markers per question
    [n_videos + 2 * n_questions, vocab_size) shared filler tokens

Each video shows its topic token in the middle of its first unit and of one
other unit. Each question names its video's topic, its own start and end
markers, and a few filler tokens. The start marker opens the first unit of
the answer span and the end marker closes its last unit, so the answer is
aligned to whole subtitle units.
"""
from __future__ import annotations

import numpy as np

from collections import Counter

from .constants import Split
from .corpus import CorpusSplit, QAInstance, SubtitleUnit, TimeInterval, VideoDoc
from ..config import SynthConfig
from ..errors import ConfigError
from ..utils.random import RandomMixin, np_random



class SyntheticCorpusGenerator(RandomMixin):
    """
    Seeded generator of synthetic corpora.

    Examples
    --------
    >>> generator = SyntheticCorpusGenerator(SynthConfig(n_videos=4, n_questions=8), seed=42)
    >>> corpus = generator.generate()
    >>> len(corpus.videos), len(corpus.qa)
    (4, 8)
    """

    def __init__(self, config: SynthConfig, seed: int):
        """
        Parameters
        ----------
        config : SynthConfig
            Corpus shape
        seed : int
            Random seed

        Raises
        ------
        ConfigError
            If the vocabulary cannot hold the reserved tokens, or a video
            cannot hold the answer spans of its questions
        """
        super().__init__(np_random(seed))
        self.config = config

        num_reserved = config.n_videos + 2 * config.n_questions
        if config.vocab_size < num_reserved + 1:
            raise ConfigError(
                f"vocab_size {config.vocab_size} cannot hold {config.n_videos} topic tokens, "
                f"{2 * config.n_questions} answer markers and at least one filler token")

        questions_per_video = -(-config.n_questions // config.n_videos)
        if config.units_per_video - 1 < questions_per_video:
            raise ConfigError(
                f"{config.units_per_video} units per video cannot hold "
                f"{questions_per_video} disjoint answer spans after the topic unit")

        self.num_reserved = num_reserved
        self.filler = np.arange(num_reserved, config.vocab_size)

    @staticmethod
    def word(token_id: int) -> str:
        return f"w{token_id}"

    def topic(self, video: int) -> int:
        return video

    def markers(self, question: int) -> tuple[int, int]:
        start = self.config.n_videos + 2 * question
        return start, start + 1

    def _answer_spans(self, num_questions: int) -> list[tuple[int, int]]:
        """
        Place disjoint unit ranges (first, last) after the topic unit,
        one per question, in separate equal blocks.
        """
        cfg = self.config
        block = (cfg.units_per_video - 1) // max(num_questions, 1)
        spans = []
        for i in range(num_questions):
            length = self._rand_int(1, min(cfg.max_answer_units, block) + 1)
            offset = self._rand_int(0, block - length + 1)
            first = 1 + i * block + offset
            spans.append((first, first + length - 1))

        return spans

    def generate(self, split_name: Split | str = Split.train) -> CorpusSplit:
        """
        Generate a corpus split holding every video and question.
        """
        cfg = self.config
        n_units, n_tokens = cfg.units_per_video, cfg.tokens_per_unit
        middle = n_tokens // 2

        assignments = [[q for q in range(cfg.n_questions) if q % cfg.n_videos == v]
                       for v in range(cfg.n_videos)]

        grids, spans = [], {}
        for v, questions in enumerate(assignments):
            grid = self._filler_grid((n_units, n_tokens))
            grid[0, middle] = self.topic(v)
            grid[self._rand_int(1, n_units), middle] = self.topic(v)

            for q, (first, last) in zip(questions, self._answer_spans(len(questions))):
                start_marker, end_marker = self.markers(q)
                grid[first, 0] = start_marker
                grid[last, n_tokens - 1] = end_marker
                spans[q] = (v, first, last)

            grids.append(grid)

        videos = {}
        for v, grid in enumerate(grids):
            video_id = f"v{v:03d}"
            units = tuple(
                SubtitleUnit(
                    k + 1,
                    ' '.join(self.word(t) for t in grid[k]),
                    TimeInterval(k * cfg.unit_seconds, (k + 1) * cfg.unit_seconds),
                )
                for k in range(n_units)
            )
            videos[video_id] = VideoDoc(video_id, units, n_units * cfg.unit_seconds)

        document_frequency = Counter(t for grid in grids for t in set(grid.ravel().tolist()))

        qa = []
        for q in range(cfg.n_questions):
            v, first, last = spans[q]
            words = [self.topic(v), *self.markers(q)]
            words += self._distractors(grids[v], document_frequency)
            qa.append(QAInstance(
                question_id=f"q{q:04d}",
                question=' '.join(self.word(t) for t in words),
                video_id=f"v{v:03d}",
                answer=TimeInterval(first * cfg.unit_seconds, (last + 1) * cfg.unit_seconds),
            ))

        return CorpusSplit(videos, tuple(qa), Split.parse(split_name))

    def _filler_grid(self, shape: tuple[int, int]) -> np.ndarray:
        return np.array(
            [[self._rand_elem(self.filler) for _ in range(shape[1])] for _ in range(shape[0])],
            dtype=np.int64,
        )

    def _distractors(self, grid: np.ndarray, document_frequency: Counter) -> list[int]:
        """
        Pick filler tokens of the gold video, preferring tokens that also
        appear in other videos.
        """
        present = sorted({int(t) for t in grid.ravel() if t >= self.num_reserved})
        shared = [t for t in present if document_frequency[t] >= 2]
        pool = shared if len(shared) >= self.config.n_distractors else present
        return self._rand_subset(pool, min(self.config.n_distractors, len(pool)))


def generate_synthetic_corpus(
    config: SynthConfig,
    seed: int,
    split_name: Split | str = Split.train) -> CorpusSplit:
    """
    Generate a synthetic corpus split (deterministic given the seed).

    Parameters
    ----------
    config : SynthConfig
        Corpus shape
    seed : int
        Random seed
    split_name : Split
        Name given to the returned split
    """
    return SyntheticCorpusGenerator(config, seed).generate(split_name)

def allocate_split_sizes(total: int, proportions: tuple[int, ...]) -> tuple[int, ...]:
    """
    Divide a count among proportions by the largest-remainder method.

    Examples
    --------
    >>> allocate_split_sizes(151, (2710, 145, 155))
    (136, 7, 8)
    """
    weight = sum(proportions)
    exact = [total * p / weight for p in proportions]
    sizes = [int(np.floor(e)) for e in exact]
    order = sorted(range(len(exact)), key=lambda i: (sizes[i] - exact[i], i))
    for i in order[:total - sum(sizes)]:
        sizes[i] += 1

    return tuple(sizes)

def split_corpus(
    corpus: CorpusSplit,
    proportions: tuple[int, int, int],
    seed: int) -> dict[Split, CorpusSplit]:
    """
    Partition the questions of a corpus into train / val / test splits
    over the same videos.

    Parameters
    ----------
    corpus : CorpusSplit
        Corpus to partition
    proportions : tuple[int, int, int]
        Relative sizes of the train, val and test splits
    seed : int
        Seed of the question shuffle
    """
    order = np_random(seed).permutation(len(corpus.qa))
    sizes = allocate_split_sizes(len(corpus.qa), proportions)
    bounds = np.cumsum((0, *sizes))

    splits = {}
    for split, lo, hi in zip(Split, bounds[:-1], bounds[1:]):
        chosen = sorted(order[lo:hi].tolist())
        splits[split] = corpus.with_questions(tuple(corpus.qa[i] for i in chosen), split)

    return splits
