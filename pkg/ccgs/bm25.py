"""
Okapi BM25 retrieval over video subtitles.

    score(q, D) = sum_t IDF(t) * tf(t, D) * (k1 + 1) / (tf(t, D) + k1 * (1 - b + b * |D| / avgdl))
    IDF(t) = ln((N - df(t) + 0.5) / (df(t) + 0.5) + 1)

Query terms are summed with multiplicity.
"""
from __future__ import annotations

import functools
import numpy as np

from collections import Counter
from dataclasses import dataclass
from numpy.typing import NDArray as ndarray
from typing import Mapping, Sequence

from .core.constants import BM25_B, BM25_K1
from .core.corpus import VideoDoc
from .errors import CorpusError



@dataclass(frozen=True, eq=False)
class Bm25Index:
    """
    Term statistics of a video collection.

    Attributes
    ----------
    video_ids : tuple[str, ...]
        Indexed videos, in corpus order
    vocabulary : dict[str, int]
        Column of each term
    tf : ndarray[float] of shape (N, V)
        Term frequency of each term in each video's subtitles
    doc_len : ndarray[float] of shape (N,)
        Number of subtitle tokens per video
    df : ndarray[int] of shape (V,)
        Number of videos containing each term
    k1 : float
        Term frequency saturation
    b : float
        Document length normalization
    """
    video_ids: tuple[str, ...]
    vocabulary: dict[str, int]
    tf: ndarray[np.float64]
    doc_len: ndarray[np.float64]
    df: ndarray[np.int64]
    k1: float = BM25_K1
    b: float = BM25_B

    @property
    def N(self) -> int:
        return len(self.video_ids)

    @property
    def avgdl(self) -> float:
        return float(self.doc_len.mean())

    @property
    def idf(self) -> ndarray[np.float64]:
        return np.log((self.N - self.df + 0.5) / (self.df + 0.5) + 1.0)

    @functools.cached_property
    def weights(self) -> ndarray[np.float64]:
        """
        Per-video, per-term score contributions, shape (N, V).
        """
        avgdl = self.avgdl if self.avgdl > 0 else 1.0
        norm = self.k1 * (1.0 - self.b + self.b * self.doc_len / avgdl)
        denom = self.tf + norm[:, None]
        saturation = np.divide(
            self.tf * (self.k1 + 1.0), denom, out=np.zeros_like(self.tf), where=denom > 0)
        return saturation * self.idf[None, :]


def bm25_build(
    videos: Mapping[str, VideoDoc],
    k1: float = BM25_K1,
    b: float = BM25_B) -> Bm25Index:
    """
    Index the subtitle tokens of a video collection.

    Raises
    ------
    CorpusError
        If the collection is empty
    """
    if not videos:
        raise CorpusError("cannot build a BM25 index over an empty corpus")

    counts = [Counter(video.tokens) for video in videos.values()]
    vocabulary = {term: i for i, term in enumerate(sorted(set().union(*counts)))}

    tf = np.zeros((len(counts), len(vocabulary)), dtype=np.float64)
    for row, count in enumerate(counts):
        for term, freq in count.items():
            tf[row, vocabulary[term]] = freq

    return Bm25Index(
        video_ids=tuple(videos),
        vocabulary=vocabulary,
        tf=tf,
        doc_len=tf.sum(axis=1),
        df=(tf > 0).sum(axis=0).astype(np.int64),
        k1=k1,
        b=b,
    )

def bm25_scores(query: Sequence[str], index: Bm25Index) -> ndarray[np.float64]:
    """
    Score every indexed video against a tokenized query, shape (N,).
    """
    weights = Counter(t for t in query if t in index.vocabulary)
    if not weights:
        return np.zeros(index.N)

    columns = np.array([index.vocabulary[t] for t in weights], dtype=np.int64)
    multiplicity = np.array(list(weights.values()), dtype=np.float64)
    return index.weights[:, columns] @ multiplicity

def bm25_rank(query: Sequence[str], index: Bm25Index) -> list[tuple[str, float]]:
    """
    Rank the indexed videos by BM25 score (descending, ties by video id).
    """
    scores = bm25_scores(query, index)
    order = sorted(range(index.N), key=lambda i: (-scores[i], index.video_ids[i]))
    return [(index.video_ids[i], float(scores[i])) for i in order]
