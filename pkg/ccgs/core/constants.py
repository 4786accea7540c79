from __future__ import annotations

from ..utils.enum import IndexedEnum



#: Large negative value written into masked and padded logits
SENTINEL = -1e30

#: Any logit at or below this value is treated as masked
SENTINEL_THRESHOLD = -1e29

#: Default dropout rate inside the fusion pipeline
DROPOUT_P = 0.1

#: Base of the sinusoidal position table
POSITION_BASE = 10000.0

#: Reference-scale hyperparameters
REFERENCE_HIDDEN_SIZE = 768
REFERENCE_LEARNING_RATE = 1e-5
REFERENCE_NUM_NEGATIVES = 1
REFERENCE_BATCH_SIZE = 2
REFERENCE_MAX_LENGTH = 1300

#: Default Okapi BM25 parameters
BM25_K1 = 1.2
BM25_B = 0.75

#: Default evaluation cut-offs and IoU thresholds
RANK_KS = (1, 10, 100)
RECALL_KS = (1, 5, 10)
IOU_THRESHOLDS = (0.3, 0.5, 0.7)

#: Split proportions of the reference corpus (train / val / test questions)
REFERENCE_SPLIT_SIZES = (2710, 145, 155)



class Split(str, IndexedEnum):
    """
    Enumeration of corpus splits.
    """
    train = 'train'
    val = 'val'
    test = 'test'


class NegativeStrategy(str, IndexedEnum):
    """
    Enumeration of strategies for drawing negative videos.
    """
    uniform = 'uniform'
    bm25_hard = 'bm25-hard'


class EvalMode(str, IndexedEnum):
    """
    Enumeration of evaluation pipelines.
    """
    ccgs = 'ccgs' #: rank and localize with the global-span matrix
    bm25 = 'bm25' #: rank with BM25 only (no localization)
    pipeline = 'bm25+ccgs-span' #: rank with BM25, localize with the global-span matrix


class Similarity(str, IndexedEnum):
    """
    Enumeration of context-query similarity functions.
    """
    dot = 'dot'
    trilinear = 'trilinear'


class PositionForm(str, IndexedEnum):
    """
    Enumeration of span position embedding forms.
    """
    sinusoid = 'sinusoid'
    learned = 'learned'


class RankIoU(str, IndexedEnum):
    """
    Enumeration of readings of the Rank@k IoU metric.
    """
    gold = 'gold' #: score the span decoded in the gold video, if it is ranked within top-k
    best = 'best' #: score the best span among all top-k videos


class Precision(str, IndexedEnum):
    """
    Enumeration of floating point precisions.
    """
    float64 = 'float64'
    float32 = 'float32'
