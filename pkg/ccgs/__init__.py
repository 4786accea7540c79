from .base import CCGSModel
from .config import CONFIGURATIONS, RunConfig
from .core import *
from .evaluation import MetricsReport, Prediction, evaluate, rank_videos
from .training import fit, sample_batch, train_step

__version__ = '0.1.0'
