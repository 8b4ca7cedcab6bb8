"""Snippet- and rating-conditioned review answer generation in numpy."""
from .config import TrainConfig, load_config
from .corpus import Review, TrainingExample, Vocabulary
from .model import ReviewAnswerModel, query_arrays, tensorize
from .trainer import Trainer, load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "Review",
    "ReviewAnswerModel",
    "TrainConfig",
    "Trainer",
    "TrainingExample",
    "Vocabulary",
    "load_config",
    "load_model",
    "query_arrays",
    "save_model",
    "tensorize",
]
