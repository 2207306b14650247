"""Implicit collaborative filtering with BPR under pluggable negative sampling.

Uniform (RNS), dynamic hard (DNS) and positive-dominated synthesized (PDNS)
negatives, MF and LightGCN scoring, full-catalog Recall/NDCG evaluation and a
false-negative disclosure simulation.
"""
from .dataset import InteractionDataset, SplitSpec, apply_split, ingest, load_interactions
from .errors import ConfigError, NonFiniteGradientError, SamplingError
from .evaluation import EvalConfig, evaluate
from .kernels import BACKEND
from .losses import LossConfig, bpr_loss, loss_gradient, soft_bpr_loss
from .models import EmbeddingModel, NormalizedGraph, init_embeddings
from .sampling import SamplerConfig
from .training import EpochRecord, Trainer, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "EmbeddingModel",
    "EpochRecord",
    "EvalConfig",
    "InteractionDataset",
    "LossConfig",
    "NonFiniteGradientError",
    "NormalizedGraph",
    "SamplerConfig",
    "SamplingError",
    "SplitSpec",
    "Trainer",
    "apply_split",
    "bpr_loss",
    "evaluate",
    "ingest",
    "init_embeddings",
    "load_interactions",
    "loss_gradient",
    "soft_bpr_loss",
    "train",
]
