"""Semantic textual relatedness toolkit.

Two scoring routes over sentence pairs: a supervised cross-encoder
regressor fine-tuned on concatenated pairs, and an unsupervised
bi-encoder cosine scorer over pooled embeddings.  Ships with paraphrase
augmentation (generation, auto filters, human review) and a tie-aware
rank-correlation evaluation harness.
"""

__version__ = "0.1.0"

from .corpus import Dataset, SentencePair, load_dataset, normalize_text, save_dataset
from .encoders import (
    EmbeddingMatrix,
    Encoder,
    NgramHashEncoder,
    PoolingStrategy,
    TokenizedInput,
    ToyEncoder,
    build_encoder,
    pool,
)
from .evaluation import EvaluationReport, PredictionSet, evaluate, r_squared, spearman
from .regressor import RegressionModel, TrainConfig, TrainLog, mse_loss, predict, train
from .scorer import ScorerConfig, anisotropy_estimate, cosine_similarity, score_dataset, score_pair

__all__ = [
    "Dataset",
    "SentencePair",
    "load_dataset",
    "normalize_text",
    "save_dataset",
    "Encoder",
    "ToyEncoder",
    "NgramHashEncoder",
    "TokenizedInput",
    "EmbeddingMatrix",
    "PoolingStrategy",
    "pool",
    "build_encoder",
    "TrainConfig",
    "TrainLog",
    "RegressionModel",
    "mse_loss",
    "train",
    "predict",
    "ScorerConfig",
    "cosine_similarity",
    "score_pair",
    "score_dataset",
    "anisotropy_estimate",
    "PredictionSet",
    "EvaluationReport",
    "spearman",
    "r_squared",
    "evaluate",
]
