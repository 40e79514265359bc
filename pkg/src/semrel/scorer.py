"""Unsupervised relatedness route: per-sentence embeddings and cosine.

Each sentence is tokenized and encoded alone (bi-encoder style, unlike the
supervised route's joint encoding), pooled to one vector, and pairs are
scored by cosine similarity, optionally rescaled from [-1, 1] to [0, 1].
Takes no labels anywhere: the API has no score inputs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Dataset, normalize_text
from .encoders import Encoder, PoolingStrategy, pool
from .evaluation import PredictionSet


@dataclass
class ScorerConfig:
    pooling: PoolingStrategy = PoolingStrategy.AVERAGE
    rescale_to_unit_interval: bool = True
    max_seq_len: int = 512

    def __post_init__(self):
        if not isinstance(self.pooling, PoolingStrategy):
            self.pooling = PoolingStrategy.parse(str(self.pooling))


def cosine_similarity(u, v) -> float:
    """dot(u, v) / (|u| |v|); errors on zero-norm input."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm vectors")
    value = float(u @ v) / (nu * nv)
    return min(1.0, max(-1.0, value))


def _sentence_vector(sentence: str, encoder: Encoder, config: ScorerConfig) -> np.ndarray:
    normalized = normalize_text(sentence)
    if not normalized:
        raise ValueError("sentence is empty after normalization")
    tokens = encoder.tokenize(normalized, config.max_seq_len)
    return pool(encoder.encode(tokens), config.pooling)


def score_pair(s1: str, s2: str, encoder: Encoder, config: ScorerConfig | None = None) -> float:
    """Relatedness of one pair; rescaled to [0, 1] when configured."""
    config = config or ScorerConfig()
    value = cosine_similarity(
        _sentence_vector(s1, encoder, config),
        _sentence_vector(s2, encoder, config),
    )
    if config.rescale_to_unit_interval:
        value = (1.0 + value) / 2.0
    return value


def score_dataset(
    data: Dataset, encoder: Encoder, config: ScorerConfig | None = None
) -> PredictionSet:
    """One prediction per pair, order-stable. Gold labels are never read."""
    config = config or ScorerConfig()
    cache: dict[str, np.ndarray] = {}

    def vector(sentence: str) -> np.ndarray:
        if sentence not in cache:
            cache[sentence] = _sentence_vector(sentence, encoder, config)
        return cache[sentence]

    entries: dict[str, float] = {}
    for pair in data:
        value = cosine_similarity(vector(pair.sentence1), vector(pair.sentence2))
        if config.rescale_to_unit_interval:
            value = (1.0 + value) / 2.0
        entries[pair.pair_id] = value
    return PredictionSet(entries)


def anisotropy_estimate(
    sentences: Sequence[str], encoder: Encoder, config: ScorerConfig | None = None
) -> float:
    """Mean pairwise cosine over all sentence pairs; a geometry diagnostic.

    Values near 1 mean the embeddings crowd a narrow cone, which blunts
    raw-cosine relatedness scoring.
    """
    if len(sentences) < 2:
        raise ValueError("need at least two sentences")
    config = config or ScorerConfig()
    vectors = [_sentence_vector(s, encoder, config) for s in sentences]
    total = 0.0
    count = 0
    for a, b in itertools.combinations(vectors, 2):
        total += cosine_similarity(a, b)
        count += 1
    return total / count
