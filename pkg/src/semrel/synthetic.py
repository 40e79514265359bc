"""Synthetic fixtures: small datasets with known, recomputable labels.

The overlap dataset labels every pair with the Jaccard overlap of its
word sets.  The second sentence samples a subset of the first sentence's
words, so the label sweeps the j/m levels evenly, and words are built
from disjoint letters so character-level encoders see well-separated
token evidence.  Both choices keep the tiny built-in encoder trainable
within a few hundred optimizer steps.
"""

from __future__ import annotations

import random
import string

from .corpus import Dataset, SentencePair


def overlap_vocabulary(n_words: int = 16) -> list[str]:
    if n_words > len(string.ascii_lowercase):
        raise ValueError("at most 26 distinct-letter words available")
    return [letter * 3 for letter in string.ascii_lowercase[:n_words]]


def token_overlap(s1: str, s2: str) -> float:
    """Jaccard overlap of whitespace-token sets."""
    a, b = set(s1.split()), set(s2.split())
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def make_overlap_dataset(
    n_pairs: int = 64,
    seed: int = 5,
    split_name: str = "train",
    language_tag: str = "syn",
    vocab_size: int = 16,
    words_per_sentence: int = 6,
) -> Dataset:
    """Sentence pairs scored by token-set overlap.

    Sentence 1 holds ``words_per_sentence`` distinct words; sentence 2 is
    a shuffled subset of them, so the gold score is exactly j/m for a
    subset of size j.
    """
    rng = random.Random(seed)
    vocab = overlap_vocabulary(vocab_size)
    pairs = []
    for i in range(n_pairs):
        words1 = rng.sample(vocab, words_per_sentence)
        subset_size = rng.randint(1, words_per_sentence)
        words2 = rng.sample(words1, subset_size)
        rng.shuffle(words2)
        s1 = " ".join(words1)
        s2 = " ".join(words2)
        pairs.append(SentencePair(f"syn{i:03d}", s1, s2, token_overlap(s1, s2)))
    return Dataset(split_name, language_tag, tuple(pairs))


def make_unrelated_sentence(rng: random.Random, exclude: str, vocab: list[str]) -> str:
    """A sentence sharing no words with ``exclude``."""
    used = set(exclude.split())
    pool = [w for w in vocab if w not in used]
    if not pool:
        raise ValueError("vocabulary exhausted")
    return " ".join(rng.sample(pool, min(len(pool), rng.randint(2, 4))))
