"""Pluggable text encoders: tokenization, per-token embeddings, pooling.

The encoder contract: a tokenizer producing id/mask sequences in the
``[CLS] ... [SEP]`` / ``[CLS] ... [SEP] ... [SEP]`` layout, and an
``encode`` that maps token ids to a per-token embedding matrix from the
final layer.  Two built-ins ship for tests and smoke runs:

* ``ToyEncoder``: a tiny randomly initialized 2-layer transformer over
  character tokens (hidden size 32), trainable through torch autograd.
* ``NgramHashEncoder``: a frozen bag-of-character-ngram embedder whose
  rows are hashed ngram indicators; useful as a deterministic mock.

Real pretrained checkpoints are intentionally out of scope; anything
implementing ``Encoder`` can be plugged in.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum

import numpy as np
import torch
from torch import nn

PAD_ID = 0
CLS_ID = 1
SEP_ID = 2
_NUM_SPECIALS = 3
CHAR_VOCAB_SIZE = 256


def char_token_ids(text: str) -> list[int]:
    """Character-level content ids: codepoints hashed into the non-special id range."""
    span = CHAR_VOCAB_SIZE - _NUM_SPECIALS
    return [_NUM_SPECIALS + (ord(ch) % span) for ch in text]


@dataclass(frozen=True)
class TokenizedInput:
    """Padded token ids plus a validity mask (True exactly on non-padding)."""

    token_ids: tuple[int, ...]
    validity_mask: tuple[bool, ...]

    def __post_init__(self):
        if len(self.token_ids) != len(self.validity_mask):
            raise ValueError("token_ids and validity_mask lengths differ")
        if not self.token_ids or self.token_ids[0] != CLS_ID:
            raise ValueError("sequence must start with the [CLS] token")
        n_valid = sum(self.validity_mask)
        if tuple(self.validity_mask) != (True,) * n_valid + (False,) * (
            len(self.validity_mask) - n_valid
        ):
            raise ValueError("validity mask must be a True-prefix (padding is trailing)")
        for tid, valid in zip(self.token_ids, self.validity_mask):
            if not valid and tid != PAD_ID:
                raise ValueError("masked-out positions must hold the padding id")

    def __len__(self) -> int:
        return len(self.token_ids)

    @property
    def num_valid(self) -> int:
        return sum(self.validity_mask)


@dataclass
class EmbeddingMatrix:
    """L x d per-token vectors from the final layer plus the validity mask."""

    vectors: np.ndarray
    validity_mask: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.validity_mask = np.asarray(self.validity_mask, dtype=bool)
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be a 2-D matrix")
        if self.validity_mask.shape != (self.vectors.shape[0],):
            raise ValueError("validity_mask length must equal the number of rows")
        if not np.isfinite(self.vectors[self.validity_mask]).all():
            raise ValueError("valid embedding rows must be finite")

    @property
    def hidden_size(self) -> int:
        return self.vectors.shape[1]


class PoolingStrategy(Enum):
    CLS = "cls"
    AVERAGE = "avg"
    MAX = "max"
    MIN = "min"

    @classmethod
    def parse(cls, name: str) -> "PoolingStrategy":
        try:
            return cls(name.strip().lower())
        except ValueError:
            options = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown pooling {name!r}; expected one of: {options}")


def pool(matrix: EmbeddingMatrix, strategy: PoolingStrategy) -> np.ndarray:
    """Collapse a token matrix to one sentence vector. Padding rows never contribute."""
    mask = matrix.validity_mask
    if not mask.any():
        raise ValueError("cannot pool a matrix with no valid positions")
    if strategy is PoolingStrategy.CLS:
        if not mask[0]:
            raise ValueError("CLS pooling requires a valid first position")
        return matrix.vectors[0].copy()
    valid = matrix.vectors[mask]
    if strategy is PoolingStrategy.AVERAGE:
        return valid.mean(axis=0)
    if strategy is PoolingStrategy.MAX:
        return valid.max(axis=0)
    if strategy is PoolingStrategy.MIN:
        return valid.min(axis=0)
    raise ValueError(f"unhandled pooling strategy {strategy}")


def _fit_segment_lengths(len1: int, len2: int, budget: int) -> tuple[int, int]:
    # Equivalent to repeatedly trimming the longer segment (ties trim the
    # second) until the pair fits the budget.
    if len1 + len2 <= budget:
        return len1, len2
    half = budget // 2
    if len1 <= half:
        return len1, budget - len1
    if len2 <= half:
        return budget - len2, len2
    return budget - half, half


class Encoder(ABC):
    """Contract every encoder implements; owns tokenization and capacity."""

    name: str = "base"

    @property
    @abstractmethod
    def hidden_size(self) -> int: ...

    @property
    @abstractmethod
    def max_input_length(self) -> int: ...

    @abstractmethod
    def content_token_ids(self, text: str) -> list[int]:
        """Ids for raw text, without special tokens or padding."""

    @abstractmethod
    def encode(self, tokens: TokenizedInput) -> EmbeddingMatrix: ...

    @property
    def trainable_module(self) -> nn.Module | None:
        """Torch module for fine-tuning, or None for frozen encoders."""
        return None

    def get_config(self) -> dict:
        """Constructor kwargs sufficient to rebuild this encoder."""
        return {}

    def tokenize(self, text: str, max_len: int) -> TokenizedInput:
        """Single sentence: [CLS] tokens [SEP], tail-truncated, padded to max_len."""
        if max_len < 8:
            raise ValueError("max_len must be at least 8")
        ids = self.content_token_ids(text)[: max_len - 2]
        return self._assemble([CLS_ID, *ids, SEP_ID], max_len)

    def tokenize_pair(self, s1: str, s2: str, max_len: int) -> TokenizedInput:
        """Joint pair: [CLS] s1 [SEP] s2 [SEP], longest-segment-first truncation."""
        if max_len < 8:
            raise ValueError("max_len must be at least 8")
        ids1 = self.content_token_ids(s1)
        ids2 = self.content_token_ids(s2)
        keep1, keep2 = _fit_segment_lengths(len(ids1), len(ids2), max_len - 3)
        return self._assemble(
            [CLS_ID, *ids1[:keep1], SEP_ID, *ids2[:keep2], SEP_ID], max_len
        )

    @staticmethod
    def _assemble(ids: list[int], max_len: int) -> TokenizedInput:
        n = len(ids)
        padded = ids + [PAD_ID] * (max_len - n)
        mask = [True] * n + [False] * (max_len - n)
        return TokenizedInput(tuple(padded), tuple(mask))

    def encode_batch(self, batch: list[TokenizedInput]) -> list[EmbeddingMatrix]:
        return [self.encode(tokens) for tokens in batch]


class _AttentionBlock(nn.Module):
    """Post-norm transformer block: self-attention then a GELU feed-forward."""

    def __init__(self, hidden: int, heads: int, ffn: int):
        super().__init__()
        if hidden % heads:
            raise ValueError("hidden size must divide evenly into heads")
        self.heads = heads
        self.head_dim = hidden // heads
        self.query = nn.Linear(hidden, hidden)
        self.key = nn.Linear(hidden, hidden)
        self.value = nn.Linear(hidden, hidden)
        self.out = nn.Linear(hidden, hidden)
        self.norm1 = nn.LayerNorm(hidden)
        self.norm2 = nn.LayerNorm(hidden)
        self.ff1 = nn.Linear(hidden, ffn)
        self.ff2 = nn.Linear(ffn, hidden)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        bsz, length, hidden = x.shape

        def split(t: torch.Tensor) -> torch.Tensor:
            return t.view(bsz, length, self.heads, self.head_dim).transpose(1, 2)

        q, k, v = split(self.query(x)), split(self.key(x)), split(self.value(x))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~mask[:, None, None, :], float("-inf"))
        context = torch.softmax(scores, dim=-1) @ v
        context = context.transpose(1, 2).reshape(bsz, length, hidden)
        x = self.norm1(x + self.out(context))
        x = self.norm2(x + self.ff2(torch.nn.functional.gelu(self.ff1(x))))
        return x


class _ToyTransformer(nn.Module):
    def __init__(self, hidden: int, layers: int, heads: int, ffn: int, max_len: int,
                 output_scale: float):
        super().__init__()
        self.token_embedding = nn.Embedding(CHAR_VOCAB_SIZE, hidden)
        self.position_embedding = nn.Embedding(max_len, hidden)
        self.blocks = nn.ModuleList(_AttentionBlock(hidden, heads, ffn) for _ in range(layers))
        self.output_scale = output_scale

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.token_embedding(ids) + self.position_embedding(positions)[None, :, :]
        for block in self.blocks:
            x = block(x, mask)
        return x * self.output_scale


class ToyEncoder(Encoder):
    """Tiny randomly initialized transformer over character tokens.

    Runs in float64 for reproducibility and tight numeric checks.  The
    initialization mimics what makes pretrained checkpoints respond to
    small fine-tuning learning rates: the first block starts with
    content-matching attention (near-identity query/key projections, so
    a token attends to its own copies across both segments), later
    blocks start near-uniform so the CLS position aggregates the
    match evidence, and the final states are multiplied by
    ``output_scale`` so head gradients are usable at rates around 1e-5.
    A freshly constructed encoder is still random: all structure is
    perturbed by seeded noise and the embeddings are fully random.
    """

    name = "toy"

    def __init__(
        self,
        hidden_size: int = 32,
        num_layers: int = 2,
        num_heads: int = 4,
        ffn_size: int = 64,
        max_len: int = 512,
        seed: int = 0,
        output_scale: float = 448.0,
    ):
        self._hidden = hidden_size
        self._max_len = max_len
        self._config = dict(
            hidden_size=hidden_size,
            num_layers=num_layers,
            num_heads=num_heads,
            ffn_size=ffn_size,
            max_len=max_len,
            seed=seed,
            output_scale=output_scale,
        )
        self.module = _ToyTransformer(
            hidden_size, num_layers, num_heads, ffn_size, max_len, output_scale
        ).to(torch.float64)
        self._init_weights(seed)

    _MATCH_GAIN = 2.0      # query/key identity gain in the first block
    _CARRY_GAIN = 1.0      # value/output identity gain in every block
    _NOISE = 0.05          # perturbation on structured projections
    _FFN_STD = 0.03
    _POS_STD = 0.4

    def _init_weights(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)

        def noise(param: torch.Tensor, std: float) -> torch.Tensor:
            return torch.randn(param.shape, generator=gen, dtype=torch.float64) * std

        def near_identity(param: torch.Tensor, gain: float) -> None:
            param.copy_(torch.eye(param.shape[0], dtype=torch.float64) * gain
                        + noise(param, self._NOISE))

        module = self.module
        with torch.no_grad():
            module.token_embedding.weight.copy_(noise(module.token_embedding.weight, 1.0))
            module.token_embedding.weight[CLS_ID].zero_()
            module.position_embedding.weight.copy_(
                noise(module.position_embedding.weight, self._POS_STD))
            module.position_embedding.weight[0].zero_()
            for index, block in enumerate(module.blocks):
                if index == 0:
                    near_identity(block.query.weight, self._MATCH_GAIN)
                    near_identity(block.key.weight, self._MATCH_GAIN)
                else:
                    block.query.weight.copy_(noise(block.query.weight, self._NOISE))
                    block.key.weight.copy_(noise(block.key.weight, self._NOISE))
                near_identity(block.value.weight, self._CARRY_GAIN)
                near_identity(block.out.weight, self._CARRY_GAIN)
                block.ff1.weight.copy_(noise(block.ff1.weight, self._FFN_STD))
                block.ff2.weight.copy_(noise(block.ff2.weight, self._FFN_STD))
                for layer in (block.query, block.key, block.value, block.out,
                              block.ff1, block.ff2):
                    layer.bias.zero_()
                for norm in (block.norm1, block.norm2):
                    norm.weight.fill_(1.0)
                    norm.bias.zero_()

    @property
    def hidden_size(self) -> int:
        return self._hidden

    @property
    def max_input_length(self) -> int:
        return self._max_len

    @property
    def trainable_module(self) -> nn.Module:
        return self.module

    def get_config(self) -> dict:
        return dict(self._config)

    def content_token_ids(self, text: str) -> list[int]:
        return char_token_ids(text)

    def forward_tensor(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Differentiable forward over (B, L) id/mask tensors; grads flow."""
        if ids.shape[1] > self._max_len:
            raise ValueError(
                f"sequence length {ids.shape[1]} exceeds encoder capacity {self._max_len}"
            )
        return self.module(ids, mask)

    def encode(self, tokens: TokenizedInput) -> EmbeddingMatrix:
        return self.encode_batch([tokens])[0]

    def encode_batch(self, batch: list[TokenizedInput]) -> list[EmbeddingMatrix]:
        if not batch:
            return []
        lengths = {len(t) for t in batch}
        if len(lengths) != 1:
            raise ValueError("batch members must share one padded length")
        total = lengths.pop()
        if total > self._max_len:
            raise ValueError(f"sequence length {total} exceeds encoder capacity {self._max_len}")
        # Trailing padding shared by the whole batch is inert under masked
        # attention, so trim it before the forward pass.
        keep = max(t.num_valid for t in batch)
        ids = torch.tensor([t.token_ids[:keep] for t in batch], dtype=torch.long)
        mask = torch.tensor([t.validity_mask[:keep] for t in batch], dtype=torch.bool)
        with torch.no_grad():
            states = self.module(ids, mask).numpy()
        out = []
        for row, tokens in enumerate(batch):
            vectors = np.zeros((total, self._hidden), dtype=np.float64)
            vectors[:keep] = states[row]
            vectors[~np.asarray(tokens.validity_mask, dtype=bool)] = 0.0
            out.append(EmbeddingMatrix(vectors, np.asarray(tokens.validity_mask, dtype=bool)))
        return out


def _rolling_hash(window: tuple[int, ...], buckets: int) -> int:
    h = 0
    for tid in window:
        h = (h * 1000003 + tid) % 2147483647
    return h % buckets


class NgramHashEncoder(Encoder):
    """Frozen bag-of-character-ngram embedder.

    Row i is an indicator for the hashed ngram of the last ``ngram`` token
    ids ending at i, plus a constant channel in the final dimension so no
    pooled vector is ever zero.  Average pooling therefore yields a
    normalized bag-of-ngrams profile of the sentence.
    """

    name = "ngram"

    def __init__(self, hidden_size: int = 256, ngram: int = 3, max_len: int = 512):
        if hidden_size < 2:
            raise ValueError("hidden_size must be at least 2")
        self._hidden = hidden_size
        self._ngram = ngram
        self._max_len = max_len

    @property
    def hidden_size(self) -> int:
        return self._hidden

    @property
    def max_input_length(self) -> int:
        return self._max_len

    def get_config(self) -> dict:
        return dict(hidden_size=self._hidden, ngram=self._ngram, max_len=self._max_len)

    def content_token_ids(self, text: str) -> list[int]:
        return char_token_ids(text)

    def encode(self, tokens: TokenizedInput) -> EmbeddingMatrix:
        if len(tokens) > self._max_len:
            raise ValueError(
                f"sequence length {len(tokens)} exceeds encoder capacity {self._max_len}"
            )
        vectors = np.zeros((len(tokens), self._hidden), dtype=np.float64)
        ids = tokens.token_ids
        for i in range(tokens.num_valid):
            window = ids[max(0, i - self._ngram + 1) : i + 1]
            vectors[i, _rolling_hash(window, self._hidden - 1)] = 1.0
            vectors[i, self._hidden - 1] = 1.0
        return EmbeddingMatrix(vectors, np.asarray(tokens.validity_mask, dtype=bool))


_ENCODERS = {
    ToyEncoder.name: ToyEncoder,
    NgramHashEncoder.name: NgramHashEncoder,
}


def build_encoder(name: str, **kwargs) -> Encoder:
    """Construct a built-in encoder by config name."""
    try:
        factory = _ENCODERS[name]
    except KeyError:
        known = ", ".join(sorted(_ENCODERS))
        raise ValueError(
            f"unknown encoder {name!r} (built-ins: {known}); external checkpoints "
            "must be wrapped in an Encoder implementation"
        )
    return factory(**kwargs)
