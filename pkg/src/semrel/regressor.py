"""Supervised relatedness route: encoder plus single-neuron regression head.

Pairs are concatenated into one token sequence, the head reads the
CLS position of the final layer, and training minimizes MSE on the raw
(unclamped) head output.  Inference clamps scores into [0, 1].
"""

from __future__ import annotations

import copy
import math
import pickle
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .corpus import Dataset, SentencePair
from .encoders import Encoder, ToyEncoder, build_encoder
from .evaluation import PredictionSet, r_squared, spearman

WEIGHTS_FILENAME = "weights.pkl"


@dataclass
class TrainConfig:
    epochs: int = 10
    early_stop_patience_epochs: int = 4
    batch_size: int = 16
    max_seq_len: int = 512
    learning_rate: float = 2e-5
    eval_every_steps: int = 50
    seed: int = 42

    def __post_init__(self):
        for name in ("epochs", "early_stop_patience_epochs", "batch_size",
                     "max_seq_len", "learning_rate", "eval_every_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.early_stop_patience_epochs > self.epochs:
            raise ValueError("early_stop_patience_epochs cannot exceed epochs")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "early_stop_patience_epochs": self.early_stop_patience_epochs,
            "batch_size": self.batch_size,
            "max_seq_len": self.max_seq_len,
            "learning_rate": self.learning_rate,
            "eval_every_steps": self.eval_every_steps,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


@dataclass
class EvalPoint:
    step: int
    epoch: int
    train_loss: float
    dev_spearman: float
    dev_r_squared: float


@dataclass
class TrainLog:
    evaluations: list[EvalPoint] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)
    epochs_run: int = 0
    stopped_early: bool = False
    best_step: int | None = None
    best_dev_spearman: float | None = None

    def to_dict(self) -> dict:
        return {
            "evaluations": [vars(e) for e in self.evaluations],
            "epoch_losses": self.epoch_losses,
            "epochs_run": self.epochs_run,
            "stopped_early": self.stopped_early,
            "best_step": self.best_step,
            "best_dev_spearman": self.best_dev_spearman,
        }


def mse_loss(predicted, gold):
    """Mean of squared differences.

    Torch tensors stay tensors (differentiable training objective); any
    other sequence returns a plain float.
    """
    if isinstance(predicted, torch.Tensor) or isinstance(gold, torch.Tensor):
        p = torch.as_tensor(predicted, dtype=torch.float64)
        g = torch.as_tensor(gold, dtype=torch.float64)
        if p.shape != g.shape:
            raise ValueError(f"length mismatch: {tuple(p.shape)} vs {tuple(g.shape)}")
        if p.numel() == 0:
            raise ValueError("mse_loss of empty sequences is undefined")
        return torch.mean((p - g) ** 2)
    p = np.asarray(predicted, dtype=np.float64)
    g = np.asarray(gold, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {g.shape}")
    if p.size == 0:
        raise ValueError("mse_loss of empty sequences is undefined")
    return float(np.mean((p - g) ** 2))


def _pair_tensors(
    encoder: Encoder, pairs: list[SentencePair], max_seq_len: int
) -> tuple[torch.Tensor, torch.Tensor]:
    toks = [encoder.tokenize_pair(p.sentence1, p.sentence2, max_seq_len) for p in pairs]
    # Shared trailing padding is inert under masked attention; drop it.
    keep = max(t.num_valid for t in toks)
    ids = torch.tensor([t.token_ids[:keep] for t in toks], dtype=torch.long)
    mask = torch.tensor([t.validity_mask[:keep] for t in toks], dtype=torch.bool)
    return ids, mask


class RegressionModel:
    """Encoder state plus a d-dimensional weight vector and bias (one neuron)."""

    def __init__(
        self,
        encoder: Encoder,
        head_weight: np.ndarray | None = None,
        head_bias: float | None = None,
        max_seq_len: int = 512,
        seed: int = 0,
    ):
        self.encoder = encoder
        self.max_seq_len = max_seq_len
        d = encoder.hidden_size
        self.head = nn.Linear(d, 1).to(torch.float64)
        with torch.no_grad():
            if head_weight is None:
                gen = torch.Generator().manual_seed(seed)
                # Small but nonzero so early dev predictions are not all tied;
                # bias starts at the center of the score range.
                self.head.weight.copy_(
                    torch.randn((1, d), generator=gen, dtype=torch.float64) * 1e-3
                )
                if head_bias is None:
                    head_bias = 0.5
            else:
                weight = np.asarray(head_weight, dtype=np.float64).reshape(1, d)
                self.head.weight.copy_(torch.from_numpy(weight))
                if head_bias is None:
                    head_bias = 0.0
            self.head.bias.fill_(float(head_bias))

    @property
    def head_weight(self) -> np.ndarray:
        return self.head.weight.detach().numpy().reshape(-1).copy()

    @property
    def head_bias(self) -> float:
        return float(self.head.bias.detach())

    def raw_outputs(self, pairs: list[SentencePair]) -> torch.Tensor:
        """Unclamped head outputs for a batch; gradients flow (training path)."""
        if not pairs:
            raise ValueError("empty batch")
        encoder = self.encoder
        if encoder.trainable_module is not None:
            ids, mask = _pair_tensors(encoder, pairs, self.max_seq_len)
            cls_vectors = encoder.forward_tensor(ids, mask)[:, 0, :]
        else:
            matrices = encoder.encode_batch(
                [encoder.tokenize_pair(p.sentence1, p.sentence2, self.max_seq_len)
                 for p in pairs]
            )
            cls_vectors = torch.from_numpy(np.stack([m.vectors[0] for m in matrices]))
        return self.head(cls_vectors).reshape(-1)

    def forward(self, pair: SentencePair) -> float:
        """Inference score for one pair, clamped into [0, 1]."""
        with torch.no_grad():
            raw = float(self.raw_outputs([pair])[0])
        return min(1.0, max(0.0, raw))

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        module = self.encoder.trainable_module
        payload = {
            "format": 1,
            "encoder_name": self.encoder.name,
            "encoder_config": self.encoder.get_config(),
            "encoder_state": (
                {k: v.detach().numpy() for k, v in module.state_dict().items()}
                if module is not None else {}
            ),
            "head_weight": self.head_weight,
            "head_bias": self.head_bias,
            "max_seq_len": self.max_seq_len,
        }
        with (directory / WEIGHTS_FILENAME).open("wb") as fh:
            pickle.dump(payload, fh, protocol=4)

    @classmethod
    def load(cls, directory: str | Path) -> "RegressionModel":
        path = Path(directory) / WEIGHTS_FILENAME
        if not path.is_file():
            raise FileNotFoundError(f"model weights not found: {path}")
        with path.open("rb") as fh:
            payload = pickle.load(fh)
        encoder = build_encoder(payload["encoder_name"], **payload["encoder_config"])
        if payload["encoder_state"]:
            state = {k: torch.from_numpy(np.asarray(v)) for k, v in payload["encoder_state"].items()}
            encoder.trainable_module.load_state_dict(state)
        return cls(
            encoder,
            head_weight=payload["head_weight"],
            head_bias=payload["head_bias"],
            max_seq_len=payload["max_seq_len"],
        )


def predict(model: RegressionModel, data: Dataset, batch_size: int = 16) -> PredictionSet:
    """Clamped inference scores for every pair, independent of batching."""
    entries: dict[str, float] = {}
    pairs = list(data.pairs)
    with torch.no_grad():
        for start in range(0, len(pairs), batch_size):
            batch = pairs[start : start + batch_size]
            raw = model.raw_outputs(batch).numpy()
            for pair, value in zip(batch, raw):
                entries[pair.pair_id] = min(1.0, max(0.0, float(value)))
    return PredictionSet(entries)


def _dev_point(model, dev_pairs, dev_gold, batch_size, step, epoch, loss) -> EvalPoint:
    preds = []
    with torch.no_grad():
        for start in range(0, len(dev_pairs), batch_size):
            batch = dev_pairs[start : start + batch_size]
            raw = model.raw_outputs(batch).numpy()
            preds.extend(min(1.0, max(0.0, float(v))) for v in raw)
    try:
        sp = spearman(preds, dev_gold)
    except ValueError:
        sp = math.nan
    try:
        r2 = r_squared(preds, dev_gold)
    except ValueError:
        r2 = math.nan
    return EvalPoint(step=step, epoch=epoch, train_loss=loss, dev_spearman=sp, dev_r_squared=r2)


def train(
    train_data: Dataset,
    dev_data: Dataset | None,
    config: TrainConfig,
    encoder: Encoder | None = None,
) -> tuple[RegressionModel, TrainLog]:
    """Fine-tune encoder and head with MSE; dev Spearman drives early stopping.

    Runs at most ``config.epochs`` epochs.  With dev data present the dev
    Spearman is computed every ``eval_every_steps`` optimizer steps and at
    each epoch end; after ``early_stop_patience_epochs`` consecutive epochs
    without improvement training halts, and the checkpoint with the best
    dev Spearman is returned.  Without dev data the last state is kept.
    Deterministic given the config seed.
    """
    if len(train_data) == 0:
        raise ValueError("training data is empty")
    if not train_data.fully_labeled:
        raise ValueError("training data must be fully labeled")
    if dev_data is not None and not dev_data.fully_labeled:
        raise ValueError("dev data must be fully labeled")

    random.seed(config.seed)
    np.random.seed(config.seed % 2**32)
    torch.manual_seed(config.seed)

    if encoder is None:
        encoder = ToyEncoder(max_len=config.max_seq_len)
    module = encoder.trainable_module
    if module is None:
        raise ValueError(f"encoder {encoder.name!r} is frozen and cannot be fine-tuned")

    model = RegressionModel(encoder, max_seq_len=config.max_seq_len, seed=config.seed)
    optimizer = torch.optim.AdamW(
        list(module.parameters()) + list(model.head.parameters()),
        lr=config.learning_rate,
    )

    pairs = list(train_data.pairs)
    labels = torch.tensor([p.score for p in pairs], dtype=torch.float64)
    dev_pairs = list(dev_data.pairs) if dev_data is not None else []
    dev_gold = [p.score for p in dev_pairs]

    log = TrainLog()
    rng = random.Random(config.seed)
    best_spearman = -math.inf
    best_state: tuple[dict, dict] | None = None
    epochs_without_improvement = 0
    global_step = 0
    last_eval_step = -1

    def snapshot() -> tuple[dict, dict]:
        return (
            copy.deepcopy(module.state_dict()),
            copy.deepcopy(model.head.state_dict()),
        )

    def record_eval(loss_value: float, epoch: int) -> None:
        nonlocal best_spearman, best_state, last_eval_step
        point = _dev_point(model, dev_pairs, dev_gold, config.batch_size,
                           global_step, epoch, loss_value)
        log.evaluations.append(point)
        last_eval_step = global_step
        if point.dev_spearman > best_spearman:
            best_spearman = point.dev_spearman
            best_state = snapshot()
            log.best_step = global_step
            log.best_dev_spearman = point.dev_spearman

    for epoch in range(1, config.epochs + 1):
        order = list(range(len(pairs)))
        rng.shuffle(order)
        loss_sum = 0.0
        n_batches = 0
        best_before_epoch = best_spearman
        last_loss = math.nan
        for start in range(0, len(order), config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            batch = [pairs[i] for i in batch_idx]
            outputs = model.raw_outputs(batch)
            loss = mse_loss(outputs, labels[batch_idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            global_step += 1
            last_loss = float(loss.detach())
            loss_sum += last_loss
            n_batches += 1
            if dev_pairs and global_step % config.eval_every_steps == 0:
                record_eval(last_loss, epoch)
        log.epoch_losses.append(loss_sum / n_batches)
        log.epochs_run = epoch
        if dev_pairs:
            if last_eval_step != global_step:
                record_eval(last_loss, epoch)
            if best_spearman > best_before_epoch:
                epochs_without_improvement = 0
            else:
                epochs_without_improvement += 1
            if epochs_without_improvement >= config.early_stop_patience_epochs:
                log.stopped_early = True
                break

    if best_state is not None:
        module.load_state_dict(best_state[0])
        model.head.load_state_dict(best_state[1])
    return model, log
