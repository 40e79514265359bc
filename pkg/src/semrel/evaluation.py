"""Scoring predictions against gold labels: Spearman, R squared, MSE."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .corpus import Dataset
from .errors import DataFormatError


def _as_1d(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def spearman(pred, gold) -> float:
    """Tie-aware Spearman: Pearson correlation of average-rank transforms.

    Raises on length mismatch, fewer than two points, or a constant
    argument (the correlation is undefined there; silently returning 0
    would mask pipeline bugs).
    """
    p = _as_1d(pred, "pred")
    g = _as_1d(gold, "gold")
    if p.shape != g.shape:
        raise ValueError(f"length mismatch: {p.shape[0]} predictions vs {g.shape[0]} gold")
    if p.shape[0] < 2:
        raise ValueError("need at least two points")
    if np.ptp(p) == 0.0 or np.ptp(g) == 0.0:
        raise ValueError("correlation undefined for constant input")
    rp = rankdata(p) - (p.shape[0] + 1) / 2.0
    rg = rankdata(g) - (g.shape[0] + 1) / 2.0
    return float(rp @ rg / np.sqrt((rp @ rp) * (rg @ rg)))


def r_squared(pred, gold) -> float:
    """Coefficient of determination, 1 - SS_res/SS_tot; may be negative."""
    p = _as_1d(pred, "pred")
    g = _as_1d(gold, "gold")
    if p.shape != g.shape:
        raise ValueError(f"length mismatch: {p.shape[0]} predictions vs {g.shape[0]} gold")
    if p.shape[0] < 2:
        raise ValueError("need at least two points")
    ss_tot = float(((g - g.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ValueError("R squared undefined for constant gold")
    ss_res = float(((g - p) ** 2).sum())
    return 1.0 - ss_res / ss_tot


@dataclass
class PredictionSet:
    """pair_id -> predicted relatedness score."""

    entries: dict[str, float]

    def __post_init__(self):
        for pair_id, score in self.entries.items():
            if not np.isfinite(score):
                raise ValueError(f"non-finite prediction for {pair_id!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def save_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["PairID", "Pred_Score"])
            for pair_id, score in self.entries.items():
                writer.writerow([pair_id, repr(float(score))])

    @classmethod
    def load_csv(cls, path: str | Path) -> "PredictionSet":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"prediction file not found: {path}")
        entries: dict[str, float] = {}
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["PairID", "Pred_Score"]:
                raise DataFormatError("expected header PairID,Pred_Score", row=1)
            for record_no, row in enumerate(reader, start=2):
                if len(row) != 2:
                    raise DataFormatError(f"expected 2 fields, got {len(row)}", row=record_no)
                if row[0] in entries:
                    raise DataFormatError(f"duplicate PairID {row[0]!r}", row=record_no)
                try:
                    entries[row[0]] = float(row[1])
                except ValueError:
                    raise DataFormatError(f"unparseable score {row[1]!r}", row=record_no)
        return cls(entries)


@dataclass
class EvaluationReport:
    n: int
    spearman: float
    r_squared: float
    mse: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "spearman": self.spearman,
            "r_squared": self.r_squared,
            "mse": self.mse,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def evaluate(predictions: PredictionSet, gold: Dataset) -> EvaluationReport:
    """Metrics over the inner join of predictions and gold, keyed by pair_id."""
    if not gold.fully_labeled:
        unlabeled = [p.pair_id for p in gold if p.score is None]
        raise ValueError(f"gold data has {len(unlabeled)} unlabeled pairs, e.g. {unlabeled[:3]}")
    if len(gold) == 0:
        raise ValueError("gold dataset is empty")
    missing = [p.pair_id for p in gold if p.pair_id not in predictions.entries]
    if missing:
        raise ValueError(f"missing predictions for {len(missing)} pair ids: {missing}")
    pred = [predictions.entries[p.pair_id] for p in gold]
    gold_scores = [p.score for p in gold]
    p_arr = np.asarray(pred, dtype=np.float64)
    g_arr = np.asarray(gold_scores, dtype=np.float64)
    return EvaluationReport(
        n=len(gold),
        spearman=spearman(p_arr, g_arr),
        r_squared=r_squared(p_arr, g_arr),
        mse=float(np.mean((p_arr - g_arr) ** 2)),
    )
