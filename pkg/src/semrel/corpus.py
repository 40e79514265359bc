"""Sentence-pair datasets: text normalization, CSV persistence, validation.

File format: UTF-8 CSV with header ``PairID,Text,Score`` (``Score``
optional for unlabeled test splits).  ``Text`` holds both sentences of a
pair joined by exactly one newline inside a single quoted field, so the
whole pair stays one CSV record.  RFC-4180 quoting, LF line endings.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import DataFormatError

SPLIT_NAMES = ("train", "dev", "test")

URL_TOKEN = "[URL]"
EMAIL_TOKEN = "[EMAIL]"

# Tashkeel combining marks, fathatan through sukun: U+064B..U+0652.
_DIACRITICS = re.compile("[\u064b-\u0652]")
_TATWEEL = "\u0640"
# Hamza-carrying alef variants folded to bare alef.
_ALEF_VARIANTS = re.compile("[\u0623\u0625\u0622]")
_URL = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_EMAIL = re.compile(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+")
_WHITESPACE = re.compile(r"\s+")


def normalize_text(raw: str) -> str:
    """Canonicalize one sentence.

    Steps, in order: URLs then emails become sentinel tokens, tashkeel
    diacritics are stripped, tatweel removed, hamza-alef variants folded
    to bare alef, all whitespace runs collapsed to single spaces, ends
    trimmed.  Text without Arabic script passes through the steps that
    apply.  Idempotent.
    """
    text = _URL.sub(URL_TOKEN, raw)
    text = _EMAIL.sub(EMAIL_TOKEN, text)
    text = _DIACRITICS.sub("", text)
    text = text.replace(_TATWEEL, "")
    text = _ALEF_VARIANTS.sub("\u0627", text)
    text = _WHITESPACE.sub(" ", text)
    return text.strip()


@dataclass(frozen=True)
class SentencePair:
    """One scored pair. ``score`` is None for unlabeled test data."""

    pair_id: str
    sentence1: str
    sentence2: str
    score: float | None = None

    def __post_init__(self):
        if not self.pair_id:
            raise ValueError("pair_id must be non-empty")
        if not self.sentence1 or not self.sentence2:
            raise ValueError(f"pair {self.pair_id!r}: sentences must be non-empty")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"pair {self.pair_id!r}: score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class Dataset:
    """An ordered, duplicate-free collection of sentence pairs."""

    split_name: str
    language_tag: str
    pairs: tuple[SentencePair, ...]

    def __post_init__(self):
        if self.split_name not in SPLIT_NAMES:
            raise ValueError(f"split_name must be one of {SPLIT_NAMES}, got {self.split_name!r}")
        seen: set[str] = set()
        for pair in self.pairs:
            if pair.pair_id in seen:
                raise ValueError(f"duplicate pair_id {pair.pair_id!r}")
            seen.add(pair.pair_id)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[SentencePair]:
        return iter(self.pairs)

    @property
    def fully_labeled(self) -> bool:
        return all(p.score is not None for p in self.pairs)

    def pair_ids(self) -> list[str]:
        return [p.pair_id for p in self.pairs]


def load_dataset(
    path: str | Path,
    split_name: str,
    language_tag: str,
    with_scores: bool = True,
) -> Dataset:
    """Read a pair CSV, normalizing sentences at load time.

    ``with_scores=False`` ignores any Score column entirely (used by the
    unsupervised route, which must never see labels).  Malformed records
    raise DataFormatError naming the record; a missing file raises
    FileNotFoundError.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")

    pairs: list[SentencePair] = []
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file, expected a PairID,Text[,Score] header", row=1)
        if header[:2] != ["PairID", "Text"] or len(header) > 3 or (
            len(header) == 3 and header[2] != "Score"
        ):
            raise DataFormatError(
                f"expected header PairID,Text[,Score], got {','.join(header)}", row=1
            )
        has_score_col = len(header) == 3

        for record_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFormatError(
                    f"expected {len(header)} fields, got {len(row)}", row=record_no
                )
            pair_id, text = row[0], row[1]
            if pair_id in seen:
                raise DataFormatError(f"duplicate PairID {pair_id!r}", row=record_no)
            seen.add(pair_id)

            parts = text.split("\n")
            if len(parts) != 2:
                raise DataFormatError(
                    "Text field must hold exactly two sentences separated by one newline",
                    row=record_no,
                )
            sentence1 = normalize_text(parts[0])
            sentence2 = normalize_text(parts[1])
            if not sentence1 or not sentence2:
                raise DataFormatError("sentence empty after normalization", row=record_no)

            score: float | None = None
            if has_score_col and with_scores:
                cell = row[2].strip()
                if cell:
                    try:
                        score = float(cell)
                    except ValueError:
                        raise DataFormatError(f"unparseable score {cell!r}", row=record_no)
                    if not 0.0 <= score <= 1.0:
                        raise DataFormatError(f"score {score} outside [0, 1]", row=record_no)

            pairs.append(SentencePair(pair_id, sentence1, sentence2, score))

    return Dataset(split_name=split_name, language_tag=language_tag, pairs=tuple(pairs))


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write ``dataset`` so that load_dataset reproduces it field for field."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["PairID", "Text", "Score"])
        for pair in dataset.pairs:
            score_cell = "" if pair.score is None else repr(pair.score)
            writer.writerow([pair.pair_id, f"{pair.sentence1}\n{pair.sentence2}", score_cell])
