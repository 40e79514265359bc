"""Paraphrase augmentation: generation, auto filters, review bookkeeping, merge.

Every sentence of every labeled training pair is sent to a generative
client with a paraphrase prompt; each reply becomes a candidate that
pairs the generated text with the pair's other sentence and inherits the
pair's gold score.  Candidates flow through three filters: automatic
refusal detection, automatic policy-rejection detection, and manual
review (served over HTTP elsewhere).  Accepted candidates merge back
into the training set.

Candidates persist as JSONL, one candidate per line, append-plus-status-
update style; the store is the single source of truth shared by CLI and
review service.
"""

from __future__ import annotations

import dataclasses
import json
import os
import random
import tempfile
import threading
import zlib
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Protocol

import requests

from .corpus import Dataset, SentencePair, normalize_text
from .errors import CandidateStateError, DataFormatError, GeneratorError

PLACEHOLDER = "{sentence}"
DEFAULT_TEMPLATE_TEXT = (
    "Paraphrase the following sentence in the same dialect, preserving its "
    "meaning and style: {sentence}"
)
TOKEN_ENV_VAR = "SEMREL_GEN_TOKEN"

STATUS_PENDING = "pending"
STATUS_REFUSAL = "auto_rejected_refusal"
STATUS_POLICY = "auto_rejected_policy"
STATUS_ACCEPTED = "accepted"
STATUS_REJECTED = "rejected"
STATUS_FAILED = "failed"
ALL_STATUSES = (
    STATUS_PENDING,
    STATUS_REFUSAL,
    STATUS_POLICY,
    STATUS_ACCEPTED,
    STATUS_REJECTED,
    STATUS_FAILED,
)
_FIELD_ORDER = (
    "candidate_id",
    "source_pair_id",
    "replaced_slot",
    "original_sentence",
    "generated_text",
    "partner_sentence",
    "inherited_score",
    "status",
    "filter_reason",
    "reviewer",
    "note",
    "decided_at",
)


@dataclass(frozen=True)
class AugmentationCandidate:
    """One generated paraphrase with provenance and review state."""

    candidate_id: str
    source_pair_id: str
    replaced_slot: int
    original_sentence: str
    generated_text: str
    partner_sentence: str
    inherited_score: float
    status: str = STATUS_PENDING
    filter_reason: str | None = None
    reviewer: str | None = None
    note: str | None = None
    decided_at: str | None = None

    def __post_init__(self):
        if self.replaced_slot not in (1, 2):
            raise ValueError("replaced_slot must be 1 or 2")
        if not 0.0 <= self.inherited_score <= 1.0:
            raise ValueError(f"inherited_score {self.inherited_score} outside [0, 1]")
        if self.status not in ALL_STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.status in (STATUS_ACCEPTED, STATUS_REJECTED):
            if not self.reviewer or not self.decided_at:
                raise ValueError(f"{self.status} candidates need reviewer and decided_at")
        if self.status in (STATUS_REFUSAL, STATUS_POLICY, STATUS_FAILED):
            if not self.filter_reason:
                raise ValueError(f"{self.status} candidates need a filter_reason")

    def to_json_dict(self) -> dict:
        return {name: getattr(self, name) for name in _FIELD_ORDER}

    @classmethod
    def from_json_dict(cls, data: dict) -> "AugmentationCandidate":
        return cls(**{name: data.get(name) for name in _FIELD_ORDER})


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt text holding exactly one ``{sentence}`` placeholder."""

    template: str
    language_tag: str = ""

    def __post_init__(self):
        count = self.template.count(PLACEHOLDER)
        if count != 1:
            raise ValueError(
                f"template must contain exactly one {PLACEHOLDER} placeholder, found {count}"
            )


DEFAULT_TEMPLATE = PromptTemplate(DEFAULT_TEMPLATE_TEXT)


def build_prompt(template: PromptTemplate, sentence: str) -> str:
    """Substitute the sentence verbatim; nothing else in the template changes."""
    return template.template.replace(PLACEHOLDER, sentence, 1)


class GeneratorClient(Protocol):
    def generate(self, prompt: str) -> str: ...


class MockGeneratorClient:
    """Deterministic scripted client: identical prompts get identical replies.

    Lookup order: the exact-match ``replies`` script, then (when built
    with a template) a deterministic word shuffle of the sentence
    recovered from the prompt.  The shuffle seed derives from the
    sentence itself, so replays are byte-identical.
    """

    def __init__(
        self,
        replies: dict[str, str] | None = None,
        template: PromptTemplate | None = None,
    ):
        self._replies = dict(replies or {})
        self._template = template
        if template is not None:
            prefix, suffix = template.template.split(PLACEHOLDER)
            self._prefix, self._suffix = prefix, suffix

    def generate(self, prompt: str) -> str:
        if prompt in self._replies:
            return self._replies[prompt]
        if self._template is None:
            raise GeneratorError(f"mock has no scripted reply for prompt: {prompt[:80]!r}")
        if not (prompt.startswith(self._prefix) and prompt.endswith(self._suffix)):
            raise GeneratorError("prompt does not match the mock's template")
        end = len(prompt) - len(self._suffix)
        sentence = prompt[len(self._prefix) : end]
        words = sentence.split(" ")
        rng = random.Random(zlib.crc32(sentence.encode("utf-8")))
        rng.shuffle(words)
        return " ".join(words)


class HttpGeneratorClient:
    """Remote client: POST {"prompt": ...} to an endpoint, read {"text": ...}.

    The bearer token is read from the SEMREL_GEN_TOKEN environment
    variable when present.  Retries transient failures (connection
    errors, 5xx) up to ``max_retries`` extra attempts.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        max_retries: int = 2,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.timeout = timeout
        self.max_retries = max_retries
        self._session = session or requests.Session()

    def generate(self, prompt: str) -> str:
        headers = {}
        token = os.environ.get(TOKEN_ENV_VAR)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        last_error: Exception | None = None
        for _ in range(self.max_retries + 1):
            try:
                response = self._session.post(
                    self.endpoint, json={"prompt": prompt}, headers=headers,
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = GeneratorError(f"server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise GeneratorError(f"generation failed with status {response.status_code}")
            try:
                return response.json()["text"]
            except (ValueError, KeyError) as exc:
                raise GeneratorError(f"malformed generation response: {exc}")
        raise GeneratorError(f"generation failed after retries: {last_error}")


def generate_candidates(
    train: Dataset,
    template: PromptTemplate,
    client: GeneratorClient,
) -> list[AugmentationCandidate]:
    """Prompt both sentences of every labeled pair; two candidates per pair.

    Client failures are recorded on the affected candidate (status
    ``failed``) and never abort the batch.  Identical generated text for
    the two slots of one pair is deduplicated (first slot wins).
    """
    if not train.fully_labeled:
        raise ValueError("augmentation needs fully labeled training data")
    candidates: list[AugmentationCandidate] = []
    for pair in train:
        per_pair: list[AugmentationCandidate] = []
        for slot, original, partner in (
            (1, pair.sentence1, pair.sentence2),
            (2, pair.sentence2, pair.sentence1),
        ):
            prompt = build_prompt(template, original)
            status, reason, generated = STATUS_PENDING, None, ""
            try:
                generated = client.generate(prompt)
            except Exception as exc:
                status, reason = STATUS_FAILED, f"generation error: {exc}"
            per_pair.append(
                AugmentationCandidate(
                    candidate_id=f"{pair.pair_id}-aug{slot}",
                    source_pair_id=pair.pair_id,
                    replaced_slot=slot,
                    original_sentence=original,
                    generated_text=generated,
                    partner_sentence=partner,
                    inherited_score=pair.score,
                    status=status,
                    filter_reason=reason,
                )
            )
        if (
            len(per_pair) == 2
            and per_pair[0].status == per_pair[1].status == STATUS_PENDING
            and per_pair[0].generated_text == per_pair[1].generated_text
        ):
            per_pair = per_pair[:1]
        candidates.extend(per_pair)
    return candidates


def _first_match(reply: str, patterns: Iterable[str]) -> str | None:
    lowered = reply.lower()
    for pattern in patterns:
        if pattern and pattern.lower() in lowered:
            return pattern
    return None


def apply_auto_filters(
    candidates: Iterable[AugmentationCandidate],
    refusal_patterns: list[str],
    policy_patterns: list[str],
) -> list[AugmentationCandidate]:
    """Auto-reject replies matching refusal or policy patterns.

    Case-insensitive substring match; refusal patterns are checked first;
    non-pending candidates pass through untouched.  The matched pattern is
    stored as filter_reason.
    """
    out: list[AugmentationCandidate] = []
    for candidate in candidates:
        if candidate.status != STATUS_PENDING:
            out.append(candidate)
            continue
        matched = _first_match(candidate.generated_text, refusal_patterns)
        if matched is not None:
            out.append(dataclasses.replace(
                candidate, status=STATUS_REFUSAL, filter_reason=matched))
            continue
        matched = _first_match(candidate.generated_text, policy_patterns)
        if matched is not None:
            out.append(dataclasses.replace(
                candidate, status=STATUS_POLICY, filter_reason=matched))
            continue
        out.append(candidate)
    return out


def merge_accepted(
    train: Dataset,
    candidates: Iterable[AugmentationCandidate],
    include_pending: bool = False,
) -> Dataset:
    """Training set plus one pair per accepted candidate.

    New pairs are (generated_text, partner_sentence, inherited_score)
    under the id ``<source_pair_id>-aug<slot>``.  Candidates still
    pending are an error unless ``include_pending`` explicitly treats
    them as accepted (smoke-test escape hatch; the store is not touched).
    """
    candidates = list(candidates)
    pending = [c for c in candidates if c.status == STATUS_PENDING]
    if pending and not include_pending:
        raise CandidateStateError(
            f"{len(pending)} candidates are still pending review "
            f"(e.g. {pending[0].candidate_id!r}); decide them first"
        )
    take = {STATUS_ACCEPTED, STATUS_PENDING} if include_pending else {STATUS_ACCEPTED}
    pairs = list(train.pairs)
    for candidate in candidates:
        if candidate.status not in take:
            continue
        sentence1 = normalize_text(candidate.generated_text)
        sentence2 = normalize_text(candidate.partner_sentence)
        if not sentence1 or not sentence2:
            raise DataFormatError(
                f"candidate {candidate.candidate_id!r} has an empty sentence "
                "after normalization"
            )
        pairs.append(
            SentencePair(
                pair_id=candidate.candidate_id,
                sentence1=sentence1,
                sentence2=sentence2,
                score=candidate.inherited_score,
            )
        )
    return Dataset(train.split_name, train.language_tag, tuple(pairs))


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class CandidateStore:
    """JSONL-backed candidate collection with serialized, durable writes.

    One candidate per line in insertion order.  All mutations are
    serialized through one lock and flushed to disk (atomic replace +
    fsync) before the mutating call returns.
    """

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._lock = threading.RLock()
        self._candidates: dict[str, AugmentationCandidate] = {}
        if self._path.exists():
            self._read()

    @property
    def path(self) -> Path:
        return self._path

    def _read(self) -> None:
        with self._path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    candidate = AugmentationCandidate.from_json_dict(json.loads(line))
                except (json.JSONDecodeError, TypeError, ValueError) as exc:
                    raise DataFormatError(f"bad candidate record: {exc}", row=line_no)
                if candidate.candidate_id in self._candidates:
                    raise DataFormatError(
                        f"duplicate candidate_id {candidate.candidate_id!r}", row=line_no
                    )
                self._candidates[candidate.candidate_id] = candidate

    def _persist(self) -> None:
        self._path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(
            dir=self._path.parent, prefix=self._path.name, suffix=".tmp"
        )
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                for candidate in self._candidates.values():
                    fh.write(json.dumps(
                        candidate.to_json_dict(), ensure_ascii=False, separators=(",", ":")
                    ))
                    fh.write("\n")
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp_name, self._path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise

    def __len__(self) -> int:
        with self._lock:
            return len(self._candidates)

    def append_all(self, candidates: Iterable[AugmentationCandidate]) -> None:
        with self._lock:
            for candidate in candidates:
                if candidate.candidate_id in self._candidates:
                    raise CandidateStateError(
                        f"candidate {candidate.candidate_id!r} already in store"
                    )
                self._candidates[candidate.candidate_id] = candidate
            self._persist()

    def replace_all(self, candidates: Iterable[AugmentationCandidate]) -> None:
        with self._lock:
            self._candidates = {c.candidate_id: c for c in candidates}
            self._persist()

    def get(self, candidate_id: str) -> AugmentationCandidate:
        with self._lock:
            try:
                return self._candidates[candidate_id]
            except KeyError:
                raise KeyError(f"unknown candidate {candidate_id!r}")

    def items(self) -> list[AugmentationCandidate]:
        """All candidates in insertion (file) order."""
        with self._lock:
            return list(self._candidates.values())

    def list(self, status: str | None = None) -> list[AugmentationCandidate]:
        """Candidates in stable candidate_id order, optionally status-filtered."""
        with self._lock:
            items = sorted(self._candidates.values(), key=lambda c: c.candidate_id)
        if status is not None:
            items = [c for c in items if c.status == status]
        return items

    def counts(self) -> dict[str, int]:
        with self._lock:
            counts = {status: 0 for status in ALL_STATUSES}
            for candidate in self._candidates.values():
                counts[candidate.status] += 1
            counts["total"] = len(self._candidates)
            return counts

    def decide(
        self,
        candidate_id: str,
        verdict: str,
        reviewer: str,
        note: str | None = None,
        now: str | None = None,
    ) -> AugmentationCandidate:
        """Apply an accept/reject verdict; durable before returning.

        Resubmitting the verdict a terminal candidate already carries
        returns the stored state unchanged; a conflicting verdict (or any
        verdict on an auto-rejected or failed candidate) raises
        CandidateStateError.
        """
        if verdict not in ("accept", "reject"):
            raise ValueError(f"verdict must be accept or reject, got {verdict!r}")
        if not reviewer:
            raise ValueError("reviewer must be non-empty")
        target_status = STATUS_ACCEPTED if verdict == "accept" else STATUS_REJECTED
        with self._lock:
            candidate = self.get(candidate_id)
            if candidate.status == target_status:
                return candidate
            if candidate.status != STATUS_PENDING:
                raise CandidateStateError(
                    f"candidate {candidate_id!r} is {candidate.status}; "
                    f"cannot apply verdict {verdict!r}"
                )
            updated = dataclasses.replace(
                candidate,
                status=target_status,
                reviewer=reviewer,
                note=note,
                decided_at=now or utc_now_iso(),
            )
            self._candidates[candidate_id] = updated
            self._persist()
            return updated


def load_patterns(path: str | Path) -> list[str]:
    """One pattern per line; blank lines and #-comments skipped."""
    patterns = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            patterns.append(line)
    return patterns
