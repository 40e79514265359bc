import json
import os
import random
import string
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from semrel.augmentation import (
    DEFAULT_TEMPLATE,
    STATUS_ACCEPTED,
    STATUS_FAILED,
    STATUS_PENDING,
    STATUS_POLICY,
    STATUS_REFUSAL,
    STATUS_REJECTED,
    AugmentationCandidate,
    CandidateStore,
    HttpGeneratorClient,
    MockGeneratorClient,
    PromptTemplate,
    apply_auto_filters,
    build_prompt,
    generate_candidates,
    load_patterns,
    merge_accepted,
)
from semrel.corpus import Dataset, SentencePair
from semrel.errors import CandidateStateError, GeneratorError

REFUSAL_PATTERNS = ["cannot fulfill", "as a language model"]
POLICY_PATTERNS = ["content policy", "policy violation"]


def labeled_dataset(n=4, seed=0, score=None):
    rng = random.Random(seed)
    pairs = []
    for i in range(n):
        s = score if score is not None else round(rng.random(), 3)
        pairs.append(SentencePair(f"p{i}", f"alpha {i} beta", f"gamma {i}", s))
    return Dataset("train", "syn", tuple(pairs))


def candidate(i, status=STATUS_PENDING, **overrides):
    fields = dict(
        candidate_id=f"p{i}-aug1",
        source_pair_id=f"p{i}",
        replaced_slot=1,
        original_sentence=f"orig {i}",
        generated_text=f"gen {i}",
        partner_sentence=f"partner {i}",
        inherited_score=0.5,
        status=status,
    )
    if status in (STATUS_ACCEPTED, STATUS_REJECTED):
        fields.update(reviewer="rev", decided_at="2024-01-01T00:00:00+00:00")
    if status in (STATUS_REFUSAL, STATUS_POLICY, STATUS_FAILED):
        fields.update(filter_reason="why")
    fields.update(overrides)
    return AugmentationCandidate(**fields)


class TestPromptTemplate:
    def test_exactly_one_placeholder(self):
        with pytest.raises(ValueError):
            PromptTemplate("no placeholder here")
        with pytest.raises(ValueError):
            PromptTemplate("{sentence} and {sentence}")

    def test_substitution(self):
        t = PromptTemplate("Paraphrase in the same dialect, keep the meaning: {sentence}")
        assert build_prompt(t, "hi").endswith(": hi")

    def test_braces_in_sentence_untouched(self):
        t = PromptTemplate("rewrite: {sentence}")
        assert build_prompt(t, "keep {these} braces") == "rewrite: keep {these} braces"

    def test_inversion_round_trip(self):
        t = PromptTemplate("prefix >> {sentence} << suffix")
        prefix, suffix = t.template.split("{sentence}")
        rng = random.Random(0)
        alphabet = string.ascii_letters + string.digits + " {}"
        for _ in range(100):
            sentence = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 40)))
            prompt = build_prompt(t, sentence)
            recovered = prompt[len(prefix):len(prompt) - len(suffix)]
            assert recovered == sentence


class TestCandidateInvariants:
    def test_terminal_states_need_reviewer(self):
        with pytest.raises(ValueError):
            candidate(0, status=STATUS_ACCEPTED, reviewer=None, decided_at=None)

    def test_auto_rejected_needs_reason(self):
        with pytest.raises(ValueError):
            candidate(0, status=STATUS_REFUSAL, filter_reason=None)

    def test_score_range(self):
        with pytest.raises(ValueError):
            candidate(0, inherited_score=1.2)

    def test_slot_values(self):
        with pytest.raises(ValueError):
            candidate(0, replaced_slot=3)

    def test_json_round_trip(self):
        c = candidate(1, status=STATUS_ACCEPTED, note="fine")
        assert AugmentationCandidate.from_json_dict(c.to_json_dict()) == c


class TestGenerateCandidates:
    def test_two_candidates_per_pair(self):
        train = labeled_dataset(4)
        out = generate_candidates(train, DEFAULT_TEMPLATE,
                                  MockGeneratorClient(template=DEFAULT_TEMPLATE))
        assert len(out) == 8
        assert all(c.status == STATUS_PENDING for c in out)

    def test_slot_pairing_and_score_inheritance(self):
        train = Dataset("train", "syn",
                        (SentencePair("p1", "first sentence", "second sentence", 0.6),))
        out = generate_candidates(train, DEFAULT_TEMPLATE,
                                  MockGeneratorClient(template=DEFAULT_TEMPLATE))
        slot1 = next(c for c in out if c.replaced_slot == 1)
        assert slot1.original_sentence == "first sentence"
        assert slot1.partner_sentence == "second sentence"
        assert slot1.inherited_score == 0.6
        assert slot1.candidate_id == "p1-aug1"
        slot2 = next(c for c in out if c.replaced_slot == 2)
        assert slot2.original_sentence == "second sentence"
        assert slot2.partner_sentence == "first sentence"

    def test_empty_train_empty_output(self):
        empty = Dataset("train", "syn", ())
        assert generate_candidates(empty, DEFAULT_TEMPLATE, MockGeneratorClient()) == []

    def test_unlabeled_train_rejected(self):
        ds = Dataset("train", "syn", (SentencePair("p", "a", "b"),))
        with pytest.raises(ValueError, match="labeled"):
            generate_candidates(ds, DEFAULT_TEMPLATE, MockGeneratorClient())

    def test_client_failure_recorded_not_fatal(self):
        class Flaky:
            def generate(self, prompt):
                if "alpha 1" in prompt:
                    raise GeneratorError("boom")
                return f"fine paraphrase of: {prompt[-20:]}"

        out = generate_candidates(labeled_dataset(3), DEFAULT_TEMPLATE, Flaky())
        assert len(out) == 6
        failed = [c for c in out if c.status == STATUS_FAILED]
        assert len(failed) == 1
        assert "boom" in failed[0].filter_reason
        assert failed[0].generated_text == ""

    def test_identical_replies_deduplicated(self):
        class Constant:
            def generate(self, prompt):
                return "always the same"

        out = generate_candidates(labeled_dataset(3), DEFAULT_TEMPLATE, Constant())
        assert len(out) == 3
        assert all(c.replaced_slot == 1 for c in out)

    def test_mock_replay_identical(self):
        train = labeled_dataset(5)
        client = MockGeneratorClient(template=DEFAULT_TEMPLATE)
        a = generate_candidates(train, DEFAULT_TEMPLATE, client)
        b = generate_candidates(train, DEFAULT_TEMPLATE,
                                MockGeneratorClient(template=DEFAULT_TEMPLATE))
        assert a == b


class TestAutoFilters:
    def fixture_batch(self):
        # 20 replies: 5 refusals, 3 policy rejections, 12 clean.
        replies = (
            ["I cannot fulfill this request, sorry."] * 3
            + ["AS A LANGUAGE MODEL I will not."] * 2
            + ["This violates our content policy."] * 2
            + ["Flagged: policy violation detected."]
            + [f"clean paraphrase {i}" for i in range(12)]
        )
        return [candidate(i, generated_text=reply) for i, reply in enumerate(replies)]

    def test_fixture_counts(self):
        out = apply_auto_filters(self.fixture_batch(), REFUSAL_PATTERNS, POLICY_PATTERNS)
        by_status = {}
        for c in out:
            by_status[c.status] = by_status.get(c.status, 0) + 1
        assert by_status == {STATUS_REFUSAL: 5, STATUS_POLICY: 3, STATUS_PENDING: 12}

    def test_refusal_checked_first(self):
        both = candidate(0, generated_text="as a language model, content policy forbids")
        out = apply_auto_filters([both], REFUSAL_PATTERNS, POLICY_PATTERNS)
        assert out[0].status == STATUS_REFUSAL
        assert out[0].filter_reason == "as a language model"

    def test_case_insensitive(self):
        c = candidate(0, generated_text="I CANNOT FULFILL that")
        out = apply_auto_filters([c], REFUSAL_PATTERNS, POLICY_PATTERNS)
        assert out[0].status == STATUS_REFUSAL

    def test_deterministic(self):
        batch = self.fixture_batch()
        a = apply_auto_filters(batch, REFUSAL_PATTERNS, POLICY_PATTERNS)
        b = apply_auto_filters(batch, REFUSAL_PATTERNS, POLICY_PATTERNS)
        assert a == b

    def test_non_pending_untouched(self):
        done = candidate(0, status=STATUS_ACCEPTED, generated_text="cannot fulfill")
        out = apply_auto_filters([done], REFUSAL_PATTERNS, POLICY_PATTERNS)
        assert out[0] is done

    def test_empty_pattern_lists_noop(self):
        batch = self.fixture_batch()
        out = apply_auto_filters(batch, [], [])
        assert all(c.status == STATUS_PENDING for c in out)


class TestMergeAccepted:
    def test_small_merge_no_collisions(self):
        train = labeled_dataset(10)
        accepted = [candidate(i, status=STATUS_ACCEPTED) for i in range(3)]
        merged = merge_accepted(train, accepted)
        assert len(merged) == 13
        assert len(set(merged.pair_ids())) == 13

    def test_zero_accepted_identity(self):
        train = labeled_dataset(5)
        rejected = [candidate(i, status=STATUS_REJECTED) for i in range(4)]
        merged = merge_accepted(train, rejected)
        assert merged.pairs == train.pairs

    def test_pending_blocks_merge(self):
        train = labeled_dataset(2)
        with pytest.raises(CandidateStateError, match="pending"):
            merge_accepted(train, [candidate(0)])

    def test_include_pending_escape_hatch(self):
        train = labeled_dataset(2)
        merged = merge_accepted(train, [candidate(0)], include_pending=True)
        assert len(merged) == 3

    def test_score_conservation_exact(self):
        train = labeled_dataset(3)
        accepted = [
            candidate(i, status=STATUS_ACCEPTED, inherited_score=s)
            for i, s in enumerate((0.0, 0.337, 1.0))
        ]
        merged = merge_accepted(train, accepted)
        by_id = {p.pair_id: p for p in merged}
        for c in accepted:
            assert by_id[c.candidate_id].score == c.inherited_score

    def test_merged_pair_content(self):
        train = labeled_dataset(1)
        c = candidate(9, status=STATUS_ACCEPTED, generated_text="the   new text ",
                      partner_sentence="other side")
        merged = merge_accepted(train, [c])
        new_pair = merged.pairs[-1]
        assert new_pair.pair_id == "p9-aug1"
        assert new_pair.sentence1 == "the new text"
        assert new_pair.sentence2 == "other side"

    def test_status_conservation_through_pipeline(self):
        train = labeled_dataset(10, seed=4)
        generated = generate_candidates(train, DEFAULT_TEMPLATE,
                                        MockGeneratorClient(template=DEFAULT_TEMPLATE))
        filtered = apply_auto_filters(generated, REFUSAL_PATTERNS, POLICY_PATTERNS)
        assert len(filtered) == len(generated)
        statuses = [c.status for c in filtered]
        known = (STATUS_PENDING, STATUS_REFUSAL, STATUS_POLICY,
                 STATUS_ACCEPTED, STATUS_REJECTED, STATUS_FAILED)
        assert sum(statuses.count(s) for s in known) == len(generated)


class TestCandidateStore:
    def test_append_and_reload(self, tmp_path):
        path = tmp_path / "c.jsonl"
        store = CandidateStore(path)
        store.append_all([candidate(0), candidate(1)])
        again = CandidateStore(path)
        assert again.items() == store.items()

    def test_duplicate_append_rejected(self, tmp_path):
        store = CandidateStore(tmp_path / "c.jsonl")
        store.append_all([candidate(0)])
        with pytest.raises(CandidateStateError, match="already"):
            store.append_all([candidate(0)])

    def test_byte_identical_replay(self, tmp_path):
        train = labeled_dataset(6, seed=9)
        files = []
        for name in ("a.jsonl", "b.jsonl"):
            cands = generate_candidates(train, DEFAULT_TEMPLATE,
                                        MockGeneratorClient(template=DEFAULT_TEMPLATE))
            store = CandidateStore(tmp_path / name)
            store.replace_all(cands)
            files.append((tmp_path / name).read_bytes())
        assert files[0] == files[1]

    def test_decide_accept(self, tmp_path):
        store = CandidateStore(tmp_path / "c.jsonl")
        store.append_all([candidate(0)])
        updated = store.decide("p0-aug1", "accept", reviewer="rev", note="ok")
        assert updated.status == STATUS_ACCEPTED
        assert updated.reviewer == "rev"
        assert updated.decided_at is not None
        # durable before return
        assert CandidateStore(tmp_path / "c.jsonl").get("p0-aug1").status == STATUS_ACCEPTED

    def test_decide_idempotent_same_verdict(self, tmp_path):
        store = CandidateStore(tmp_path / "c.jsonl")
        store.append_all([candidate(0)])
        first = store.decide("p0-aug1", "accept", reviewer="rev")
        second = store.decide("p0-aug1", "accept", reviewer="other")
        assert second == first

    def test_decide_conflict(self, tmp_path):
        store = CandidateStore(tmp_path / "c.jsonl")
        store.append_all([candidate(0)])
        store.decide("p0-aug1", "accept", reviewer="rev")
        with pytest.raises(CandidateStateError):
            store.decide("p0-aug1", "reject", reviewer="rev")

    def test_decide_unknown(self, tmp_path):
        store = CandidateStore(tmp_path / "c.jsonl")
        with pytest.raises(KeyError):
            store.decide("nope", "accept", reviewer="rev")

    def test_decide_on_auto_rejected_conflicts(self, tmp_path):
        store = CandidateStore(tmp_path / "c.jsonl")
        store.append_all([candidate(0, status=STATUS_REFUSAL)])
        with pytest.raises(CandidateStateError):
            store.decide("p0-aug1", "accept", reviewer="rev")

    def test_counts(self, tmp_path):
        store = CandidateStore(tmp_path / "c.jsonl")
        store.append_all([candidate(0), candidate(1, status=STATUS_REFUSAL)])
        counts = store.counts()
        assert counts["pending"] == 1
        assert counts["auto_rejected_refusal"] == 1
        assert counts["total"] == 2
        assert sum(v for k, v in counts.items() if k != "total") == counts["total"]

    def test_list_sorted_by_candidate_id(self, tmp_path):
        store = CandidateStore(tmp_path / "c.jsonl")
        store.append_all([candidate(3), candidate(1), candidate(2)])
        assert [c.candidate_id for c in store.list()] == [
            "p1-aug1", "p2-aug1", "p3-aug1"
        ]

    def test_snake_case_keys_on_disk(self, tmp_path):
        path = tmp_path / "c.jsonl"
        CandidateStore(path).append_all([candidate(0)])
        record = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
        assert "candidate_id" in record
        assert "inherited_score" in record


class TestLoadPatterns:
    def test_skips_blanks_and_comments(self, tmp_path):
        f = tmp_path / "patterns.txt"
        f.write_text("# refusals\ncannot fulfill\n\nas a language model\n", encoding="utf-8")
        assert load_patterns(f) == ["cannot fulfill", "as a language model"]


class _CannedHandler(BaseHTTPRequestHandler):
    responses = []
    seen = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).seen.append((body, self.headers.get("Authorization")))
        status, payload = type(self).responses.pop(0)
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def canned_server():
    server = HTTPServer(("127.0.0.1", 0), _CannedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _CannedHandler.responses = []
    _CannedHandler.seen = []
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


class TestHttpGeneratorClient:
    def test_success(self, canned_server):
        _CannedHandler.responses = [(200, {"text": "a paraphrase"})]
        client = HttpGeneratorClient(canned_server, timeout=5)
        assert client.generate("hello") == "a paraphrase"
        assert _CannedHandler.seen[0][0] == {"prompt": "hello"}

    def test_retry_then_success(self, canned_server):
        _CannedHandler.responses = [(500, {}), (200, {"text": "second try"})]
        client = HttpGeneratorClient(canned_server, timeout=5, max_retries=2)
        assert client.generate("x") == "second try"

    def test_gives_up_after_retries(self, canned_server):
        _CannedHandler.responses = [(500, {})] * 3
        client = HttpGeneratorClient(canned_server, timeout=5, max_retries=2)
        with pytest.raises(GeneratorError, match="after retries"):
            client.generate("x")

    def test_auth_token_from_environment(self, canned_server, monkeypatch):
        monkeypatch.setenv("SEMREL_GEN_TOKEN", "sekrit")
        _CannedHandler.responses = [(200, {"text": "ok"})]
        HttpGeneratorClient(canned_server, timeout=5).generate("x")
        assert _CannedHandler.seen[0][1] == "Bearer sekrit"

    def test_client_error_no_retry(self, canned_server):
        _CannedHandler.responses = [(403, {})]
        client = HttpGeneratorClient(canned_server, timeout=5)
        with pytest.raises(GeneratorError, match="403"):
            client.generate("x")

    def test_malformed_payload(self, canned_server):
        _CannedHandler.responses = [(200, {"unexpected": 1})]
        client = HttpGeneratorClient(canned_server, timeout=5)
        with pytest.raises(GeneratorError, match="malformed"):
            client.generate("x")


class TestMockClient:
    def test_scripted_replies(self):
        client = MockGeneratorClient(replies={"a prompt": "a reply"})
        assert client.generate("a prompt") == "a reply"

    def test_unscripted_without_template_errors(self):
        with pytest.raises(GeneratorError):
            MockGeneratorClient().generate("anything")

    def test_shuffle_preserves_words(self):
        client = MockGeneratorClient(template=DEFAULT_TEMPLATE)
        reply = client.generate(build_prompt(DEFAULT_TEMPLATE, "one two three four"))
        assert sorted(reply.split()) == ["four", "one", "three", "two"]

    def test_identical_prompts_identical_replies(self):
        client = MockGeneratorClient(template=DEFAULT_TEMPLATE)
        prompt = build_prompt(DEFAULT_TEMPLATE, "some words to shuffle")
        assert client.generate(prompt) == client.generate(prompt)
