from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from featloop.core import MAX_TAGS, PLACEHOLDER, UNSPECIFIED, Document, validate_template
from featloop.llm import ChatRequest, Transport, simulated_backend
from featloop.sentinel import (
    ColumnFailed,
    ExtractionCache,
    ExtractionFailed,
    extract,
    extract_corpus,
    ground,
    parse_tags,
)

TEMPLATE = validate_template(f"List the topics of: {PLACEHOLDER}")


class TestGround:
    def test_substitutes_document_text(self):
        doc = Document.from_text("morning espresso ritual")
        assert ground(TEMPLATE, doc) == "List the topics of: morning espresso ritual"

    def test_single_pass_keeps_literal_placeholder_in_document(self):
        doc = Document.from_text("contains {raw_text} literally")
        grounded = ground(TEMPLATE, doc)
        assert grounded == "List the topics of: contains {raw_text} literally"


class TestParseTags:
    def test_plain_list_in_order(self):
        line = ("create account, log in, donate, chatgpt, auto-gpt, waymo, camel, "
                "carcraft, multi-agent reinforcement learning, jade")
        tags = parse_tags(line)
        assert tags.tags == (
            "create account", "log in", "donate", "chatgpt", "auto-gpt", "waymo",
            "camel", "carcraft", "multi-agent reinforcement learning", "jade",
        )

    def test_uses_first_nonempty_line(self):
        assert parse_tags("\n  \njazz, chess\nignored, line").tags == ("jazz", "chess")

    def test_collapses_inner_whitespace(self):
        assert parse_tags("log  in ,  donate").tags == ("log in", "donate")

    def test_drops_empty_pieces(self):
        assert parse_tags(",jazz,, chess,").tags == ("jazz", "chess")

    def test_drops_overlong_pieces(self):
        long_tag = "one two three four five six seven"
        assert parse_tags(f"{long_tag}, jazz").tags == ("jazz",)

    def test_dedupes_case_insensitively_keeping_first(self):
        assert parse_tags("Jazz, jazz, JAZZ, chess").tags == ("Jazz", "chess")

    def test_truncates_to_ten(self):
        line = ", ".join(f"tag{i}" for i in range(25))
        assert len(parse_tags(line).tags) == MAX_TAGS

    @pytest.mark.parametrize("raw", ["", "   ", "\n\n", ",,,", ", ,"])
    def test_unusable_output_degrades_to_unspecified(self, raw):
        assert parse_tags(raw) == UNSPECIFIED

    @settings(max_examples=200, deadline=None)
    @given(st.text(max_size=300))
    def test_any_text_yields_valid_tags(self, raw):
        tags = parse_tags(raw)
        assert 1 <= len(tags.tags) <= MAX_TAGS
        for tag in tags.tags:
            assert tag
            assert "," not in tag


class TestExtractionCache:
    def test_miss_then_hit(self, tmp_path):
        cache = ExtractionCache(str(tmp_path / "cache.jsonl"))
        assert cache.get("t1", "d1") is None
        cache.put("t1", "d1", parse_tags("jazz"))
        assert cache.get("t1", "d1").tags == ("jazz",)

    def test_persists_across_reopen(self, tmp_path):
        path = str(tmp_path / "cache.jsonl")
        ExtractionCache(path).put("t1", "d1", parse_tags("jazz, chess"))
        reopened = ExtractionCache(path)
        assert reopened.get("t1", "d1").tags == ("jazz", "chess")
        assert len(reopened) == 1

    def test_first_write_wins(self, tmp_path):
        cache = ExtractionCache(str(tmp_path / "cache.jsonl"))
        cache.put("t1", "d1", parse_tags("jazz"))
        cache.put("t1", "d1", parse_tags("chess"))
        assert cache.get("t1", "d1").tags == ("jazz",)

    def test_corrupt_lines_are_skipped(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        cache = ExtractionCache(str(path))
        cache.put("t1", "d1", parse_tags("jazz"))
        with open(path, "ab") as fh:
            fh.write(b"half a reco")
        assert ExtractionCache(str(path)).get("t1", "d1").tags == ("jazz",)


class _FailingBackend:
    def __init__(self, exc=None):
        self.exc = exc or Transport("down")
        self.calls = 0

    def complete(self, request: ChatRequest):
        self.calls += 1
        raise self.exc


def _upper_echo(request: ChatRequest, seed: int) -> str:
    # reply derived from the document text so each document tags differently
    return request.user.rsplit(": ", 1)[-1]


class TestExtract:
    def test_cache_hit_skips_backend(self, tmp_path):
        backend = simulated_backend(0, _upper_echo)
        cache = ExtractionCache(str(tmp_path / "cache.jsonl"))
        doc = Document.from_text("espresso notes")
        first = extract(TEMPLATE, doc, backend, cache)
        again = extract(TEMPLATE, doc, backend, cache)
        assert first == again
        assert backend.call_count == 1

    def test_backend_failure_wraps_document_id(self, tmp_path):
        cache = ExtractionCache(str(tmp_path / "cache.jsonl"))
        doc = Document.from_text("espresso notes")
        with pytest.raises(ExtractionFailed) as err:
            extract(TEMPLATE, doc, _FailingBackend(), cache)
        assert err.value.document_id == doc.id


class TestExtractCorpus:
    def test_tags_every_document(self, tmp_path):
        docs = [Document.from_text(f"text number {i}") for i in range(7)]
        backend = simulated_backend(0, _upper_echo)
        cache = ExtractionCache(str(tmp_path / "cache.jsonl"))
        column = extract_corpus(TEMPLATE, docs, backend, cache)
        assert set(column.values) == {d.id for d in docs}
        assert column.template_id == TEMPLATE.id
        assert column.coverage == 1.0

    def test_duplicate_documents_fetched_once(self, tmp_path):
        doc = Document.from_text("one text")
        backend = simulated_backend(0, _upper_echo)
        cache = ExtractionCache(str(tmp_path / "cache.jsonl"))
        extract_corpus(TEMPLATE, [doc, doc, doc], backend, cache)
        assert backend.call_count == 1

    def test_second_pass_is_fully_cached(self, tmp_path):
        docs = [Document.from_text(f"text number {i}") for i in range(5)]
        backend = simulated_backend(0, _upper_echo)
        cache = ExtractionCache(str(tmp_path / "cache.jsonl"))
        extract_corpus(TEMPLATE, docs, backend, cache)
        before = backend.call_count
        extract_corpus(TEMPLATE, docs, backend, cache)
        assert backend.call_count == before

    def test_total_failure_rejects_column(self, tmp_path):
        docs = [Document.from_text(f"text {i}") for i in range(5)]
        cache = ExtractionCache(str(tmp_path / "cache.jsonl"))
        with pytest.raises(ColumnFailed):
            extract_corpus(TEMPLATE, docs, _FailingBackend(), cache)

    def test_sparse_failures_become_unspecified(self, tmp_path):
        docs = [Document.from_text(f"text {i}") for i in range(10)]
        bad_id = docs[3].id

        class Flaky:
            def __init__(self):
                self.inner = simulated_backend(0, _upper_echo)

            def complete(self, request):
                if "text 3" in request.user:
                    raise Transport("one bad document")
                return self.inner.complete(request)

        cache = ExtractionCache(str(tmp_path / "cache.jsonl"))
        column = extract_corpus(TEMPLATE, docs, Flaky(), cache)
        assert column.values[bad_id] == UNSPECIFIED
        assert column.coverage == pytest.approx(0.9)

    def test_parallelism_must_be_positive(self, tmp_path):
        cache = ExtractionCache(str(tmp_path / "cache.jsonl"))
        with pytest.raises(ValueError):
            extract_corpus(TEMPLATE, [], simulated_backend(0, _upper_echo), cache,
                           parallelism=0)

    def test_parallel_and_serial_agree(self, tmp_path):
        docs = [Document.from_text(f"text number {i}") for i in range(9)]
        serial = extract_corpus(
            TEMPLATE, docs, simulated_backend(0, _upper_echo),
            ExtractionCache(str(tmp_path / "c1.jsonl")), parallelism=1,
        )
        parallel = extract_corpus(
            TEMPLATE, docs, simulated_backend(0, _upper_echo),
            ExtractionCache(str(tmp_path / "c2.jsonl")), parallelism=8,
        )
        assert serial.values == parallel.values
