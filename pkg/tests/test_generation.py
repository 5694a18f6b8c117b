from __future__ import annotations

import random

import pytest

from llmtopics.collapse import MISCELLANEOUS_LABEL
from llmtopics.corpus import Document
from llmtopics.errors import ConfigError
from llmtopics.generation import (
    Demonstration,
    GenerationConfig,
    TopicAssignment,
    build_generation_prompt,
    default_demonstrations,
    document_prompt_text,
    generate_topics,
    tally_topics,
)
from llmtopics.llm_client import ChatMessage, LlmClient, ScriptEntry, ScriptedBackend, request_cache_key

from .conftest import make_corpus, scripted_client

DEMOS = tuple(
    Demonstration(input_text=f"demo text {i}", answer_labels=(f"label{i}",)) for i in range(8)
)


def _doc(tokens: list[str], doc_id: int = 0) -> Document:
    return Document(id=doc_id, raw_text=" ".join(tokens), tokens=tokens)


def _client(entries):
    return scripted_client(entries)


# ---------------------------------------------------------------------------
# prompt construction
# ---------------------------------------------------------------------------


def test_prompt_structure_n4_with_instruction():
    cfg = GenerationConfig(n_demonstrations=4, demonstrations=DEMOS, instruction_text="instruct")
    req = build_generation_prompt(_doc(["hello", "world"]), cfg, _client([]))
    roles = [m.role for m in req.messages]
    assert roles == ["system", "user", "assistant", "user", "assistant", "user", "assistant", "user", "assistant", "user"]
    assert len(req.messages) == 10
    # four demo pairs precede the target turn
    assert req.messages[1].content == "demo text 0"
    assert req.messages[2].content == "label0"
    assert req.messages[-1].content == "hello world"


def test_prompt_structure_n4_without_instruction():
    cfg = GenerationConfig(n_demonstrations=4, demonstrations=DEMOS, instruction_text=None)
    req = build_generation_prompt(_doc(["x"]), cfg, _client([]))
    assert len(req.messages) == 9
    assert all(m.role != "system" for m in req.messages)


def test_prompt_structure_n0_single_turn():
    cfg = GenerationConfig(n_demonstrations=0, demonstrations=DEMOS, instruction_text=None)
    req = build_generation_prompt(_doc(["only"]), cfg, _client([]))
    assert len(req.messages) == 1
    assert req.messages[0].role == "user"


def test_prompt_uses_space_joined_tokens():
    doc = Document(id=0, raw_text="Raw! Punctuated?", tokens=["raw", "punctuated"])
    assert document_prompt_text(doc) == "raw punctuated"
    assert document_prompt_text(_doc([])) == "(empty document)"


def test_generation_config_validation():
    with pytest.raises(ConfigError):
        GenerationConfig(n_demonstrations=9, demonstrations=DEMOS)
    with pytest.raises(ConfigError):
        GenerationConfig(n_demonstrations=-1, demonstrations=DEMOS)
    with pytest.raises(ConfigError):
        Demonstration(input_text="x", answer_labels=())


def test_default_demonstrations_cover_paper_settings():
    demos = default_demonstrations()
    assert len(demos) == 8
    for n in (2, 4, 6, 8):
        GenerationConfig(n_demonstrations=n, demonstrations=demos)


# ---------------------------------------------------------------------------
# generation flow
# ---------------------------------------------------------------------------


def test_generate_topics_scripted_demo_answer():
    tokens = ["trailer", "talk", "week", "movie", "rite", "mechanic", "week", "opportunity"]
    corpus = make_corpus([tokens])
    cfg = GenerationConfig(n_demonstrations=4, demonstrations=DEMOS)
    client = _client([ScriptEntry(response="movies, trailers, mechanic", match_substring="trailer talk")])
    assignments = generate_topics(corpus, cfg, client)
    assert assignments == [TopicAssignment(doc_id=0, labels=["movies", "trailers", "mechanic"])]


def test_generate_topics_retry_after_unparseable_answer():
    corpus = make_corpus([["some", "document"]])
    cfg = GenerationConfig(n_demonstrations=2, demonstrations=DEMOS, max_parse_retries=1)
    client = _client([])
    first = build_generation_prompt(corpus.documents[0], cfg, client)
    from llmtopics.generation import RETRY_NUDGE

    retry = client.request(list(first.messages) + [ChatMessage("user", RETRY_NUDGE)])
    client.backend.entries = [
        ScriptEntry(response="", cache_key=request_cache_key(first)),
        ScriptEntry(response="sports", cache_key=request_cache_key(retry)),
    ]
    assignments = generate_topics(corpus, cfg, client)
    assert assignments[0].labels == ["sports"]


def test_generate_topics_falls_back_to_miscellaneous():
    corpus = make_corpus([["junk", "doc"]])
    cfg = GenerationConfig(n_demonstrations=0, demonstrations=DEMOS, max_parse_retries=2)
    client = _client([ScriptEntry(response="???", match_substring="")])
    assignments = generate_topics(corpus, cfg, client)
    assert assignments[0].labels == [MISCELLANEOUS_LABEL]


def test_generate_topics_covers_all_docs_in_order():
    corpus = make_corpus([[f"doc{i}", "body"] for i in range(5)])
    entries = [ScriptEntry(response=f"topic {i}", match_substring=f"doc{i} body") for i in range(5)]
    cfg = GenerationConfig(n_demonstrations=2, demonstrations=DEMOS)
    assignments = generate_topics(corpus, cfg, _client(entries))
    assert [a.doc_id for a in assignments] == [0, 1, 2, 3, 4]
    assert [a.labels for a in assignments] == [[f"topic {i}"] for i in range(5)]


def test_generate_topics_deterministic_under_script():
    corpus = make_corpus([[f"doc{i}"] for i in range(7)])
    entries = [ScriptEntry(response=f"t{i % 3}", match_substring=f"doc{i}") for i in range(7)]
    cfg = GenerationConfig(n_demonstrations=1, demonstrations=DEMOS)
    runs = [generate_topics(corpus, cfg, _client(entries)) for _ in range(2)]
    assert runs[0] == runs[1]


def test_generate_topics_resume_skips_completed_docs():
    corpus = make_corpus([["a1"], ["b2"], ["c3"]])
    entries = [ScriptEntry(response="fresh", match_substring=tok) for tok in ("b2", "c3")]
    cfg = GenerationConfig(n_demonstrations=0, demonstrations=DEMOS)
    seen: list[int] = []
    assignments = generate_topics(
        corpus,
        cfg,
        _client(entries),
        resume={0: ["resumed"]},
        on_result=lambda a, ex: seen.append(a.doc_id),
    )
    assert assignments[0].labels == ["resumed"]
    assert seen == [1, 2]  # on_result only fires for fresh documents


def test_generate_topics_records_exchanges_per_doc():
    corpus = make_corpus([["alpha"], ["beta"]])
    entries = [
        ScriptEntry(response="a", match_substring="alpha"),
        ScriptEntry(response="b", match_substring="beta"),
    ]
    cfg = GenerationConfig(n_demonstrations=0, demonstrations=DEMOS)
    log: list[tuple[int, int]] = []
    generate_topics(
        corpus, cfg, _client(entries), on_result=lambda a, ex: log.append((a.doc_id, len(ex)))
    )
    assert log == [(0, 1), (1, 1)]


# ---------------------------------------------------------------------------
# tallying
# ---------------------------------------------------------------------------


def test_tally_counts_docs_and_frequency():
    state = tally_topics(
        [TopicAssignment(0, ["a", "b"]), TopicAssignment(1, ["a"])]
    )
    assert state.topics == {"a": {0, 1}, "b": {0}}
    assert state.frequency == {"a": 2, "b": 1}
    assert state.merge_log == []


def test_tally_label_counts_once_per_doc():
    state = tally_topics([TopicAssignment(0, ["a", "a"])])
    assert state.frequency == {"a": 1}


def test_tally_order_independent():
    rng = random.Random(3)
    assignments = [
        TopicAssignment(i, sorted(rng.sample(["x", "y", "z", "w"], rng.randrange(1, 4))))
        for i in range(20)
    ]
    base = tally_topics(assignments)
    for _ in range(5):
        shuffled = assignments[:]
        rng.shuffle(shuffled)
        other = tally_topics(shuffled)
        assert other.topics == base.topics
        assert other.frequency == base.frequency


def test_tally_covers_all_documents():
    corpus = make_corpus([[f"d{i}"] for i in range(6)])
    entries = [ScriptEntry(response=f"t{i % 2}", match_substring=f"d{i}") for i in range(6)]
    cfg = GenerationConfig(n_demonstrations=0, demonstrations=DEMOS)
    assignments = generate_topics(corpus, cfg, _client(entries))
    state = tally_topics(assignments)
    assert state.all_doc_ids() == {d.id for d in corpus.documents}


def test_tally_empty_is_error():
    with pytest.raises(ValueError):
        tally_topics([])


def test_perfect_oracle_recovers_gold_label_count():
    # 200 documents, 89 distinct gold labels, one script entry per label marker.
    rng = random.Random(5)
    labels = [f"gold{i:02d}" for i in range(89)]
    docs, entries = [], []
    for i, label in enumerate(labels):
        entries.append(ScriptEntry(response=label, match_substring=f"mark{i:02d}"))
    for d in range(200):
        label_idx = d % 89
        docs.append([f"mark{label_idx:02d}", f"w{rng.randrange(30)}"])
    corpus = make_corpus(docs)
    cfg = GenerationConfig(n_demonstrations=0, demonstrations=DEMOS)
    state = tally_topics(generate_topics(corpus, cfg, _client(entries)))
    assert len(state.topics) == 89
