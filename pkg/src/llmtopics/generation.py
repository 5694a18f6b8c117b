"""Per-document topic generation via few-shot prompting.

Each document is sent to the LLM behind N demonstration exchanges (user
document -> assistant topic list), optionally preceded by a system
instruction for instruction-tuned backends. Answers are parsed into
normalized label lists; a document whose answers never parse falls back
to the "miscellaneous" label so failures flow into the collapse stage's
bucket.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

from .collapse import MISCELLANEOUS_LABEL, TopicState
from .corpus import Corpus, Document
from .errors import ConfigError, ParseError
from .llm_client import ChatMessage, LlmClient, LlmExchange, LlmRequest, parse_topic_list

DEFAULT_INSTRUCTION = (
    "You identify the topics of documents. For each document, answer with a "
    "short comma-separated list of topic labels and nothing else."
)

RETRY_NUDGE = "Answer with only a comma-separated list of short topic labels."

EMPTY_DOCUMENT_PLACEHOLDER = "(empty document)"


@dataclass(frozen=True)
class Demonstration:
    input_text: str
    answer_labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.answer_labels:
            raise ConfigError("demonstration must carry at least one answer label")


@lru_cache(maxsize=1)
def default_demonstrations() -> tuple[Demonstration, ...]:
    """Eight generic, domain-neutral demonstrations shipped with the package."""
    raw = resources.files("llmtopics.data").joinpath("default_demos.json").read_text("utf-8")
    return tuple(
        Demonstration(input_text=rec["text"], answer_labels=tuple(rec["labels"]))
        for rec in json.loads(raw)
    )


def load_demonstrations(path: str | Path) -> tuple[Demonstration, ...]:
    """Demo set file: JSON list of {"text": string, "labels": [string]}."""
    records = json.loads(Path(path).read_text("utf-8"))
    if not isinstance(records, list):
        raise ConfigError(f"demo file {path} must contain a JSON list")
    return tuple(
        Demonstration(input_text=rec["text"], answer_labels=tuple(rec["labels"]))
        for rec in records
    )


@dataclass(frozen=True)
class GenerationConfig:
    """Few-shot prompting configuration.

    n_demonstrations is the number of demo pairs preceding the target
    document (the tested settings are 2/4/6/8; 0 is allowed for
    experimentation). instruction_text=None omits the system turn for
    backends without instruction tuning.
    """

    n_demonstrations: int = 4
    demonstrations: tuple[Demonstration, ...] = field(default_factory=default_demonstrations)
    instruction_text: str | None = DEFAULT_INSTRUCTION
    max_parse_retries: int = 2

    def __post_init__(self) -> None:
        if self.n_demonstrations < 0:
            raise ConfigError("n_demonstrations must be >= 0")
        if self.n_demonstrations > len(self.demonstrations):
            raise ConfigError(
                f"n_demonstrations ({self.n_demonstrations}) exceeds available "
                f"demonstrations ({len(self.demonstrations)})"
            )
        if self.max_parse_retries < 0:
            raise ConfigError("max_parse_retries must be >= 0")


@dataclass
class TopicAssignment:
    doc_id: int
    labels: list[str]


def document_prompt_text(doc: Document) -> str:
    """What the LLM sees for a document: the space-joined token stream."""
    return " ".join(doc.tokens) or EMPTY_DOCUMENT_PLACEHOLDER


def build_generation_prompt(doc: Document, cfg: GenerationConfig, client: LlmClient) -> LlmRequest:
    """Optional system instruction, N demo pairs, then the target document."""
    messages: list[ChatMessage] = []
    if cfg.instruction_text:
        messages.append(ChatMessage("system", cfg.instruction_text))
    for demo in cfg.demonstrations[: cfg.n_demonstrations]:
        messages.append(ChatMessage("user", demo.input_text))
        messages.append(ChatMessage("assistant", ", ".join(demo.answer_labels)))
    messages.append(ChatMessage("user", document_prompt_text(doc)))
    return client.request(messages)


def _retry_request(base: LlmRequest, attempt: int, client: LlmClient) -> LlmRequest:
    # Each retry appends one more corrective turn, so every attempt has a
    # distinct cache key and deterministic backends can answer it.
    nudges = [ChatMessage("user", RETRY_NUDGE)] * (attempt + 1)
    return client.request(list(base.messages) + nudges)


def _try_parse(text: str) -> list[str] | None:
    try:
        return list(parse_topic_list(text).labels)
    except ParseError:
        return None


def generate_topics(
    corpus: Corpus,
    cfg: GenerationConfig,
    client: LlmClient,
    resume: Mapping[int, list[str]] | None = None,
    on_result: Callable[[TopicAssignment, list[LlmExchange]], None] | None = None,
) -> list[TopicAssignment]:
    """One TopicAssignment per document, in document order.

    Prompts are dispatched in chunks of client.max_in_flight; results are
    committed in document order regardless of completion order. Documents
    present in `resume` are not re-sent. on_result fires per document
    with the assignment and the exchanges that produced it (checkpoint
    hook); a backend error propagates after the last completed document
    was committed.
    """
    resume = resume or {}
    assignments: list[TopicAssignment] = []
    docs = corpus.documents
    chunk_size = max(client.max_in_flight, 1)
    for start in range(0, len(docs), chunk_size):
        chunk = docs[start : start + chunk_size]
        pending = [doc for doc in chunk if doc.id not in resume]
        requests = [build_generation_prompt(doc, cfg, client) for doc in pending]
        exchange_by_id = dict(zip((d.id for d in pending), client.complete_many(requests)))
        for doc in chunk:
            if doc.id in resume:
                assignments.append(TopicAssignment(doc_id=doc.id, labels=list(resume[doc.id])))
                continue
            first = exchange_by_id[doc.id]
            exchanges = [first]
            labels = _try_parse(first.response_text)
            attempt = 0
            while labels is None and attempt < cfg.max_parse_retries:
                retry = client.complete(_retry_request(first.request, attempt, client))
                exchanges.append(retry)
                labels = _try_parse(retry.response_text)
                attempt += 1
            if labels is None:
                labels = [MISCELLANEOUS_LABEL]
            assignment = TopicAssignment(doc_id=doc.id, labels=labels)
            if on_result is not None:
                on_result(assignment, exchanges)
            assignments.append(assignment)
    return assignments


def tally_topics(assignments: list[TopicAssignment]) -> TopicState:
    """Unique labels mapped to member documents and frequency counts.

    Frequency counts (document, label) pairs: labels are already
    deduplicated within one assignment, so a label counts once per
    document that carries it.
    """
    if not assignments:
        raise ValueError("cannot tally an empty assignment list")
    topics: dict[str, set[int]] = {}
    frequency: dict[str, int] = {}
    for assignment in assignments:
        for label in dict.fromkeys(assignment.labels):
            topics.setdefault(label, set()).add(assignment.doc_id)
            frequency[label] = frequency.get(label, 0) + 1
    return TopicState(topics=topics, frequency=frequency)
