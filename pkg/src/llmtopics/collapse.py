"""Topic collapse: reduce many raw topics to exactly K.

Two algorithms operate on a TopicState (label -> member documents):

  * Word Similarity Matching (WSM): repeatedly merge the pair of topics
    whose top c-TF-IDF word lists overlap most, recomputing scores after
    every merge, until K topics remain. Fully deterministic.
  * Prompt-Based Matching (PBM): repeatedly ask the LLM whether the
    least-frequent topic should merge into one of the more frequent
    ones; topics nobody claims fall into the absorbing "miscellaneous"
    bucket.

For large topic inventories, compress_to_g runs PBM down to an
intermediate size G first, leaving WSM to finish the reduction to K.

c-TF-IDF is pinned as score(t, c) = tf(t, c) * ln(1 + A / f(t)) where
tf(t, c) counts t in the concatenation of topic c's documents, A is the
average token count per topic pseudo-document, and f(t) is the total
count of t across all pseudo-documents.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

from .corpus import Corpus
from .errors import ConfigError
from .llm_client import ChatMessage, LlmClient, LlmExchange, normalize_label

logger = logging.getLogger(__name__)

MISCELLANEOUS_LABEL = "miscellaneous"

METHOD_PBM = "pbm"
METHOD_WSM = "wsm"
METHOD_MISC = "miscellaneous"

DEFAULT_PBM_TEMPLATE = (
    'Which of the following topics, if any, should "{topic}" be merged into? '
    "Answer with exactly one topic from the list, or \"none\".\nTopics: {candidates}"
)
PBM_REJECT_ANSWER = "none"


@dataclass
class MergeStep:
    absorbed: str
    into: str
    method: str
    score: float | None = None

    def to_dict(self) -> dict:
        return {"absorbed": self.absorbed, "into": self.into, "method": self.method, "score": self.score}

    @classmethod
    def from_dict(cls, payload: dict) -> "MergeStep":
        return cls(
            absorbed=payload["absorbed"],
            into=payload["into"],
            method=payload["method"],
            score=payload.get("score"),
        )


@dataclass
class TopicState:
    """Evolving mapping from topic labels to member documents.

    frequency[label] counts assignments at build time and sums across
    constituents after merges, so it can exceed the member-set size when
    merged topics shared documents. merge_log is the audit trail of every
    collapse decision.
    """

    topics: dict[str, set[int]]
    frequency: dict[str, int]
    merge_log: list[MergeStep] = field(default_factory=list)

    def copy(self) -> "TopicState":
        return TopicState(
            topics={label: set(docs) for label, docs in self.topics.items()},
            frequency=dict(self.frequency),
            merge_log=list(self.merge_log),
        )

    def all_doc_ids(self) -> set[int]:
        union: set[int] = set()
        for docs in self.topics.values():
            union.update(docs)
        return union

    def to_dict(self) -> dict:
        return {
            "topics": {label: sorted(docs) for label, docs in self.topics.items()},
            "frequency": dict(self.frequency),
            "merge_log": [step.to_dict() for step in self.merge_log],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TopicState":
        return cls(
            topics={label: set(docs) for label, docs in payload["topics"].items()},
            frequency=dict(payload["frequency"]),
            merge_log=[MergeStep.from_dict(s) for s in payload.get("merge_log", [])],
        )


@dataclass(frozen=True)
class CollapseConfig:
    k_target: int
    g_intermediate: int | None = None
    window_size: int = 50
    top_words_for_similarity: int = 20
    prompt_budget_chars: int = 3000

    def __post_init__(self) -> None:
        if self.k_target < 1:
            raise ConfigError("k_target must be >= 1")
        if self.g_intermediate is not None and self.g_intermediate <= self.k_target:
            raise ConfigError("g_intermediate must be greater than k_target")
        if self.window_size < 2:
            raise ConfigError("window_size must be >= 2")
        if self.top_words_for_similarity < 1:
            raise ConfigError("top_words_for_similarity must be >= 1")


@dataclass
class CTfIdfModel:
    topic_labels: list[str]
    term_scores: dict[str, dict[str, float]]
    class_average_words: float
    term_class_frequency: dict[str, int]


def compute_ctfidf(state: TopicState, corpus: Corpus) -> CTfIdfModel:
    """Score every (token, topic) pair over the topic pseudo-documents."""
    n_docs = len(corpus.documents)
    term_freq: dict[str, Counter[str]] = {}
    total_tokens = 0
    for label, doc_ids in state.topics.items():
        counts: Counter[str] = Counter()
        for doc_id in doc_ids:
            if not 0 <= doc_id < n_docs:
                raise ValueError(f"topic {label!r} references unknown document id {doc_id}")
            counts.update(corpus.documents[doc_id].tokens)
        term_freq[label] = counts
        total_tokens += sum(counts.values())

    n_topics = len(state.topics)
    average = total_tokens / n_topics if n_topics else 0.0
    class_freq: Counter[str] = Counter()
    for counts in term_freq.values():
        class_freq.update(counts)

    scores: dict[str, dict[str, float]] = {}
    for label, counts in term_freq.items():
        scores[label] = {
            token: tf * math.log(1.0 + average / class_freq[token])
            for token, tf in counts.items()
        }
    return CTfIdfModel(
        topic_labels=list(state.topics),
        term_scores=scores,
        class_average_words=average,
        term_class_frequency=dict(class_freq),
    )


def top_words(model: CTfIdfModel, label: str, m: int) -> list[str]:
    """The m highest-scoring tokens for a topic.

    Ordered score-descending; ties broken by ascending token order.
    """
    if label not in model.term_scores:
        raise KeyError(f"unknown topic label {label!r}")
    ranked = sorted(model.term_scores[label].items(), key=lambda kv: (-kv[1], kv[0]))
    return [token for token, _ in ranked[: max(m, 0)]]


def wsm_similarity(a_words: list[str], b_words: list[str], denom: int) -> float:
    """Shared-word count between two top-word lists, normalized by denom."""
    if denom <= 0:
        raise ValueError("similarity denominator must be > 0")
    return len(set(a_words) & set(b_words)) / denom


def _merge_direction(state: TopicState, label_a: str, label_b: str) -> tuple[str, str]:
    """(absorbed, into): miscellaneous always wins, else higher frequency,
    else the lexicographically smaller label."""
    if label_a == MISCELLANEOUS_LABEL:
        return label_b, label_a
    if label_b == MISCELLANEOUS_LABEL:
        return label_a, label_b
    fa, fb = state.frequency[label_a], state.frequency[label_b]
    if fa > fb or (fa == fb and label_a < label_b):
        return label_b, label_a
    return label_a, label_b


def _apply_merge(state: TopicState, absorbed: str, into: str, method: str, score: float | None) -> None:
    state.topics[into] |= state.topics.pop(absorbed)
    state.frequency[into] += state.frequency.pop(absorbed)
    state.merge_log.append(MergeStep(absorbed=absorbed, into=into, method=method, score=score))


def collapse_wsm(state: TopicState, corpus: Corpus, cfg: CollapseConfig) -> TopicState:
    """Merge the most word-similar topic pair until k_target topics remain.

    Each iteration recomputes c-TF-IDF, takes each topic's top
    cfg.top_words_for_similarity words, and merges the argmax-similarity
    pair. Ties prefer the higher combined frequency, then the
    lexicographically smaller (min_label, max_label) pair. The merged
    topic keeps the higher-frequency constituent's label (miscellaneous,
    when involved, always keeps its own). Deterministic end to end.
    """
    if cfg.k_target > len(state.topics):
        raise ConfigError(
            f"k_target {cfg.k_target} exceeds current topic count {len(state.topics)}"
        )
    state = state.copy()
    denom = cfg.top_words_for_similarity
    while len(state.topics) > cfg.k_target:
        model = compute_ctfidf(state, corpus)
        words = {label: top_words(model, label, denom) for label in state.topics}
        labels = sorted(state.topics)
        best: tuple[float, int, tuple[str, str]] | None = None
        for i, la in enumerate(labels):
            for lb in labels[i + 1 :]:
                sim = wsm_similarity(words[la], words[lb], denom)
                combined = state.frequency[la] + state.frequency[lb]
                candidate = (-sim, -combined, (la, lb))
                if best is None or candidate < best:
                    best = candidate
        assert best is not None
        sim = -best[0]
        la, lb = best[2]
        absorbed, into = _merge_direction(state, la, lb)
        _apply_merge(state, absorbed, into, METHOD_WSM, sim)
    return state


def _ensure_miscellaneous(state: TopicState) -> None:
    if MISCELLANEOUS_LABEL not in state.topics:
        state.topics[MISCELLANEOUS_LABEL] = set()
        state.frequency[MISCELLANEOUS_LABEL] = 0


def _frequency_order(state: TopicState) -> list[str]:
    # Descending frequency; ties ascending lexicographic.
    return sorted(state.topics, key=lambda label: (-state.frequency[label], label))


def _candidate_windows(candidates: list[str], topic: str, template: str, cfg: CollapseConfig) -> list[list[str]]:
    full_prompt = template.format(topic=topic, candidates=", ".join(candidates))
    if len(full_prompt) <= cfg.prompt_budget_chars:
        return [candidates]
    return [
        candidates[i : i + cfg.window_size] for i in range(0, len(candidates), cfg.window_size)
    ]


def collapse_pbm(
    state: TopicState,
    cfg: CollapseConfig,
    client: LlmClient,
    template: str = DEFAULT_PBM_TEMPLATE,
    target: int | None = None,
    on_decision: Callable[[TopicState, list[LlmExchange]], None] | None = None,
) -> TopicState:
    """Prompt-driven collapse down to `target` topics (default cfg.k_target).

    The miscellaneous bucket is materialized unconditionally at entry and
    counts toward the target: PBM output always contains the bucket, and
    every decision removes exactly one topic, either because the LLM
    names a candidate (merge) or because all windows decline (move to
    miscellaneous). Decisions are strictly sequential because each merge
    invalidates the candidate list. on_decision, when given, receives the
    updated state and that decision's exchanges after every step
    (checkpoint hook).
    """
    goal = cfg.k_target if target is None else target
    if goal < 1:
        raise ConfigError("collapse target must be >= 1")
    if goal > len(state.topics):
        raise ConfigError(f"target {goal} exceeds current topic count {len(state.topics)}")
    state = state.copy()
    _ensure_miscellaneous(state)

    while len(state.topics) > goal:
        order = _frequency_order(state)
        topic = next(label for label in reversed(order) if label != MISCELLANEOUS_LABEL)
        candidates = order[: order.index(topic)]
        exchanges: list[LlmExchange] = []
        merged_into: str | None = None
        for window in _candidate_windows(candidates, topic, template, cfg):
            if not window:
                continue
            prompt = template.format(topic=topic, candidates=", ".join(window))
            exchange = client.complete(client.request([ChatMessage("user", prompt)]))
            exchanges.append(exchange)
            answer = normalize_label(exchange.response_text)
            if answer == PBM_REJECT_ANSWER or not answer:
                continue
            if answer in window:
                merged_into = answer
                break
            logger.warning(
                "PBM answer %r is not a candidate for topic %r; treating as no-merge", answer, topic
            )
        if merged_into is not None:
            _apply_merge(state, topic, merged_into, METHOD_PBM, None)
        else:
            _apply_merge(state, topic, MISCELLANEOUS_LABEL, METHOD_MISC, None)
        if on_decision is not None:
            on_decision(state, exchanges)
    return state


def compress_to_g(
    state: TopicState,
    cfg: CollapseConfig,
    client: LlmClient,
    template: str = DEFAULT_PBM_TEMPLATE,
    on_decision: Callable[[TopicState, list[LlmExchange]], None] | None = None,
) -> TopicState:
    """PBM pre-pass shrinking the inventory to G before WSM finishes to K.

    Requires k_target < G < n, where n counts the miscellaneous bucket
    PBM will materialize.
    """
    if cfg.g_intermediate is None:
        raise ConfigError("g_intermediate is required for G-compression")
    g = cfg.g_intermediate
    n = len(state.topics) + (0 if MISCELLANEOUS_LABEL in state.topics else 1)
    if not cfg.k_target < g < n:
        raise ConfigError(
            f"G-compression requires k_target < G < n (got K={cfg.k_target}, G={g}, n={n})"
        )
    return collapse_pbm(state, cfg, client, template=template, target=g, on_decision=on_decision)
