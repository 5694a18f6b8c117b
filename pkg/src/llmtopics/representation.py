"""Final topic representations: top c-TF-IDF candidates filtered by the LLM.

Each topic's top-100 c-TF-IDF words are offered to the LLM, which picks
the 10 most representative. Answered words outside the candidate list are
dropped and the list is padded back from the candidates in score order,
so no hallucinated word ever survives. If the answer never parses, the
representation falls back to the plain c-TF-IDF top 10.
"""

from __future__ import annotations

from dataclasses import dataclass

from .collapse import CTfIdfModel, top_words
from .errors import ParseError
from .llm_client import ChatMessage, LlmClient, LlmExchange, LlmRequest, parse_topic_list

SOURCE_LLM = "llm_filtered"
SOURCE_FALLBACK = "ctfidf_fallback"

CANDIDATE_COUNT = 100
TARGET_SIZE = 10

DEFAULT_REFINE_TEMPLATE = (
    "From this word list, choose the {target} words most representative of the "
    "topic '{label}'. Answer as a comma-separated list.\nWords: {words}"
)

RETRY_NUDGE = "Answer with only a comma-separated list of words taken from the list above."


@dataclass
class TopicRepresentation:
    label: str
    words: list[str]
    source: str


def candidate_words(model: CTfIdfModel, label: str, limit: int = CANDIDATE_COUNT) -> list[str]:
    """The topic's top-`limit` c-TF-IDF words (fewer if vocabulary is small)."""
    return top_words(model, label, limit)


def _retry_request(base: LlmRequest, attempt: int, client: LlmClient) -> LlmRequest:
    nudges = [ChatMessage("user", RETRY_NUDGE)] * (attempt + 1)
    return client.request(list(base.messages) + nudges)


def _pick_valid(answer_words: list[str], candidates: list[str], target: int) -> list[str]:
    candidate_set = set(candidates)
    picked: list[str] = []
    for word in answer_words:
        if word in candidate_set and word not in picked:
            picked.append(word)
        if len(picked) == target:
            break
    return picked


def refine_representation(
    label: str,
    candidates: list[str],
    client: LlmClient,
    template: str = DEFAULT_REFINE_TEMPLATE,
    target_size: int = TARGET_SIZE,
    max_parse_retries: int = 1,
    exchange_log: list[LlmExchange] | None = None,
) -> TopicRepresentation:
    """Filter a candidate list down to the topic's representative words.

    An answer counts as parsed only if it contributes at least one
    candidate word; otherwise it is retried with a corrective turn and,
    after max_parse_retries, the representation falls back to the
    candidates' own top slice. Valid answers shorter than target_size are
    padded from the candidates in score order.
    """
    if not candidates:
        raise ValueError(f"topic {label!r} has no candidate words")
    target = min(target_size, len(candidates))
    prompt = template.format(target=target_size, label=label, words=", ".join(candidates))
    request = client.request([ChatMessage("user", prompt)])

    picked: list[str] | None = None
    attempt = 0
    current = request
    while True:
        exchange = client.complete(current)
        if exchange_log is not None:
            exchange_log.append(exchange)
        try:
            answer = list(parse_topic_list(exchange.response_text).labels)
        except ParseError:
            answer = []
        valid = _pick_valid(answer, candidates, target)
        if valid:
            picked = valid
            break
        if attempt >= max_parse_retries:
            break
        current = _retry_request(request, attempt, client)
        attempt += 1

    if picked is None:
        return TopicRepresentation(label=label, words=candidates[:target], source=SOURCE_FALLBACK)
    for word in candidates:
        if len(picked) == target:
            break
        if word not in picked:
            picked.append(word)
    return TopicRepresentation(label=label, words=picked, source=SOURCE_LLM)
