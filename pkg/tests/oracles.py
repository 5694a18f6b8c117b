"""Independent brute-force oracles used to pin expected values.

Everything here is written directly from the pinned formulas and rules,
sharing no code with the package, so the tests compare two separately
derived implementations.
"""

from __future__ import annotations

import math
from itertools import combinations


def oracle_ctfidf(pseudo_docs: dict[str, list[str]]) -> dict[str, dict[str, float]]:
    """score(t, c) = tf(t, c) * ln(1 + A / f(t)) over flat per-topic token lists."""
    n_topics = len(pseudo_docs)
    average = sum(len(tokens) for tokens in pseudo_docs.values()) / n_topics if n_topics else 0.0
    class_freq: dict[str, int] = {}
    for tokens in pseudo_docs.values():
        for token in tokens:
            class_freq[token] = class_freq.get(token, 0) + 1
    table: dict[str, dict[str, float]] = {}
    for label, tokens in pseudo_docs.items():
        tf: dict[str, int] = {}
        for token in tokens:
            tf[token] = tf.get(token, 0) + 1
        table[label] = {
            token: count * math.log(1.0 + average / class_freq[token])
            for token, count in tf.items()
        }
    return table


def oracle_top_words(scores: dict[str, float], m: int) -> list[str]:
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return [token for token, _ in ranked[:m]]


def oracle_windows(tokens: list[str], window_size: int) -> list[list[str]]:
    if not tokens:
        return []
    if len(tokens) <= window_size:
        return [tokens]
    return [tokens[i : i + window_size] for i in range(len(tokens) - window_size + 1)]


def oracle_cooccurrence(docs: list[list[str]], window_size: int):
    """(total_windows, word_counts, pair_counts) via explicit enumeration."""
    total = 0
    word_counts: dict[str, int] = {}
    pair_counts: dict[tuple[str, str], int] = {}
    for tokens in docs:
        for window in oracle_windows(tokens, window_size):
            total += 1
            present = sorted(set(window))
            for w in present:
                word_counts[w] = word_counts.get(w, 0) + 1
            for a, b in combinations(present, 2):
                pair_counts[(a, b)] = pair_counts.get((a, b), 0) + 1
    return total, word_counts, pair_counts


def oracle_npmi(total: int, word_counts, pair_counts, w1: str, w2: str, eps: float = 1e-12) -> float:
    c1 = word_counts.get(w1, 0)
    c2 = word_counts.get(w2, 0)
    if c1 == 0 or c2 == 0:
        return -1.0
    if w1 == w2:
        return 1.0 if c1 < total else 0.0
    p1 = c1 / total
    p2 = c2 / total
    pair = pair_counts.get((min(w1, w2), max(w1, w2)), 0)
    joint = pair / total + eps
    return math.log(joint / (p1 * p2)) / (-math.log(joint))


def oracle_topic_npmi(total: int, word_counts, pair_counts, words: list[str]) -> float:
    pairs = list(combinations(words, 2))
    return sum(oracle_npmi(total, word_counts, pair_counts, a, b) for a, b in pairs) / len(pairs)


# ---------------------------------------------------------------------------
# WSM merge-order enumeration
# ---------------------------------------------------------------------------

MISC = "miscellaneous"


def _pseudo_docs(topics: dict[str, frozenset[int]], doc_tokens: dict[int, list[str]]):
    return {
        label: [tok for doc_id in sorted(docs) for tok in doc_tokens[doc_id]]
        for label, docs in topics.items()
    }


def _pair_rank(topics, freqs, doc_tokens, top_n: int):
    """Rank every unordered pair; smaller rank tuple is better."""
    table = oracle_ctfidf(_pseudo_docs(topics, doc_tokens))
    words = {label: set(oracle_top_words(table[label], top_n)) for label in topics}
    ranks = {}
    labels = sorted(topics)
    for i, la in enumerate(labels):
        for lb in labels[i + 1 :]:
            sim = len(words[la] & words[lb]) / top_n
            ranks[(la, lb)] = (-sim, -(freqs[la] + freqs[lb]), (la, lb))
    return ranks


def _merge(topics, freqs, la, lb):
    if la == MISC:
        absorbed, into = lb, la
    elif lb == MISC:
        absorbed, into = la, lb
    elif freqs[la] > freqs[lb] or (freqs[la] == freqs[lb] and la < lb):
        absorbed, into = lb, la
    else:
        absorbed, into = la, lb
    new_topics = dict(topics)
    new_freqs = dict(freqs)
    new_topics[into] = frozenset(new_topics[into] | new_topics.pop(absorbed))
    new_freqs[into] = new_freqs[into] + new_freqs.pop(absorbed)
    return new_topics, new_freqs


def oracle_wsm_enumerate(
    topics: dict[str, frozenset[int]],
    freqs: dict[str, int],
    doc_tokens: dict[int, list[str]],
    k: int,
    top_n: int,
) -> list[frozenset[frozenset[int]]]:
    """Final partitions of every greedy-consistent merge order.

    At each state, every pair is scored; all pairs attaining the optimal
    (similarity, combined frequency, lexicographic) rank are followed.
    With a total tie-break order exactly one sequence survives.
    """
    if len(topics) <= k:
        return [frozenset(frozenset(d) for d in topics.values())]
    ranks = _pair_rank(topics, freqs, doc_tokens, top_n)
    best = min(ranks.values())
    outcomes: list[frozenset[frozenset[int]]] = []
    for (la, lb), rank in ranks.items():
        if rank == best:
            nt, nf = _merge(topics, freqs, la, lb)
            outcomes.extend(oracle_wsm_enumerate(nt, nf, doc_tokens, k, top_n))
    return outcomes
