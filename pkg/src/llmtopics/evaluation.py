"""Topic quality metrics and the word-intrusion task harness.

NPMI coherence uses boolean word presence over sliding windows of the
modeled corpus itself (no external reference corpus). Topic diversity is
the fraction of unique words across all topic representations. The
intrusion harness generates five-word tasks (four topic words plus one
intruder from another topic) for external annotators and scores their
answer sheets.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

from .corpus import Corpus
from .representation import TopicRepresentation

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_SIZE = 10
NPMI_EPS = 1e-12


@dataclass
class CooccurrenceStats:
    """Boolean presence counts per sliding window.

    pair_window_count keys are sorted (w1, w2) tuples.
    """

    window_size: int
    total_windows: int
    word_window_count: dict[str, int]
    pair_window_count: dict[tuple[str, str], int]


def build_cooccurrence(corpus: Corpus, window_size: int = DEFAULT_WINDOW_SIZE) -> CooccurrenceStats:
    """Slide a window of `window_size` tokens over every document.

    Documents shorter than the window contribute exactly one window (the
    whole document); documents with no tokens contribute none. Counting
    is boolean per window: a word or pair counts once per window it
    appears in.
    """
    if window_size < 2:
        raise ValueError("window_size must be >= 2")
    total = 0
    word_count: dict[str, int] = {}
    pair_count: dict[tuple[str, str], int] = {}
    for doc in corpus.documents:
        tokens = doc.tokens
        if not tokens:
            continue
        if len(tokens) <= window_size:
            windows = [tokens]
        else:
            windows = [tokens[i : i + window_size] for i in range(len(tokens) - window_size + 1)]
        for window in windows:
            total += 1
            present = sorted(set(window))
            for word in present:
                word_count[word] = word_count.get(word, 0) + 1
            for pair in combinations(present, 2):
                pair_count[pair] = pair_count.get(pair, 0) + 1
    return CooccurrenceStats(
        window_size=window_size,
        total_windows=total,
        word_window_count=word_count,
        pair_window_count=pair_count,
    )


def npmi_pair(stats: CooccurrenceStats, w1: str, w2: str) -> float:
    """Normalized pointwise mutual information of two words, in [-1, 1].

    NPMI = ln(P(w1,w2) / (P(w1) P(w2))) / (-ln P(w1,w2)) with additive
    smoothing NPMI_EPS on the joint probability. Conventions: a pair with
    an unseen word scores -1; a self-pair scores 1 when P(w) < 1
    (self-coherence) and 0 when P(w) = 1 (degenerate denominator).
    """
    if stats.total_windows <= 0:
        raise ValueError("co-occurrence statistics are empty")
    c1 = stats.word_window_count.get(w1, 0)
    c2 = stats.word_window_count.get(w2, 0)
    if c1 == 0 or c2 == 0:
        return -1.0
    total = stats.total_windows
    if w1 == w2:
        return 1.0 if c1 < total else 0.0
    p1 = c1 / total
    p2 = c2 / total
    pair = stats.pair_window_count.get((min(w1, w2), max(w1, w2)), 0)
    joint = pair / total + NPMI_EPS
    return math.log(joint / (p1 * p2)) / (-math.log(joint))


def topic_npmi(stats: CooccurrenceStats, words: Sequence[str]) -> float:
    """Mean npmi_pair over all unordered word pairs of a topic."""
    if len(words) < 2:
        raise ValueError("topic_npmi needs at least two words")
    pairs = list(combinations(words, 2))
    return sum(npmi_pair(stats, a, b) for a, b in pairs) / len(pairs)


def topic_diversity(reps: Sequence[TopicRepresentation]) -> float:
    """Unique words across all representations over the total word count."""
    if not reps:
        raise ValueError("topic_diversity needs at least one representation")
    if any(not rep.words for rep in reps):
        raise ValueError("every representation must have at least one word")
    union: set[str] = set()
    total = 0
    for rep in reps:
        union.update(rep.words)
        total += len(rep.words)
    return len(union) / total


@dataclass
class EvaluationReport:
    per_topic_npmi: dict[str, float]
    mean_npmi: float
    topic_diversity: float
    k: int

    def to_dict(self) -> dict:
        return {
            "per_topic_npmi": dict(self.per_topic_npmi),
            "mean_npmi": self.mean_npmi,
            "topic_diversity": self.topic_diversity,
            "k": self.k,
        }


def evaluate_topics(stats: CooccurrenceStats, reps: Sequence[TopicRepresentation]) -> EvaluationReport:
    """NPMI and diversity over a set of representations.

    Representations with no words are excluded from both metrics;
    NPMI additionally requires at least two words per topic. k reports
    the full representation count as given.
    """
    scorable = [rep for rep in reps if len(rep.words) >= 2]
    per_topic = {rep.label: topic_npmi(stats, rep.words) for rep in scorable}
    mean = sum(per_topic.values()) / len(per_topic) if per_topic else 0.0
    nonempty = [rep for rep in reps if rep.words]
    diversity = topic_diversity(nonempty) if nonempty else 0.0
    return EvaluationReport(
        per_topic_npmi=per_topic,
        mean_npmi=mean,
        topic_diversity=diversity,
        k=len(reps),
    )


@dataclass
class IntrusionTask:
    task_id: str
    topic_label: str
    shown_words: list[str]
    intruder_index: int
    seed: int


def make_intrusion_tasks(
    reps: Sequence[TopicRepresentation], tasks_per_topic: int, seed: int
) -> list[IntrusionTask]:
    """Build five-word intrusion tasks, fully seeded.

    Each task shows four words sampled from one topic's representation
    plus one intruder taken from a uniformly chosen other topic, subject
    to the intruder not appearing anywhere in the first topic's words.
    Topics with no legal intruder are skipped with a warning.
    """
    if len(reps) < 2:
        raise ValueError("intrusion tasks need at least two topics")
    if any(len(rep.words) < 4 for rep in reps):
        raise ValueError("every representation needs at least four words")
    if tasks_per_topic < 1:
        raise ValueError("tasks_per_topic must be >= 1")
    rng = random.Random(seed)
    tasks: list[IntrusionTask] = []
    for rep in reps:
        own = set(rep.words)
        sources = [
            other for other in reps if other is not rep and any(w not in own for w in other.words)
        ]
        if not sources:
            logger.warning("topic %r has no legal intruder; skipping", rep.label)
            continue
        for i in range(tasks_per_topic):
            shown = rng.sample(rep.words, 4)
            source = rng.choice(sources)
            intruder = rng.choice([w for w in source.words if w not in own])
            shown.append(intruder)
            rng.shuffle(shown)
            tasks.append(
                IntrusionTask(
                    task_id=f"{rep.label}#{i}",
                    topic_label=rep.label,
                    shown_words=shown,
                    intruder_index=shown.index(intruder),
                    seed=seed,
                )
            )
    return tasks


def score_intrusion(tasks: Sequence[IntrusionTask], answers: Mapping[str, int]) -> float:
    """Fraction of answered tasks whose chosen index hits the intruder.

    Unanswered tasks are excluded from the denominator; an answer for an
    unknown task id is an error, as is an empty answer sheet.
    """
    by_id = {task.task_id: task for task in tasks}
    if not answers:
        raise ValueError("no answered tasks to score")
    correct = 0
    for task_id, chosen in answers.items():
        if task_id not in by_id:
            raise ValueError(f"answer references unknown task id {task_id!r}")
        if chosen == by_id[task_id].intruder_index:
            correct += 1
    return correct / len(answers)
