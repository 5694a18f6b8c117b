"""Document ingestion and preprocessing.

A corpus is an ordered list of documents with stable integer ids (id ==
position in ingestion order) plus a vocabulary over the preprocessed
tokens. Preprocessing is deliberately self-contained and deterministic:
lowercase -> punctuation strip -> whitespace tokenization -> minimum
length filter -> stopword removal -> optional lemmatization.

Two input formats are supported: plain text (one document per line) and
json-lines ({"text": ..., "label"?: ...}). Labels, when present, are kept
on the in-memory Document only; the serialized corpus artifact carries
exactly {"id", "raw_text", "tokens"} per document.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError, CorpusFormatError, EmptyCorpusError

PLAIN_LINES = "plain-lines"
JSON_LINES = "json-lines"
FORMATS = (PLAIN_LINES, JSON_LINES)

CORPUS_SCHEMA_VERSION = 1

_PUNCT_TABLE = str.maketrans({ch: " " for ch in string.punctuation})


def default_stopwords() -> frozenset[str]:
    """English stopword list shipped with the package (one word per line)."""
    text = resources.files("llmtopics.data").joinpath("stopwords_en.txt").read_text("utf-8")
    return frozenset(w for w in (line.strip() for line in text.splitlines()) if w)


@dataclass(frozen=True)
class PreprocessConfig:
    """Preprocessing switches.

    The default stopword list is empty; callers opt into the shipped
    English list via default_stopwords().
    """

    lowercase: bool = True
    strip_punctuation: bool = True
    stopword_list: frozenset[str] = frozenset()
    lemmatize: bool = False
    min_token_length: int = 1

    def __post_init__(self) -> None:
        if self.min_token_length < 1:
            raise ConfigError("min_token_length must be >= 1")


@dataclass
class Document:
    """One input record: raw text plus its preprocessed token stream."""

    id: int
    raw_text: str
    tokens: list[str]
    label: str | None = None


@dataclass
class Corpus:
    """Ordered documents with a token vocabulary (token -> dense id)."""

    documents: list[Document]
    vocabulary: dict[str, int]
    source_name: str


def _lemmatize(tokens: list[str]) -> list[str]:
    # Identity stub: collapse and evaluation math are insensitive to
    # lemmatization, and a real lemmatizer would pin an external model.
    return tokens


def preprocess(text: str, cfg: PreprocessConfig) -> list[str]:
    """Turn raw text into the token list used everywhere downstream.

    Punctuation characters are replaced by spaces (so "a.b" splits into
    two tokens), then the text is split on whitespace. Applying
    preprocess() to " ".join(tokens) of its own output is a no-op.
    """
    if cfg.lowercase:
        text = text.lower()
    if cfg.strip_punctuation:
        text = text.translate(_PUNCT_TABLE)
    tokens = [t for t in text.split() if len(t) >= cfg.min_token_length]
    if cfg.stopword_list:
        tokens = [t for t in tokens if t not in cfg.stopword_list]
    if cfg.lemmatize:
        tokens = _lemmatize(tokens)
    return tokens


def build_vocabulary(documents: list[Document]) -> dict[str, int]:
    """Dense ids assigned in sorted token order (deterministic)."""
    seen: set[str] = set()
    for doc in documents:
        seen.update(doc.tokens)
    return {token: i for i, token in enumerate(sorted(seen))}


def _iter_plain_records(raw: str):
    for lineno, line in enumerate(raw.splitlines(), start=1):
        text = line.strip()
        if text:
            yield lineno, text, None


def _iter_jsonl_records(raw: str):
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(record, dict) or "text" not in record:
            raise CorpusFormatError(f'line {lineno}: record is missing a "text" field')
        text = record["text"]
        if not isinstance(text, str):
            raise CorpusFormatError(f'line {lineno}: "text" must be a string')
        label = record.get("label")
        if label is not None and not isinstance(label, str):
            raise CorpusFormatError(f'line {lineno}: "label" must be a string when present')
        yield lineno, text, label


def ingest(path: str | Path, format: str, cfg: PreprocessConfig) -> Corpus:
    """Read a document collection from disk and preprocess it.

    Args:
        path: input file; plain-lines has one document per line,
            json-lines one JSON object per line with a "text" field.
        format: one of PLAIN_LINES / JSON_LINES.
        cfg: preprocessing configuration.

    Raises:
        OSError: the file cannot be read.
        CorpusFormatError: a json-lines record is malformed (message
            names the offending line).
        EmptyCorpusError: no documents survive ingestion.
    """
    if format not in FORMATS:
        raise ConfigError(f"unknown corpus format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    raw = path.read_text("utf-8")

    records = _iter_plain_records(raw) if format == PLAIN_LINES else _iter_jsonl_records(raw)
    documents: list[Document] = []
    for _, text, label in records:
        documents.append(
            Document(id=len(documents), raw_text=text, tokens=preprocess(text, cfg), label=label)
        )
    if not documents:
        raise EmptyCorpusError(f"no documents found in {path}")
    return Corpus(
        documents=documents,
        vocabulary=build_vocabulary(documents),
        source_name=path.stem,
    )


def corpus_stats(c: Corpus) -> dict[str, float]:
    """Size plus average lengths, both post-preprocessing and raw.

    avg_tokens averages the preprocessed token counts; avg_raw_words
    averages whitespace-separated word counts of the raw text. Both are
    reported because dataset-level length statistics are ambiguous about
    which side of preprocessing they describe.
    """
    size = len(c.documents)
    if size == 0:
        return {"size": 0, "avg_tokens": 0.0, "avg_raw_words": 0.0}
    total_tokens = sum(len(d.tokens) for d in c.documents)
    total_raw = sum(len(d.raw_text.split()) for d in c.documents)
    return {
        "size": size,
        "avg_tokens": total_tokens / size,
        "avg_raw_words": total_raw / size,
    }


def corpus_to_dict(c: Corpus) -> dict:
    return {
        "version": CORPUS_SCHEMA_VERSION,
        "source_name": c.source_name,
        "documents": [
            {"id": d.id, "raw_text": d.raw_text, "tokens": list(d.tokens)} for d in c.documents
        ],
    }


def corpus_from_dict(payload: dict) -> Corpus:
    if payload.get("version") != CORPUS_SCHEMA_VERSION:
        raise ConfigError(f"unsupported corpus artifact version {payload.get('version')!r}")
    documents = [
        Document(id=rec["id"], raw_text=rec["raw_text"], tokens=list(rec["tokens"]))
        for rec in payload["documents"]
    ]
    for i, doc in enumerate(documents):
        if doc.id != i:
            raise ConfigError(f"corpus artifact ids out of order at position {i}")
    return Corpus(
        documents=documents,
        vocabulary=build_vocabulary(documents),
        source_name=payload["source_name"],
    )


def save_corpus(c: Corpus, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(corpus_to_dict(c), sort_keys=True, indent=2, ensure_ascii=True) + "\n", "utf-8"
    )


def load_corpus(path: str | Path) -> Corpus:
    return corpus_from_dict(json.loads(Path(path).read_text("utf-8")))
