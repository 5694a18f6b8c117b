"""Uniform chat-LLM interface with pluggable backends and a persistent cache.

Backends:
  * HttpBackend      -- OpenAI-compatible chat-completions endpoint (remote
                        or local server), with retry/backoff and rate limiting.
  * ScriptedBackend  -- deterministic canned responses from a json-lines
                        script file; a request with no matching entry is a
                        hard error, never a silent fallback.
  * ReplayBackend    -- a ScriptedBackend over the replay log recorded by a
                        previous run; re-running over it makes zero network
                        calls.

Responses are cached by a content hash of (model_id, messages, temperature).
max_tokens is deliberately excluded from the key: trimming or growing the
budget must not invalidate recorded answers.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import requests

from .errors import BackendError, ParseError, ScriptMissError

ROLES = ("system", "user", "assistant")

ENV_ENDPOINT = "PT_LLM_ENDPOINT"
ENV_API_KEY = "PT_LLM_API_KEY"
ENV_CACHE_DIR = "PT_CACHE_DIR"

DEFAULT_MAX_RETRIES = 3
DEFAULT_BACKOFF_S = 1.0
DEFAULT_MAX_IN_FLIGHT = 4
RETRYABLE_STATUS = frozenset({429}) | frozenset(range(500, 600))


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"invalid role {self.role!r}")
        if not self.content:
            raise ValueError("message content must be non-empty")


@dataclass(frozen=True)
class LlmRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 256

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("request must contain at least one message")
        if self.messages[-1].role != "user":
            raise ValueError("last message must have role 'user'")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")

    def joined_text(self) -> str:
        """All message contents, newline-joined (substring matching target)."""
        return "\n".join(m.content for m in self.messages)


def request_cache_key(req: LlmRequest) -> str:
    """Content hash of (model_id, messages, temperature), hex-encoded.

    Pure function of those fields: permuting messages or changing the
    temperature changes the key; changing max_tokens does not.
    """
    payload = json.dumps(
        [req.model_id, [[m.role, m.content] for m in req.messages], req.temperature],
        ensure_ascii=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class LlmExchange:
    request: LlmRequest
    response_text: str
    backend: str
    cache_key: str
    from_cache: bool = False
    retries: int = 0


@dataclass(frozen=True)
class TopicListAnswer:
    labels: tuple[str, ...]


_LIST_MARKER = re.compile(r"^\s*(?:[-*•]+|\d+\s*[.)])\s*")
_INLINE_NUMBER = re.compile(r"\s*\d+\s*[.)]\s*")
_EDGE_PUNCT = ".,;:!?\"'`()[]"


def normalize_label(text: str) -> str:
    """Lowercase, trim edge punctuation, collapse internal whitespace."""
    text = text.strip().strip(_EDGE_PUNCT).lower()
    return " ".join(text.split())


def parse_topic_list(response_text: str) -> TopicListAnswer:
    """Parse an LLM answer into normalized topic labels.

    Splits on commas and newlines; numbered list markers ("1.", "2)")
    and leading bullets also delimit items. Duplicates are dropped
    keeping first occurrence. Raises ParseError when nothing survives
    normalization; the caller decides whether to retry or fall back.
    """
    labels: list[str] = []
    seen: set[str] = set()
    for chunk in re.split(r"[,\n]", response_text):
        chunk = _LIST_MARKER.sub("", chunk)
        for piece in _INLINE_NUMBER.split(chunk):
            label = normalize_label(piece)
            if label and label not in seen:
                seen.add(label)
                labels.append(label)
    if not labels:
        raise ParseError(f"no topic labels found in response: {response_text!r}")
    return TopicListAnswer(labels=tuple(labels))


class Backend(Protocol):
    name: str

    def send(self, req: LlmRequest) -> tuple[str, int]:
        """Return (response_text, retries_used)."""
        ...


class HttpBackend:
    """OpenAI-compatible chat-completions client.

    POSTs {"model", "messages", "temperature", "max_tokens"} and reads
    choices[0].message.content. Retries 429/5xx and transport errors with
    exponential backoff (base 1s); honors a minimum inter-request
    interval when configured.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        name: str = "remote",
        max_retries: int = DEFAULT_MAX_RETRIES,
        backoff_s: float = DEFAULT_BACKOFF_S,
        min_interval_s: float = 0.0,
        timeout_s: float = 60.0,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.endpoint = endpoint
        self.api_key = api_key
        self.name = name
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.min_interval_s = min_interval_s
        self.timeout_s = timeout_s
        self._sleep = sleep
        self._last_request_at = 0.0
        self._rate_lock = threading.Lock()

    def _throttle(self) -> None:
        if self.min_interval_s <= 0:
            return
        with self._rate_lock:
            wait = self._last_request_at + self.min_interval_s - time.monotonic()
            if wait > 0:
                self._sleep(wait)
            self._last_request_at = time.monotonic()

    def _post_once(self, req: LlmRequest) -> requests.Response:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": req.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        self._throttle()
        return requests.post(self.endpoint, json=body, headers=headers, timeout=self.timeout_s)

    def send(self, req: LlmRequest) -> tuple[str, int]:
        retries = 0
        while True:
            failure: str
            try:
                resp = self._post_once(req)
            except requests.RequestException as exc:
                failure = f"transport error: {exc}"
            else:
                if resp.status_code == 200:
                    return self._extract_text(resp), retries
                if resp.status_code not in RETRYABLE_STATUS:
                    raise BackendError(
                        f"{self.name} backend returned HTTP {resp.status_code}: {resp.text[:200]}"
                    )
                failure = f"HTTP {resp.status_code}"
            if retries >= self.max_retries:
                raise BackendError(
                    f"{self.name} backend failed after {self.max_retries} retries ({failure})"
                )
            self._sleep(self.backoff_s * (2**retries))
            retries += 1

    def _extract_text(self, resp: requests.Response) -> str:
        try:
            payload = resp.json()
            return payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"{self.name} backend returned a malformed body: {exc}") from exc


@dataclass(frozen=True)
class ScriptEntry:
    response: str
    cache_key: str | None = None
    match_substring: str | None = None


class ScriptedBackend:
    """Canned responses from script entries, evaluated in file order.

    Entries match either by exact cache_key or by substring over the
    newline-joined message contents. A request matching no entry raises
    ScriptMissError.
    """

    name = "script"

    def __init__(self, entries: Iterable[ScriptEntry]) -> None:
        self.entries = list(entries)
        for entry in self.entries:
            if entry.cache_key is None and entry.match_substring is None:
                raise ValueError("script entry needs a cache_key or a match_substring")

    @classmethod
    def from_files(cls, paths: Sequence[str | Path]) -> "ScriptedBackend":
        entries: list[ScriptEntry] = []
        for path in paths:
            for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
                if not line.strip():
                    continue
                record = json.loads(line)
                if "response" not in record:
                    raise ValueError(f"{path}:{lineno}: script entry is missing 'response'")
                entries.append(
                    ScriptEntry(
                        response=record["response"],
                        cache_key=record.get("cache_key"),
                        match_substring=record.get("match_substring"),
                    )
                )
        return cls(entries)

    def send(self, req: LlmRequest) -> tuple[str, int]:
        key = request_cache_key(req)
        text = req.joined_text()
        for entry in self.entries:
            if entry.cache_key is not None and entry.cache_key == key:
                return entry.response, 0
            if entry.match_substring is not None and entry.match_substring in text:
                return entry.response, 0
        raise ScriptMissError(
            f"no script entry matches request {key} (last user turn: "
            f"{req.messages[-1].content[:80]!r})"
        )


class ReplayBackend(ScriptedBackend):
    name = "replay"

    @classmethod
    def from_replay_dir(cls, directory: str | Path) -> "ReplayBackend":
        paths = sorted(Path(directory).glob("replay_*.jsonl"))
        if not paths:
            raise BackendError(f"no replay_*.jsonl files found in {directory}")
        backend = cls.from_files(paths)
        return backend


class ResponseCache:
    """Persistent prompt cache: append-only json-lines keyed by cache_key.

    First write wins; concurrent readers are safe and writes are
    serialized by a lock.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        if self.path.exists():
            for line in self.path.read_text("utf-8").splitlines():
                if not line.strip():
                    continue
                record = json.loads(line)
                self._entries.setdefault(record["cache_key"], record["response"])

    def get(self, key: str) -> str | None:
        return self._entries.get(key)

    def put(self, key: str, response: str) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(
                    json.dumps(
                        {"cache_key": key, "response": response},
                        ensure_ascii=True,
                        sort_keys=True,
                    )
                    + "\n"
                )

    def __len__(self) -> int:
        return len(self._entries)


@dataclass(frozen=True)
class RequestDefaults:
    model_id: str = "default"
    temperature: float = 0.0
    max_tokens: int = 256


@dataclass
class LlmClient:
    """Backend plus cache, with helpers for building and batching requests."""

    backend: Backend
    cache: ResponseCache | None = None
    defaults: RequestDefaults = field(default_factory=RequestDefaults)
    max_in_flight: int = DEFAULT_MAX_IN_FLIGHT

    def request(self, messages: Sequence[ChatMessage]) -> LlmRequest:
        return LlmRequest(
            model_id=self.defaults.model_id,
            messages=tuple(messages),
            temperature=self.defaults.temperature,
            max_tokens=self.defaults.max_tokens,
        )

    def ask(self, content: str) -> LlmExchange:
        return self.complete(self.request([ChatMessage("user", content)]))

    def complete(self, req: LlmRequest) -> LlmExchange:
        key = request_cache_key(req)
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                return LlmExchange(
                    request=req,
                    response_text=cached,
                    backend=self.backend.name,
                    cache_key=key,
                    from_cache=True,
                )
        text, retries = self.backend.send(req)
        if self.cache is not None:
            self.cache.put(key, text)
        return LlmExchange(
            request=req,
            response_text=text,
            backend=self.backend.name,
            cache_key=key,
            retries=retries,
        )

    def complete_many(self, reqs: Sequence[LlmRequest]) -> list[LlmExchange]:
        """Complete up to max_in_flight requests concurrently.

        Results come back in input order regardless of completion order;
        the first failure propagates.
        """
        if len(reqs) <= 1 or self.max_in_flight <= 1:
            return [self.complete(r) for r in reqs]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(self.complete, reqs))
