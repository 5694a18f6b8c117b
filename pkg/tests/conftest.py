from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from llmtopics.collapse import TopicState
from llmtopics.corpus import Corpus, Document, build_vocabulary
from llmtopics.llm_client import LlmClient, RequestDefaults, ScriptedBackend, ScriptEntry


def make_corpus(token_lists: list[list[str]], source_name: str = "test") -> Corpus:
    documents = [
        Document(id=i, raw_text=" ".join(tokens), tokens=list(tokens))
        for i, tokens in enumerate(token_lists)
    ]
    return Corpus(documents=documents, vocabulary=build_vocabulary(documents), source_name=source_name)


def make_state(topics: dict[str, set[int]], frequency: dict[str, int] | None = None) -> TopicState:
    freq = frequency if frequency is not None else {label: len(docs) for label, docs in topics.items()}
    return TopicState(topics={k: set(v) for k, v in topics.items()}, frequency=dict(freq))


def scripted_client(entries: list[ScriptEntry], **defaults) -> LlmClient:
    return LlmClient(backend=ScriptedBackend(entries), defaults=RequestDefaults(**defaults))


def write_script(path: Path, entries: list[dict]) -> Path:
    path.write_text("".join(json.dumps(e) + "\n" for e in entries), "utf-8")
    return path


class StubChatServer:
    """Local chat-completions stub scripting a status-code sequence.

    Serves the OpenAI-compatible wire shape; 200 responses echo
    `answer`. Requests (headers + parsed bodies) are recorded.
    """

    def __init__(self, statuses: list[int], answer: str = "stub answer") -> None:
        self.statuses = list(statuses)
        self.answer = answer
        self.requests: list[dict] = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:  # noqa: N802 (http.server API)
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length)) if length else {}
                outer.requests.append(
                    {"body": body, "authorization": self.headers.get("Authorization")}
                )
                status = outer.statuses.pop(0) if outer.statuses else 200
                if status == 200:
                    payload = json.dumps(
                        {"choices": [{"message": {"role": "assistant", "content": outer.answer}}]}
                    ).encode()
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                else:
                    self.send_response(status)
                    self.send_header("Content-Length", "0")
                    self.end_headers()

            def log_message(self, *args) -> None:
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.endpoint = f"http://127.0.0.1:{self._server.server_address[1]}/v1/chat/completions"
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def stub_server_factory():
    servers: list[StubChatServer] = []

    def factory(statuses: list[int], answer: str = "stub answer") -> StubChatServer:
        server = StubChatServer(statuses, answer)
        servers.append(server)
        return server

    yield factory
    for server in servers:
        server.close()


@pytest.fixture
def toy_corpus() -> Corpus:
    # Three single-document topics: "a a b", "b c", "c c c".
    return make_corpus([["a", "a", "b"], ["b", "c"], ["c", "c", "c"]])


@pytest.fixture
def toy_state() -> TopicState:
    return make_state({"t0": {0}, "t1": {1}, "t2": {2}})
