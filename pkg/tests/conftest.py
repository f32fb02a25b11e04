"""Shared fixtures: scriptable HTTP stub endpoints and corpus builders."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import settings

from risk_evidence.corpus import Corpus, Post, RiskLabel, UserRecord

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")


@dataclass
class RecordedRequest:
    path: str
    payload: dict
    headers: dict = field(default_factory=dict)


class StubEndpoint:
    """Tiny scriptable HTTP server; the respond callback sees every request."""

    def __init__(self, respond):
        self.respond = respond
        self.requests: list[RecordedRequest] = []
        self._lock = threading.Lock()
        endpoint = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 - http.server API
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)
                try:
                    payload = json.loads(raw) if raw else {}
                except json.JSONDecodeError:
                    payload = {"_raw": raw.decode("utf-8", "replace")}
                request = RecordedRequest(
                    path=self.path, payload=payload, headers=dict(self.headers)
                )
                with endpoint._lock:
                    endpoint.requests.append(request)
                    index = len(endpoint.requests) - 1
                status, body = endpoint.respond(request, index)
                data = (body if isinstance(body, str) else json.dumps(body)).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):  # silence test output
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def start(self) -> "StubEndpoint":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"


def chat_reply(text: str) -> dict:
    return {
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 1, "completion_tokens": 1},
    }


@pytest.fixture
def stub_server():
    servers: list[StubEndpoint] = []

    def _make(respond) -> StubEndpoint:
        server = StubEndpoint(respond).start()
        servers.append(server)
        return server

    yield _make
    for server in servers:
        server.stop()


def single_post_corpus(body: str, label: str = "c", title: str = "") -> Corpus:
    post = Post(post_id="p0", user_id="u0", title=title, body=body)
    user = UserRecord(user_id="u0", label=RiskLabel(label), posts=(post,))
    return Corpus(users=(user,))


@pytest.fixture
def make_corpus():
    return single_post_corpus
