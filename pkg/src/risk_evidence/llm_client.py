"""HTTP client for a chat-completion endpoint plus the highlight-mining loop.

The loop prompts the endpoint K times per post, pulls quoted spans out of
each completion, keeps only candidates that actually occur in the source
text, and leaves duplicate removal to the evidence module. The wire format
is the widely implemented /v1/chat/completions JSON shape; nothing here
hosts or assumes a particular model.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .corpus import Post, Span

logger = logging.getLogger(__name__)

HIGHLIGHT_PROMPT_TEMPLATE = (
    "Provide sequences of text that indicate that this person is suicidal?"
    "\n\nPost Body: {post_body}"
)

# Rough character budget per context token; used only to guard against
# prompts that cannot fit the endpoint's context window.
_CHARS_PER_TOKEN = 4


class LlmError(RuntimeError):
    """Base class for endpoint failures."""


class LlmTimeoutError(LlmError):
    pass


class LlmHttpError(LlmError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"endpoint returned HTTP {status}{': ' + detail if detail else ''}")
        self.status = status


class LlmProtocolError(LlmError):
    """Response body did not follow the chat-completion JSON shape."""


class EmptyResponseError(LlmError):
    pass


class LlmRunsFailedError(LlmError):
    def __init__(self, causes: dict[int, Exception]):
        lines = "; ".join(f"run {i}: {exc}" for i, exc in sorted(causes.items()))
        super().__init__(f"too many failed completion runs ({len(causes)}): {lines}")
        self.causes = causes


@dataclass(frozen=True)
class LlmParams:
    endpoint: str
    model: str = "local-model"
    temperature: float = 0.75
    top_p: float = 1.0
    context_size: int = 32000
    max_tokens: int | None = None
    n_runs: int = 8
    timeout: float = 60.0
    max_retries: int = 3
    retry_backoff: float = 0.5
    min_success_fraction: float = 0.5
    concurrency: int = 1
    api_key_env: str = "LLM_API_KEY"
    audit_log: str | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0.0 < self.top_p <= 1.0):
            raise ValueError("top_p must be in (0, 1]")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")


@dataclass(frozen=True)
class LlmResponse:
    text: str
    run_index: int
    latency_s: float
    usage: dict | None = None
    retries: int = 0


@dataclass(frozen=True)
class LlmCandidate:
    """A raw quoted string from one completion run (pre-verification)."""

    run_index: int
    text: str


def _audit(params: LlmParams, record: dict) -> None:
    if not params.audit_log:
        return
    path = Path(params.audit_log)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def chat_completion(
    params: LlmParams,
    prompt: str,
    run_index: int = 0,
    session: requests.Session | None = None,
) -> LlmResponse:
    """One completion; retries with exponential backoff on transient failures.

    Timeouts, connection errors, 429 and 5xx statuses are transient; other
    non-2xx statuses and malformed bodies raise immediately.
    """
    url = params.endpoint.rstrip("/") + "/v1/chat/completions"
    body = {
        "model": params.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": params.temperature,
        "top_p": params.top_p,
    }
    if params.max_tokens is not None:
        body["max_tokens"] = params.max_tokens
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(params.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    post = session.post if session is not None else requests.post
    last_error: LlmError | None = None
    started = time.monotonic()
    for attempt in range(params.max_retries + 1):
        if attempt:
            time.sleep(params.retry_backoff * (2 ** (attempt - 1)))
        try:
            resp = post(url, json=body, headers=headers, timeout=params.timeout)
        except requests.Timeout:
            last_error = LlmTimeoutError(
                f"request timed out after {params.timeout}s (run {run_index})"
            )
            continue
        except requests.ConnectionError as exc:
            last_error = LlmError(f"connection failed: {exc}")
            continue
        if resp.status_code == 429 or resp.status_code >= 500:
            last_error = LlmHttpError(resp.status_code, resp.text[:200])
            continue
        if not (200 <= resp.status_code < 300):
            error = LlmHttpError(resp.status_code, resp.text[:200])
            _audit(params, {"run_index": run_index, "prompt": prompt,
                            "error": str(error), "retries": attempt})
            raise error
        try:
            payload = resp.json()
            text = payload["choices"][0]["message"]["content"]
            if not isinstance(text, str):
                raise TypeError("content is not a string")
            usage = payload.get("usage")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            error = LlmProtocolError(f"malformed completion response: {exc}")
            _audit(params, {"run_index": run_index, "prompt": prompt,
                            "error": str(error), "retries": attempt})
            raise error from None
        latency = time.monotonic() - started
        _audit(params, {"run_index": run_index, "prompt": prompt, "response": text,
                        "latency_s": round(latency, 6), "retries": attempt})
        return LlmResponse(text=text, run_index=run_index, latency_s=latency,
                           usage=usage, retries=attempt)

    assert last_error is not None
    _audit(params, {"run_index": run_index, "prompt": prompt,
                    "error": str(last_error), "retries": params.max_retries})
    raise last_error


@dataclass
class LlmClient:
    """Shareable client holding connection state and request parameters."""

    params: LlmParams
    session: requests.Session = field(default_factory=requests.Session)

    def complete(self, prompt: str, run_index: int = 0) -> LlmResponse:
        return chat_completion(self.params, prompt, run_index, self.session)

    def close(self) -> None:
        self.session.close()


def fit_to_context(body_text: str, params: LlmParams, template_overhead: int) -> tuple[str, bool]:
    """Truncate a post tail so the assembled prompt fits the context window."""
    budget = params.context_size * _CHARS_PER_TOKEN - template_overhead
    if budget <= 0 or len(body_text) <= budget:
        return body_text, False
    return body_text[:budget], True


def llm_extract_highlights(
    post: Post,
    params: LlmParams,
    client: LlmClient | None = None,
    include_title: bool = True,
) -> list[LlmCandidate]:
    """Prompt the endpoint K times for one post; return all quoted candidates.

    Individual run failures are tolerated while at least
    ``min_success_fraction`` of the runs succeed; below that threshold an
    error lists every per-run cause.
    """
    body_text = post.document(include_title)
    if not body_text.strip():
        raise ValueError(f"post {post.post_id!r} has an empty body")
    overhead = len(HIGHLIGHT_PROMPT_TEMPLATE) - len("{post_body}")
    body_text, truncated = fit_to_context(body_text, params, overhead)
    if truncated:
        logger.warning("post %s truncated to fit the context window", post.post_id)
    prompt = HIGHLIGHT_PROMPT_TEMPLATE.format(post_body=body_text)

    own_client = client is None
    client = client or LlmClient(params)
    responses: dict[int, LlmResponse] = {}
    failures: dict[int, Exception] = {}

    def _run(i: int) -> None:
        try:
            responses[i] = client.complete(prompt, run_index=i)
        except LlmError as exc:
            failures[i] = exc

    try:
        if params.concurrency > 1:
            with ThreadPoolExecutor(max_workers=params.concurrency) as pool:
                list(pool.map(_run, range(params.n_runs)))
        else:
            for i in range(params.n_runs):
                _run(i)
    finally:
        if own_client:
            client.close()

    required = math.ceil(params.n_runs * params.min_success_fraction)
    if len(responses) < max(1, required):
        raise LlmRunsFailedError(failures)
    if failures:
        logger.warning(
            "post %s: %d of %d completion runs failed; continuing with partial results",
            post.post_id, len(failures), params.n_runs,
        )

    candidates: list[LlmCandidate] = []
    for i in sorted(responses):
        for quoted in parse_quoted(responses[i].text):
            candidates.append(LlmCandidate(run_index=i, text=quoted))
    return candidates


_QUOTE_CLOSERS = {'"': '"', "“": "”"}  # straight pairs; “ closes with ”


def parse_quoted(response_text: str) -> list[str]:
    """Substrings between matching double quotes (straight or curly), in order.

    An opener without a matching closer is ignored, as are empty captures.
    """
    out: list[str] = []
    i = 0
    n = len(response_text)
    while i < n:
        ch = response_text[i]
        closer = _QUOTE_CLOSERS.get(ch)
        if closer is None:
            i += 1
            continue
        end = response_text.find(closer, i + 1)
        if end < 0:
            break  # unbalanced trailing quote
        captured = response_text[i + 1 : end].strip()
        if captured:
            out.append(captured)
        i = end + 1
    return out


def verify_in_text(candidates: list[str], post_text: str) -> tuple[list[Span], list[str]]:
    """Keep candidates that occur in the source; return (spans, dropped).

    Matching tries, in order: exact, case-insensitive, then case-insensitive
    with whitespace runs collapsed. Every kept candidate becomes a span at
    its first occurrence whose text is verbatim from ``post_text``;
    candidates that never occur (hallucinations) land in ``dropped``.
    """
    spans: list[Span] = []
    dropped: list[str] = []
    for raw in candidates:
        candidate = raw.strip()
        if not candidate:
            dropped.append(raw)
            continue
        pos = post_text.find(candidate)
        if pos >= 0:
            spans.append(Span.of(post_text, pos, pos + len(candidate)))
            continue
        match = re.search(re.escape(candidate), post_text, re.IGNORECASE)
        if match is None:
            pattern = r"\s+".join(re.escape(w) for w in candidate.split())
            match = re.search(pattern, post_text, re.IGNORECASE)
        if match is not None and match.start() < match.end():
            spans.append(Span.of(post_text, match.start(), match.end()))
        else:
            dropped.append(raw)
    return spans, dropped
