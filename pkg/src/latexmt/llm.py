"""Chat-completion access: one real HTTP backend, three deterministic mocks.

Every agent goes through :class:`LlmClient`, which owns retries, usage
accounting and the optional request transcript.  Backends implement a
single ``complete(request) -> ChatResult`` method, so tests can swap in the
mocks and the rest of the pipeline cannot tell the difference.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import requests

from .errors import (
    AuthError,
    EmptyCompletion,
    LlmError,
    RetryBudgetExhausted,
    ScriptExhausted,
    TransientLlmError,
)


@dataclass
class ChatRequest:
    system_prompt: str
    user_message: str
    temperature: float = 0.7
    max_new_tokens: int = 8192
    model: str = ""

    def messages(self) -> list[dict]:
        msgs = []
        if self.system_prompt:
            msgs.append({"role": "system", "content": self.system_prompt})
        msgs.append({"role": "user", "content": self.user_message})
        return msgs


@dataclass(frozen=True)
class ChatResult:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class UsageRecord:
    prompt_tokens: int
    completion_tokens: int
    cost: float


class UsageLedger:
    """Thread-safe accumulator of token usage and spend."""

    def __init__(self, prompt_token_price: float = 0.0, completion_token_price: float = 0.0):
        self._lock = threading.Lock()
        self._records: list[UsageRecord] = []
        self.prompt_token_price = prompt_token_price
        self.completion_token_price = completion_token_price

    def record(self, prompt_tokens: int, completion_tokens: int) -> UsageRecord:
        cost = (
            prompt_tokens * self.prompt_token_price
            + completion_tokens * self.completion_token_price
        )
        rec = UsageRecord(prompt_tokens, completion_tokens, cost)
        with self._lock:
            self._records.append(rec)
        return rec

    @property
    def calls(self) -> int:
        with self._lock:
            return len(self._records)

    @property
    def total_prompt_tokens(self) -> int:
        with self._lock:
            return sum(r.prompt_tokens for r in self._records)

    @property
    def total_completion_tokens(self) -> int:
        with self._lock:
            return sum(r.completion_tokens for r in self._records)

    @property
    def total_cost(self) -> float:
        with self._lock:
            return sum(r.cost for r in self._records)

    def summary(self) -> dict:
        with self._lock:
            return {
                "calls": len(self._records),
                "prompt_tokens": sum(r.prompt_tokens for r in self._records),
                "completion_tokens": sum(r.completion_tokens for r in self._records),
                "cost": round(sum(r.cost for r in self._records), 6),
            }


def _estimate_tokens(text: str) -> int:
    # Mocks have no tokenizer; a flat chars/4 estimate keeps ledgers moving.
    return max(1, len(text) // 4)


class EchoBackend:
    """Returns the user message unchanged. The identity translator."""

    def __init__(self):
        self.calls = 0

    def complete(self, request: ChatRequest) -> ChatResult:
        self.calls += 1
        return ChatResult(
            request.user_message,
            _estimate_tokens(request.system_prompt + request.user_message),
            _estimate_tokens(request.user_message),
        )


class ScriptedBackend:
    """Replays a fixed list of replies in order; runs dry loudly."""

    def __init__(self, replies: Sequence[str]):
        self._replies = list(replies)
        self._next = 0
        self.calls = 0

    @classmethod
    def from_file(cls, path: Path | str) -> "ScriptedBackend":
        """Load replies from a JSON array or a JSONL of {"reply": ...}."""
        raw = Path(path).read_text(encoding="utf-8")
        stripped = raw.lstrip()
        if stripped.startswith("["):
            replies = json.loads(raw)
        else:
            replies = [
                json.loads(line)["reply"]
                for line in raw.splitlines()
                if line.strip()
            ]
        return cls(replies)

    def complete(self, request: ChatRequest) -> ChatResult:
        self.calls += 1
        if self._next >= len(self._replies):
            raise ScriptExhausted(
                f"scripted backend exhausted after {len(self._replies)} replies"
            )
        reply = self._replies[self._next]
        self._next += 1
        return ChatResult(
            reply,
            _estimate_tokens(request.system_prompt + request.user_message),
            _estimate_tokens(reply),
        )

    @property
    def remaining(self) -> int:
        return len(self._replies) - self._next


class RuleBackend:
    """First regex rule matching the user message wins; optional default."""

    def __init__(
        self,
        rules: Sequence[tuple[str, str | Callable[[re.Match, ChatRequest], str]]],
        default: str | None = None,
    ):
        self._rules = [(re.compile(pat, re.S), reply) for pat, reply in rules]
        self._default = default
        self.calls = 0

    def complete(self, request: ChatRequest) -> ChatResult:
        self.calls += 1
        for pattern, reply in self._rules:
            m = pattern.search(request.user_message)
            if m is not None:
                text = reply(m, request) if callable(reply) else reply
                break
        else:
            if self._default is None:
                raise LlmError(
                    f"no rule matched user message: {request.user_message[:80]!r}"
                )
            text = self._default
        return ChatResult(
            text,
            _estimate_tokens(request.system_prompt + request.user_message),
            _estimate_tokens(text),
        )


class HttpBackend:
    """OpenAI-compatible /chat/completions over HTTP."""

    def __init__(
        self,
        endpoint: str,
        model: str = "",
        api_key: str | None = None,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        endpoint = endpoint.rstrip("/")
        if not endpoint.endswith("/chat/completions"):
            endpoint += "/chat/completions"
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self._session = session or requests.Session()
        self.calls = 0

    def complete(self, request: ChatRequest) -> ChatResult:
        self.calls += 1
        payload = {
            "model": request.model or self.model,
            "messages": request.messages(),
            "temperature": request.temperature,
            "max_tokens": request.max_new_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._session.post(
                self.endpoint, json=payload, headers=headers, timeout=self.timeout
            )
        except (requests.Timeout, requests.ConnectionError) as exc:
            raise TransientLlmError(f"transport failure: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientLlmError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code != 200:
            raise LlmError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise LlmError(f"malformed completion payload: {exc}") from exc
        usage = data.get("usage") or {}
        return ChatResult(
            text or "",
            int(usage.get("prompt_tokens", 0)),
            int(usage.get("completion_tokens", 0)),
        )


@dataclass
class LlmClient:
    """Retry loop + bookkeeping around a backend.

    Transient failures back off exponentially up to ``retry_budget``
    attempts; auth failures and malformed-payload errors propagate at once.
    ``sleep`` is injectable so tests never wait.
    """

    backend: object
    ledger: UsageLedger = field(default_factory=UsageLedger)
    retry_budget: int = 3
    backoff_base: float = 0.5
    backoff_cap: float = 30.0
    transcript_path: Path | None = None
    sleep: Callable[[float], None] = time.sleep

    def chat(self, request: ChatRequest) -> str:
        last: Exception | None = None
        for attempt in range(self.retry_budget):
            try:
                result = self.backend.complete(request)
            except TransientLlmError as exc:
                last = exc
                if attempt + 1 < self.retry_budget:
                    self.sleep(min(self.backoff_cap, self.backoff_base * 2**attempt))
                continue
            if not result.text.strip():
                raise EmptyCompletion("backend returned an empty reply")
            self.ledger.record(result.prompt_tokens, result.completion_tokens)
            self._transcribe(request, result)
            return result.text
        raise RetryBudgetExhausted(self.retry_budget, last or LlmError("no attempt ran"))

    @property
    def calls(self) -> int:
        return self.ledger.calls

    def _transcribe(self, request: ChatRequest, result: ChatResult) -> None:
        if self.transcript_path is None:
            return
        line = json.dumps(
            {
                "system": request.system_prompt,
                "user": request.user_message,
                "temperature": request.temperature,
                "max_new_tokens": request.max_new_tokens,
                "reply": result.text,
            },
            ensure_ascii=True,
            sort_keys=True,
        )
        with open(self.transcript_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
