"""Client retry behaviour, mock backends, HTTP adapter, usage ledger."""

import json

import pytest
import requests

from latexmt.errors import (
    AuthError,
    EmptyCompletion,
    LlmError,
    RetryBudgetExhausted,
    ScriptExhausted,
    TransientLlmError,
)
from latexmt.llm import (
    ChatRequest,
    ChatResult,
    EchoBackend,
    HttpBackend,
    LlmClient,
    RuleBackend,
    ScriptedBackend,
    UsageLedger,
)


def req(user="hello", system="sys"):
    return ChatRequest(system_prompt=system, user_message=user)


def client_for(backend, **kwargs):
    kwargs.setdefault("sleep", lambda _s: None)
    return LlmClient(backend, UsageLedger(), **kwargs)


# --------------------------------------------------------------------------
# backends


def test_echo_backend_returns_user_message():
    client = client_for(EchoBackend())
    assert client.chat(req("round and round")) == "round and round"


def test_scripted_backend_replays_in_order():
    backend = ScriptedBackend(["one", "two"])
    client = client_for(backend)
    assert client.chat(req()) == "one"
    assert client.chat(req()) == "two"
    assert backend.remaining == 0


def test_scripted_backend_runs_dry_loudly():
    client = client_for(ScriptedBackend(["only"]))
    client.chat(req())
    with pytest.raises(ScriptExhausted):
        client.chat(req())


def test_scripted_backend_from_json_array(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps(["a", "b"]), encoding="utf-8")
    backend = ScriptedBackend.from_file(path)
    assert backend.remaining == 2


def test_scripted_backend_from_jsonl(tmp_path):
    path = tmp_path / "script.jsonl"
    path.write_text('{"reply": "a"}\n\n{"reply": "b"}\n', encoding="utf-8")
    backend = ScriptedBackend.from_file(path)
    client = client_for(backend)
    assert client.chat(req()) == "a"
    assert client.chat(req()) == "b"


def test_rule_backend_first_match_wins():
    backend = RuleBackend(
        [
            (r"\[Error Reports\]", "fixed"),
            (r"begin", "True"),
        ],
        default="fallback",
    )
    client = client_for(backend)
    assert client.chat(req("\\begin{x}")) == "True"
    assert client.chat(req("[Error Reports]\n- stuff")) == "fixed"
    assert client.chat(req("nothing matches")) == "fallback"


def test_rule_backend_callable_reply():
    backend = RuleBackend([(r"name: (\w+)", lambda m, r: f"hi {m.group(1)}")])
    client = client_for(backend)
    assert client.chat(req("name: ada")) == "hi ada"


def test_rule_backend_without_default_raises():
    client = client_for(RuleBackend([(r"never", "x")]))
    with pytest.raises(LlmError):
        client.chat(req("unmatched"))


# --------------------------------------------------------------------------
# retry loop


class FlakyBackend:
    """Fails transiently n times, then succeeds."""

    def __init__(self, failures, reply="ok"):
        self.failures = failures
        self.reply = reply
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransientLlmError("temporarily down")
        return ChatResult(self.reply, 1, 1)


def test_transient_failures_retried_with_backoff():
    naps = []
    backend = FlakyBackend(2)
    client = LlmClient(
        backend, UsageLedger(), retry_budget=3, backoff_base=0.5, sleep=naps.append
    )
    assert client.chat(req()) == "ok"
    assert backend.calls == 3
    assert naps == [0.5, 1.0]  # exponential: base * 2**attempt


def test_backoff_is_capped():
    naps = []
    backend = FlakyBackend(4)
    client = LlmClient(
        backend,
        UsageLedger(),
        retry_budget=5,
        backoff_base=10.0,
        backoff_cap=15.0,
        sleep=naps.append,
    )
    client.chat(req())
    assert naps == [10.0, 15.0, 15.0, 15.0]


def test_retry_budget_exhausted():
    backend = FlakyBackend(99)
    client = client_for(backend, retry_budget=3)
    with pytest.raises(RetryBudgetExhausted):
        client.chat(req())
    assert backend.calls == 3
    assert client.calls == 0  # nothing ever succeeded


class RefusingBackend:
    def complete(self, request):
        raise AuthError("bad key")


def test_auth_errors_never_retried():
    client = client_for(RefusingBackend())
    with pytest.raises(AuthError):
        client.chat(req())


def test_empty_reply_raises():
    client = client_for(ScriptedBackend(["   \n"]))
    with pytest.raises(EmptyCompletion):
        client.chat(req())


# --------------------------------------------------------------------------
# ledger and transcript


def test_ledger_totals_and_cost():
    ledger = UsageLedger(prompt_token_price=0.001, completion_token_price=0.002)
    ledger.record(100, 50)
    ledger.record(10, 5)
    assert ledger.calls == 2
    assert ledger.total_prompt_tokens == 110
    assert ledger.total_completion_tokens == 55
    assert ledger.total_cost == pytest.approx(0.001 * 110 + 0.002 * 55)
    summary = ledger.summary()
    assert summary["calls"] == 2
    assert summary["prompt_tokens"] == 110


def test_client_records_usage_per_successful_call():
    client = client_for(EchoBackend())
    client.chat(req("x" * 40))
    assert client.calls == 1
    assert client.ledger.total_completion_tokens == 10  # 40 chars // 4


def test_transcript_written_as_jsonl(tmp_path):
    path = tmp_path / "transcript.jsonl"
    client = client_for(ScriptedBackend(["alpha", "beta"]), transcript_path=path)
    client.chat(req("first"))
    client.chat(req("second"))
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert [entry["reply"] for entry in lines] == ["alpha", "beta"]
    assert lines[0]["user"] == "first"


# --------------------------------------------------------------------------
# HTTP adapter (no sockets: a duck-typed session)


class FakeResponse:
    def __init__(self, status_code, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text or (json.dumps(payload) if payload is not None else "")

    def json(self):
        if self._payload is None:
            raise ValueError("not json")
        return self._payload


class FakeSession:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append(
            {"url": url, "json": json, "headers": headers, "timeout": timeout}
        )
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def ok_payload(text="bonjour"):
    return {
        "choices": [{"message": {"content": text}}],
        "usage": {"prompt_tokens": 7, "completion_tokens": 3},
    }


def test_http_backend_happy_path():
    session = FakeSession([FakeResponse(200, ok_payload())])
    backend = HttpBackend(
        "http://host:8000/v1", model="m1", api_key="sk-test", session=session
    )
    result = backend.complete(req("hi"))
    assert result.text == "bonjour"
    assert result.prompt_tokens == 7
    sent = session.requests[0]
    assert sent["url"] == "http://host:8000/v1/chat/completions"
    assert sent["headers"]["Authorization"] == "Bearer sk-test"
    assert sent["json"]["model"] == "m1"
    assert [m["role"] for m in sent["json"]["messages"]] == ["system", "user"]


def test_http_backend_endpoint_suffix_not_doubled():
    backend = HttpBackend("http://host/v1/chat/completions", session=FakeSession([]))
    assert backend.endpoint == "http://host/v1/chat/completions"


def test_http_backend_auth_failure():
    backend = HttpBackend("http://h", session=FakeSession([FakeResponse(401)]))
    with pytest.raises(AuthError):
        backend.complete(req())


@pytest.mark.parametrize("status", [429, 500, 503])
def test_http_backend_transient_statuses(status):
    backend = HttpBackend("http://h", session=FakeSession([FakeResponse(status)]))
    with pytest.raises(TransientLlmError):
        backend.complete(req())


def test_http_backend_transport_errors_are_transient():
    session = FakeSession([requests.ConnectionError("refused")])
    backend = HttpBackend("http://h", session=session)
    with pytest.raises(TransientLlmError):
        backend.complete(req())


def test_http_backend_malformed_payload():
    session = FakeSession([FakeResponse(200, {"surprise": True})])
    backend = HttpBackend("http://h", session=session)
    with pytest.raises(LlmError):
        backend.complete(req())


def test_client_retries_http_transients_end_to_end():
    session = FakeSession([FakeResponse(429), FakeResponse(200, ok_payload("done"))])
    backend = HttpBackend("http://h", session=session)
    client = client_for(backend, retry_budget=2)
    assert client.chat(req()) == "done"
    assert len(session.requests) == 2
