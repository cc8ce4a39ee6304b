import json
import threading

import httpx
import pytest

from blicket.backend import (BackendConfig, BackendConfigError, BackendError, ChatMessage,
                             Completion, RecordingBackend, ReplayBackend, ReplayMismatchError,
                             ScriptEntry, HttpBackend, encode_body, load_backend, request_body,
                             request_hash, scripted_backend)
from blicket.harness import TrialConfig, run_trial

MSGS = [ChatMessage("system", "sys"), ChatMessage("user", "hello")]


def _ok(text="> exit", usage=None):
    body = {"choices": [{"message": {"role": "assistant", "content": text}}]}
    if usage:
        body["usage"] = usage
    return httpx.Response(200, json=body)


def test_message_roles():
    with pytest.raises(ValueError):
        ChatMessage("tool", "x")


def test_config_invariants():
    with pytest.raises(BackendConfigError):
        BackendConfig(request_timeout=0)
    with pytest.raises(BackendConfigError):
        BackendConfig(max_retries=-1)


def test_wire_format(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "sk-test")
    seen = []

    def handler(request: httpx.Request):
        seen.append(request)
        return _ok("> put object 1 on machine", {"completion_tokens": 7})

    cfg = BackendConfig(endpoint_url="http://llm.local/v1/", model_name="m", temperature=0.5,
                        max_output_tokens=64, api_key_env_var="TEST_KEY",
                        extra_fields={"seed": 3})
    be = HttpBackend(cfg, client=httpx.Client(transport=httpx.MockTransport(handler)))
    out = be.complete(MSGS)
    assert out.text == "> put object 1 on machine"
    assert out.length == (7.0, "tokens")
    req = seen[0]
    assert req.method == "POST"
    assert str(req.url) == "http://llm.local/v1/chat/completions"
    assert req.headers["authorization"] == "Bearer sk-test"
    body = json.loads(req.content)
    assert body == {"model": "m", "messages": [{"role": "system", "content": "sys"},
                                              {"role": "user", "content": "hello"}],
                    "temperature": 0.5, "max_tokens": 64, "seed": 3}
    # byte-stable serialisation
    assert req.content == encode_body(request_body(cfg, MSGS))
    assert encode_body(request_body(cfg, MSGS)) == encode_body(request_body(cfg, list(MSGS)))


def test_missing_credential_before_network(monkeypatch):
    monkeypatch.delenv("NOPE_KEY", raising=False)
    calls = []
    transport = httpx.MockTransport(lambda r: calls.append(r) or _ok())
    with pytest.raises(BackendConfigError):
        HttpBackend(BackendConfig(api_key_env_var="NOPE_KEY"),
                    client=httpx.Client(transport=transport))
    assert calls == []


def test_retries_transient_then_succeeds(monkeypatch):
    monkeypatch.setenv("K", "x")
    statuses = iter([429, 503])
    sleeps = []

    def handler(request):
        s = next(statuses, None)
        if s is None:
            return _ok("fine")
        return httpx.Response(s, json={})

    be = HttpBackend(BackendConfig(api_key_env_var="K", max_retries=3, backoff_base=0.5),
                     client=httpx.Client(transport=httpx.MockTransport(handler)),
                     sleep=sleeps.append)
    assert be.complete(MSGS).text == "fine"
    assert sleeps == [0.5, 1.0]


def test_retries_transport_errors_and_gives_up(monkeypatch):
    monkeypatch.setenv("K", "x")
    n = []

    def handler(request):
        n.append(1)
        raise httpx.ConnectError("down", request=request)

    be = HttpBackend(BackendConfig(api_key_env_var="K", max_retries=2),
                     client=httpx.Client(transport=httpx.MockTransport(handler)),
                     sleep=lambda s: None)
    with pytest.raises(BackendError):
        be.complete(MSGS)
    assert len(n) == 3


def test_non_transient_error_not_retried(monkeypatch):
    monkeypatch.setenv("K", "x")
    n = []
    be = HttpBackend(BackendConfig(api_key_env_var="K", max_retries=4),
                     client=httpx.Client(transport=httpx.MockTransport(
                         lambda r: n.append(1) or httpx.Response(401, text="bad key"))),
                     sleep=lambda s: None)
    with pytest.raises(BackendError):
        be.complete(MSGS)
    assert len(n) == 1


def test_completion_length_falls_back_to_chars():
    assert Completion("abcd").length == (4.0, "chars")


# ------------------------------------------------------------------ scripted

def test_scripted_queue():
    be = scripted_backend(["> exit"])
    assert be.complete(MSGS).text == "> exit"
    with pytest.raises(BackendError):
        be.complete(MSGS)


def test_scripted_empty_errors():
    with pytest.raises(BackendError):
        scripted_backend([]).complete(MSGS)


def test_scripted_predicate_routing():
    be = scripted_backend([ScriptEntry("> True", "Is object", repeat=True),
                           ScriptEntry("> look")])
    assert be.complete([ChatMessage("user", "Is object 0 a blicket?")]).text == "> True"
    assert be.complete([ChatMessage("user", "Is object 1 a blicket?")]).text == "> True"
    assert be.complete([ChatMessage("user", "act")]).text == "> look"
    assert be.remaining == 0


def test_scripted_callable_reply_and_dict_entries():
    be = load_backend({"kind": "scripted", "script": [
        {"match": "ping", "reply": "pong"}, "fallback"]})
    assert be.complete([ChatMessage("user", "x")]).text == "fallback"
    assert be.complete([ChatMessage("user", "ping")]).text == "pong"
    be2 = scripted_backend([ScriptEntry(lambda m: m[-1].content.upper())])
    assert be2.complete([ChatMessage("user", "abc")]).text == "ABC"


def test_scripted_thread_safe():
    be = scripted_backend([str(i) for i in range(200)])
    out = []

    def worker():
        for _ in range(50):
            out.append(be.complete(MSGS).text)

    ts = [threading.Thread(target=worker) for _ in range(4)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert sorted(out, key=int) == [str(i) for i in range(200)]


# ------------------------------------------------------------------ record / replay

def test_record_then_replay(tmp_path):
    path = tmp_path / "rec.jsonl"
    rec = RecordingBackend(scripted_backend(["a", "b"]), path, clock=lambda: 0.0)
    rec.complete(MSGS)
    rec.complete(MSGS[:1])
    lines = [json.loads(x) for x in path.read_text().splitlines()]
    assert set(lines[0]) == {"request_hash", "messages", "reply", "usage", "timestamp"}
    assert lines[0]["request_hash"] == request_hash(MSGS)
    rp = ReplayBackend(path)
    assert rp.complete(MSGS).text == "a"
    assert rp.complete(MSGS[:1]).text == "b"
    with pytest.raises(BackendError):
        rp.complete(MSGS)


def test_replay_mismatch(tmp_path):
    path = tmp_path / "rec.jsonl"
    RecordingBackend(scripted_backend(["a"]), path).complete(MSGS)
    with pytest.raises(ReplayMismatchError):
        ReplayBackend(path).complete([ChatMessage("user", "different")])


def test_recorded_trial_replays_identically(tmp_path):
    path = tmp_path / "session.jsonl"
    script = [{"match": "Is object", "reply": "> False", "repeat": True},
              "> put object 0 on machine", "> take object 0 off machine", "> exit"]
    cfg = TrialConfig(num_objects=3, agent_kind="chat", seed=5)
    live = run_trial(cfg, load_backend({"kind": "scripted", "script": script, "record": str(path)}))
    replayed = run_trial(cfg, load_backend({"kind": "replay", "path": str(path)}))
    assert live.to_json() == replayed.to_json()


def test_load_backend_unknown_kind():
    with pytest.raises(BackendConfigError):
        load_backend({"kind": "carrier-pigeon"})
    assert load_backend(None) is None
