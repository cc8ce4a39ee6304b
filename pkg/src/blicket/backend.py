"""Chat-completion backends: live HTTP, scripted (tests), record and replay."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .env import BlicketError

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


class BackendError(BlicketError):
    pass


class BackendConfigError(BackendError):
    pass


class ReplayMismatchError(BackendError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class Completion:
    text: str
    usage: dict | None = None

    @property
    def length(self) -> tuple[float, str]:
        """Response length and the unit it was measured in."""
        if self.usage and self.usage.get("completion_tokens") is not None:
            return float(self.usage["completion_tokens"]), "tokens"
        return float(len(self.text)), "chars"


class ChatBackend(Protocol):
    def complete(self, messages: list[ChatMessage]) -> Completion: ...


@dataclass
class BackendConfig:
    endpoint_url: str = "https://api.openai.com/v1"
    model_name: str = "gpt-4o-2024-08-06"
    temperature: float = 1.0
    max_output_tokens: int = 1024
    api_key_env_var: str = "OPENAI_API_KEY"
    request_timeout: float = 120.0
    max_retries: int = 5
    backoff_base: float = 1.0
    # passed through verbatim into the request body
    extra_fields: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.request_timeout <= 0:
            raise BackendConfigError("request_timeout must be positive")
        if self.max_retries < 0:
            raise BackendConfigError("max_retries must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def request_body(config: BackendConfig, messages: list[ChatMessage]) -> dict:
    body = {
        "model": config.model_name,
        "messages": [m.to_dict() for m in messages],
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
    }
    body.update(config.extra_fields)
    return body


def encode_body(body: dict) -> bytes:
    return json.dumps(body, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def request_hash(messages: list[ChatMessage]) -> str:
    payload = json.dumps([m.to_dict() for m in messages], sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


_TRANSIENT = {408, 409, 429, 500, 502, 503, 504}


class HttpBackend:
    """``POST {endpoint_url}/chat/completions`` with bearer auth and backoff."""

    def __init__(self, config: BackendConfig, client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        key = os.environ.get(config.api_key_env_var)
        if not key:
            raise BackendConfigError(
                f"environment variable {config.api_key_env_var} is not set")
        self._key = key
        self._client = client or httpx.Client(timeout=config.request_timeout)
        self._sleep = sleep

    def complete(self, messages: list[ChatMessage]) -> Completion:
        if not messages:
            raise ValueError("messages must be nonempty")
        url = self.config.endpoint_url.rstrip("/") + "/chat/completions"
        content = encode_body(request_body(self.config, messages))
        headers = {"Authorization": f"Bearer {self._key}", "Content-Type": "application/json"}
        last: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self._sleep(self.config.backoff_base * 2 ** (attempt - 1))
            try:
                resp = self._client.post(url, content=content, headers=headers,
                                         timeout=self.config.request_timeout)
            except httpx.TransportError as exc:
                last = exc
                logger.warning("request failed (%s), attempt %d", exc, attempt + 1)
                continue
            if resp.status_code in _TRANSIENT:
                last = BackendError(f"HTTP {resp.status_code}")
                logger.warning("transient HTTP %d, attempt %d", resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            data = resp.json()
            try:
                text = data["choices"][0]["message"]["content"] or ""
            except (KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"malformed response: {str(data)[:200]}") from exc
            return Completion(text, data.get("usage"))
        raise BackendError(f"giving up after {self.config.max_retries + 1} attempts") from last


Reply = str | Callable[[list[ChatMessage]], str]
Matcher = str | Callable[[list[ChatMessage]], bool] | None


@dataclass
class ScriptEntry:
    reply: Reply
    matcher: Matcher = None
    # repeating entries are never consumed
    repeat: bool = False

    def matches(self, messages: list[ChatMessage]) -> bool:
        if self.matcher is None:
            return True
        if callable(self.matcher):
            return bool(self.matcher(messages))
        return self.matcher in messages[-1].content


class ScriptedBackend:
    """Deterministic backend answering from a script.

    Each call takes the first unconsumed entry whose matcher accepts the
    request (a substring of the last message, or a predicate). Replies may be
    plain text or a function of the request.
    """

    def __init__(self, script):
        self.entries = [e if isinstance(e, ScriptEntry) else _entry(e) for e in script]
        self._used = [False] * len(self.entries)
        self._lock = threading.Lock()
        self.calls: list[list[ChatMessage]] = []

    def complete(self, messages: list[ChatMessage]) -> Completion:
        with self._lock:
            self.calls.append(list(messages))
            for i, entry in enumerate(self.entries):
                if self._used[i] or not entry.matches(messages):
                    continue
                if not entry.repeat:
                    self._used[i] = True
                reply = entry.reply(messages) if callable(entry.reply) else entry.reply
                return Completion(reply)
        raise BackendError("scripted backend has no reply left for this request")

    @property
    def remaining(self) -> int:
        return sum(1 for used, e in zip(self._used, self.entries) if not used and not e.repeat)


def _entry(item) -> ScriptEntry:
    if isinstance(item, str):
        return ScriptEntry(item)
    if isinstance(item, dict):
        return ScriptEntry(item["reply"], item.get("match"), item.get("repeat", False))
    matcher, reply = item
    return ScriptEntry(reply, matcher)


def scripted_backend(script) -> ScriptedBackend:
    return ScriptedBackend(script)


class RecordingBackend:
    """Wraps a backend and appends every exchange to a JSONL file."""

    def __init__(self, inner: ChatBackend, path: str | Path, clock: Callable[[], float] = time.time):
        self.inner = inner
        self.path = Path(path)
        self._clock = clock
        self._lock = threading.Lock()

    def complete(self, messages: list[ChatMessage]) -> Completion:
        out = self.inner.complete(messages)
        rec = {
            "request_hash": request_hash(messages),
            "messages": [m.to_dict() for m in messages],
            "reply": out.text,
            "usage": out.usage,
            "timestamp": self._clock(),
        }
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
        return out


class ReplayBackend:
    """Serves recorded replies in order, checking each request hash."""

    def __init__(self, path: str | Path):
        with Path(path).open(encoding="utf-8") as fh:
            self.records = [json.loads(line) for line in fh if line.strip()]
        self._pos = 0
        self._lock = threading.Lock()

    def complete(self, messages: list[ChatMessage]) -> Completion:
        with self._lock:
            if self._pos >= len(self.records):
                raise BackendError("recording exhausted")
            rec = self.records[self._pos]
            got = request_hash(messages)
            if rec["request_hash"] != got:
                raise ReplayMismatchError(
                    f"request {self._pos} hash {got[:12]} != recorded {rec['request_hash'][:12]}")
            self._pos += 1
            return Completion(rec["reply"], rec.get("usage"))


def load_backend(spec: dict | str | Path | None) -> ChatBackend | None:
    """Build a backend from a config document.

    ``{"kind": "http", ...BackendConfig fields}``, ``{"kind": "scripted",
    "script": [...]}`` or ``{"kind": "replay", "path": ...}``. A top-level
    ``"record"`` path wraps the backend in a recorder.
    """
    if spec is None:
        return None
    if not isinstance(spec, dict):
        spec = json.loads(Path(spec).read_text(encoding="utf-8"))
    spec = dict(spec)
    kind = spec.pop("kind", "http")
    record = spec.pop("record", None)
    if kind == "scripted":
        backend: ChatBackend = ScriptedBackend(spec["script"])
    elif kind == "replay":
        backend = ReplayBackend(spec["path"])
    elif kind == "http":
        backend = HttpBackend(BackendConfig(**spec))
    else:
        raise BackendConfigError(f"unknown backend kind {kind!r}")
    if record:
        backend = RecordingBackend(backend, record)
    return backend
