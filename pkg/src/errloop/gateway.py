"""Uniform chat-completion interface over real endpoints and scripted mocks.

A ``ModelHandle`` names a model in one of its two pipeline roles (target or
instructor) plus its endpoint and decoding settings. Endpoints:

* ``https://...`` / ``http://...`` — de-facto chat-completions HTTP shape:
  messages array in, ``choices[0].message.content`` out. Credentials come
  from the ``ERRLOOP_API_KEY`` (or ``OPENAI_API_KEY``) environment variable.
* ``mock:<path>`` — declarative script file: ordered JSONL rules
  ``{match_kind, pattern, response}`` where ``match_kind`` is ``substring``,
  ``regex``, or ``any`` and matchers run over the rendered prompt
  (``role: content`` lines joined by newlines). The first matching rule
  wins. Responses may use ``<<last_user>>`` (content of the last user
  message), ``<<prompt_digest>>`` (12-hex digest of the rendered prompt),
  and, for regex rules, backreferences expanded with ``match.expand``.
  An optional ``delay_ms`` sleeps before responding (test aid for
  concurrency ordering). Scripts are pure functions of the message list;
  a rescripted backend must use a new path.

Greedy (temperature 0) requests are served from a persistent on-disk cache
keyed by a digest of (endpoint, model, decoding, messages); sampled
requests bypass the cache by default so nondeterministic synthesis is never
frozen accidentally.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import requests

log = logging.getLogger(__name__)

DEFAULT_MAX_ATTEMPTS = 5
DEFAULT_CONCURRENCY = 8
DEFAULT_CONTEXT_BUDGET_CHARS = 16_000
GREEDY_MAX_TOKENS = 2048

API_KEY_ENV_VARS = ("ERRLOOP_API_KEY", "OPENAI_API_KEY")


class GatewayError(Exception):
    """Base class for completion failures."""


class PromptTooLongError(GatewayError):
    """Prompt exceeded the configured context budget; nothing was sent."""


class InvalidMessagesError(GatewayError):
    """Malformed message list (empty, wrong last role, empty content)."""


class MockMissError(GatewayError):
    """A mock script had no rule for the rendered prompt (test aid)."""


class RequestFailedError(GatewayError):
    """All retry attempts exhausted; carries the last status/error."""

    def __init__(self, message: str, attempts: int, last_status: Optional[int] = None):
        super().__init__(message)
        self.attempts = attempts
        self.last_status = last_status


@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.0
    max_tokens: int = GREEDY_MAX_TOKENS


GREEDY = Decoding()


@dataclass(frozen=True)
class ModelHandle:
    role: str  # target | instructor
    endpoint: str  # URL or "mock:<path>"
    model_name: str
    decoding: Decoding = GREEDY

    def with_endpoint(self, endpoint: str, model_name: str | None = None) -> "ModelHandle":
        return ModelHandle(
            role=self.role,
            endpoint=endpoint,
            model_name=model_name or self.model_name,
            decoding=self.decoding,
        )

    def with_decoding(self, temperature: float, max_tokens: int | None = None) -> "ModelHandle":
        return ModelHandle(
            role=self.role,
            endpoint=self.endpoint,
            model_name=self.model_name,
            decoding=Decoding(temperature, max_tokens or self.decoding.max_tokens),
        )


@dataclass
class ChatExchange:
    messages: list[dict]
    response: str
    cache_hit: bool = False
    attempt_count: int = 1


def render_prompt(messages: Sequence[dict]) -> str:
    return "\n".join(f"{m['role']}: {m['content']}" for m in messages)


def user(content: str) -> dict:
    return {"role": "user", "content": content}


def assistant(content: str) -> dict:
    return {"role": "assistant", "content": content}


def system(content: str) -> dict:
    return {"role": "system", "content": content}


@dataclass
class MockRule:
    match_kind: str  # substring | regex | any
    response: str
    pattern: str = ""
    delay_ms: int = 0


class MockScript:
    """Ordered (matcher -> response) rules loaded from a JSONL file."""

    def __init__(self, rules: list[MockRule], name: str = "<memory>"):
        self.rules = rules
        self.name = name
        self._compiled = [
            re.compile(r.pattern, re.DOTALL) if r.match_kind == "regex" else None
            for r in rules
        ]
        self.has_delays = any(r.delay_ms > 0 for r in rules)

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        rules = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                kind = obj.get("match_kind", "substring")
                if kind not in ("substring", "regex", "any"):
                    raise ValueError(f"{path}:{lineno}: bad match_kind {kind!r}")
                rules.append(
                    MockRule(
                        match_kind=kind,
                        pattern=obj.get("pattern", ""),
                        response=obj["response"],
                        delay_ms=int(obj.get("delay_ms", 0)),
                    )
                )
        return cls(rules, name=str(path))

    def respond(self, messages: Sequence[dict]) -> str:
        rendered = render_prompt(messages)
        for rule, compiled in zip(self.rules, self._compiled):
            text: Optional[str] = None
            if rule.match_kind == "any":
                text = rule.response
            elif rule.match_kind == "substring":
                if rule.pattern in rendered:
                    text = rule.response
            else:
                m = compiled.search(rendered)
                if m is not None:
                    text = m.expand(rule.response)
            if text is None:
                continue
            if rule.delay_ms:
                time.sleep(rule.delay_ms / 1000.0)
            if "<<last_user>>" in text:
                last_user = next(
                    (m["content"] for m in reversed(messages) if m["role"] == "user"), ""
                )
                text = text.replace("<<last_user>>", last_user)
            if "<<prompt_digest>>" in text:
                digest = hashlib.sha256(rendered.encode("utf-8")).hexdigest()[:12]
                text = text.replace("<<prompt_digest>>", digest)
            return text
        raise MockMissError(
            f"mock script {self.name} has no rule for prompt starting "
            f"{rendered[:120]!r}"
        )


def write_mock_script(path: str | Path, rules: Sequence[dict]) -> Path:
    """Write a mock script file from plain rule dicts (test helper)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rule in rules:
            fh.write(json.dumps(rule, ensure_ascii=False))
            fh.write("\n")
    return path


Transport = Callable[[ModelHandle, Sequence[dict]], str]


class Gateway:
    """Chat-completion front door with caching, retry, and bounded fan-out."""

    def __init__(
        self,
        cache_dir: str | Path | None = None,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        concurrency: int = DEFAULT_CONCURRENCY,
        context_budget_chars: int = DEFAULT_CONTEXT_BUDGET_CHARS,
        cache_sampled: bool = False,
        backoff_base: float = 0.5,
        http_transport: Transport | None = None,
        timeout: float = 120.0,
    ):
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.max_attempts = max_attempts
        self.concurrency = max(1, concurrency)
        self.context_budget_chars = context_budget_chars
        self.cache_sampled = cache_sampled
        self.backoff_base = backoff_base
        self.timeout = timeout
        self._http_transport = http_transport or self._http_request
        self._scripts: dict[str, MockScript] = {}

    # -- request plumbing ---------------------------------------------------

    def _validate(self, messages: Sequence[dict]) -> None:
        if not messages:
            raise InvalidMessagesError("message list is empty")
        for m in messages:
            if m.get("role") not in ("system", "user", "assistant"):
                raise InvalidMessagesError(f"bad message role {m.get('role')!r}")
            if not isinstance(m.get("content"), str) or not m["content"]:
                raise InvalidMessagesError("message content must be a non-empty string")
        if messages[-1]["role"] != "user":
            raise InvalidMessagesError("last message must have role 'user'")
        total = sum(len(m["content"]) for m in messages)
        if total > self.context_budget_chars:
            raise PromptTooLongError(
                f"prompt is {total} chars; budget is {self.context_budget_chars}"
            )

    def _cache_key(self, handle: ModelHandle, messages: Sequence[dict]) -> str:
        payload = json.dumps(
            {
                "endpoint": handle.endpoint,
                "model": handle.model_name,
                "temperature": handle.decoding.temperature,
                "max_tokens": handle.decoding.max_tokens,
                "messages": list(messages),
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def _cache_path(self, key: str) -> Path:
        assert self.cache_dir is not None
        return self.cache_dir / f"{key}.json"

    def _cacheable(self, handle: ModelHandle) -> bool:
        if self.cache_dir is None:
            return False
        return handle.decoding.temperature == 0 or self.cache_sampled

    def _script(self, endpoint: str) -> MockScript:
        path = endpoint[len("mock:"):]
        script = self._scripts.get(path)
        if script is None:
            script = MockScript.from_file(path)
            self._scripts[path] = script
        return script

    def _http_request(self, handle: ModelHandle, messages: Sequence[dict]) -> str:
        url = handle.endpoint
        if not url.rstrip("/").endswith("chat/completions"):
            url = url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        for var in API_KEY_ENV_VARS:
            key = os.environ.get(var, "").strip()
            if key:
                headers["Authorization"] = f"Bearer {key}"
                break
        resp = requests.post(
            url,
            headers=headers,
            json={
                "model": handle.model_name,
                "messages": list(messages),
                "temperature": handle.decoding.temperature,
                "max_tokens": handle.decoding.max_tokens,
            },
            timeout=self.timeout,
        )
        if resp.status_code in (429,) or resp.status_code >= 500:
            raise _TransientHTTPError(resp.status_code, resp.text[:200])
        resp.raise_for_status()
        body = resp.json()
        return body["choices"][0]["message"]["content"]

    # -- public surface -----------------------------------------------------

    def complete(self, handle: ModelHandle, messages: Sequence[dict]) -> ChatExchange:
        """One chat completion with validation, caching, and retry."""
        messages = [dict(m) for m in messages]
        self._validate(messages)

        cacheable = self._cacheable(handle)
        key = self._cache_key(handle, messages) if cacheable else None
        if key is not None:
            cached = self._cache_read(key)
            if cached is not None:
                return ChatExchange(messages=messages, response=cached, cache_hit=True)

        if handle.endpoint.startswith("mock:"):
            response = self._script(handle.endpoint).respond(messages)
            attempts = 1
        else:
            response, attempts = self._complete_with_retry(handle, messages)

        if key is not None:
            self._cache_write(key, handle, messages, response)
        return ChatExchange(messages=messages, response=response, attempt_count=attempts)

    def _complete_with_retry(
        self, handle: ModelHandle, messages: Sequence[dict]
    ) -> tuple[str, int]:
        last_exc: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                return self._http_transport(handle, messages), attempt
            except (_TransientHTTPError, requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
                if attempt < self.max_attempts:
                    delay = self.backoff_base * (2 ** (attempt - 1))
                    log.warning(
                        "transient failure from %s (attempt %d/%d): %s; retrying in %.1fs",
                        handle.endpoint, attempt, self.max_attempts, exc, delay,
                    )
                    time.sleep(delay)
        status = getattr(last_exc, "status", None)
        raise RequestFailedError(
            f"request to {handle.endpoint} failed after {self.max_attempts} attempts: {last_exc}",
            attempts=self.max_attempts,
            last_status=status,
        )

    def complete_many(
        self, handle: ModelHandle, requests_: Sequence[Sequence[dict]]
    ) -> list[ChatExchange | GatewayError]:
        """Complete many requests; results are in input order, failures per-slot."""
        if not requests_:
            return []

        def one(msgs: Sequence[dict]) -> ChatExchange | GatewayError:
            try:
                return self.complete(handle, msgs)
            except GatewayError as exc:
                return exc

        if not self._needs_threads(handle):
            return [one(msgs) for msgs in requests_]
        results: list[ChatExchange | GatewayError] = [None] * len(requests_)  # type: ignore[list-item]
        with ThreadPoolExecutor(max_workers=self.concurrency) as pool:
            futures = {pool.submit(one, msgs): i for i, msgs in enumerate(requests_)}
            for fut, i in futures.items():
                results[i] = fut.result()
        return results

    def _needs_threads(self, handle: ModelHandle) -> bool:
        # A pure mock without delays is CPU-bound and deterministic; fanning it
        # out through a thread pool only adds overhead.
        if self.concurrency <= 1:
            return False
        if not handle.endpoint.startswith("mock:"):
            return True
        return self._script(handle.endpoint).has_delays

    # -- cache --------------------------------------------------------------

    def _cache_read(self, key: str) -> Optional[str]:
        path = self._cache_path(key)
        try:
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)["response"]
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, KeyError):
            log.warning("discarding corrupt cache entry %s", path)
            return None

    def _cache_write(
        self, key: str, handle: ModelHandle, messages: Sequence[dict], response: str
    ) -> None:
        path = self._cache_path(key)
        payload = {
            "endpoint": handle.endpoint,
            "model": handle.model_name,
            "temperature": handle.decoding.temperature,
            "max_tokens": handle.decoding.max_tokens,
            "messages": list(messages),
            "response": response,
        }
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".cache", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, ensure_ascii=False)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


class _TransientHTTPError(Exception):
    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body}")
        self.status = status
