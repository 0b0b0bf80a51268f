"""Completion backends: a scripted test double and an HTTP client."""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, Union

import requests

from .templates import KINDS, classify_prompt, strip_sentinel

FIXTURE_SEPARATOR = "====="
DEFAULT_FIXTURE_DIR = "_default"


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_tokens: int = 1024
    temperature: float = 0.0
    stop: tuple[str, ...] = ()

    def __post_init__(self):
        if self.max_tokens < 0:
            raise ValueError("max_tokens must be non-negative")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


class LlmError(RuntimeError):
    retryable = False


class TransientLlmError(LlmError):
    retryable = True


class FatalLlmError(LlmError):
    retryable = False


class QueueExhausted(FatalLlmError):
    def __init__(self, kind: str):
        super().__init__(f"no scripted response left for prompt kind '{kind}'")
        self.kind = kind


class Backend(Protocol):
    def complete(self, request: CompletionRequest) -> Completion: ...


def rough_tokens(text: str) -> int:
    return len(text.split())


# A queued item is literal text, a callable on the prompt, or a conditional
# {"if_prompt_contains": marker, "then": text, "else": text}.
ScriptItem = Union[str, Callable[[str], str], dict]


def _resolve(item: ScriptItem, prompt: str) -> str:
    if callable(item):
        return item(prompt)
    if isinstance(item, dict):
        branch = "then" if item["if_prompt_contains"] in prompt else "else"
        return _resolve(item.get(branch, ""), prompt)
    return item


class ScriptedBackend:
    """Replays canned responses, one queue per prompt kind.

    Strict mode turns an unplanned call into ``QueueExhausted`` so tests fail
    loudly instead of silently receiving an empty answer.
    """

    def __init__(self, queues: dict[str, list[ScriptItem]] | None = None, strict: bool = True):
        self.queues: dict[str, list[ScriptItem]] = {k: list(v) for k, v in (queues or {}).items()}
        self.strict = strict
        self._lock = threading.Lock()

    def push(self, kind: str, *items: ScriptItem) -> None:
        with self._lock:
            self.queues.setdefault(kind, []).extend(items)

    def remaining(self, kind: str) -> int:
        return len(self.queues.get(kind, []))

    def complete(self, request: CompletionRequest) -> Completion:
        kind = classify_prompt(request.prompt)
        with self._lock:
            queue = self.queues.get(kind)
            if not queue:
                if self.strict:
                    raise QueueExhausted(kind)
                item: ScriptItem = ""
            else:
                item = queue.pop(0)
        text = _resolve(item, request.prompt)
        return Completion(text, rough_tokens(request.prompt), rough_tokens(text))

    @classmethod
    def from_dir(cls, root: str | Path, task_id: str, strict: bool = True) -> "ScriptedBackend":
        """Load ``<root>/<task_id>/<kind>.txt|.json``, falling back to ``<root>/_default``.

        Text files hold responses separated by a line of ``=====``; JSON files
        hold a list of items (strings or conditionals).
        """
        root = Path(root)
        queues: dict[str, list[ScriptItem]] = {}
        for kind in KINDS:
            for folder in (root / task_id, root / DEFAULT_FIXTURE_DIR):
                items = _read_fixture(folder, kind)
                if items is not None:
                    queues[kind] = items
                    break
        return cls(queues, strict=strict)


def _read_fixture(folder: Path, kind: str) -> list[ScriptItem] | None:
    js = folder / f"{kind}.json"
    if js.is_file():
        data = json.loads(js.read_text(encoding="utf-8"))
        if not isinstance(data, list):
            raise ValueError(f"{js}: expected a JSON list")
        return data
    txt = folder / f"{kind}.txt"
    if txt.is_file():
        return split_fixture(txt.read_text(encoding="utf-8"))
    return None


def split_fixture(text: str) -> list[str]:
    chunks, current = [], []
    for line in text.splitlines(keepends=True):
        if line.rstrip("\r\n") == FIXTURE_SEPARATOR:
            chunks.append("".join(current))
            current = []
        else:
            current.append(line)
    chunks.append("".join(current))
    return [c.strip("\n") for c in chunks if c.strip()]


def join_fixture(items: list[str]) -> str:
    return f"\n{FIXTURE_SEPARATOR}\n".join(items) + "\n"


@dataclass
class RemoteBackend:
    """OpenAI-style ``/v1/completions`` client.

    One ``complete`` call is one HTTP attempt; retries are the gateway's job so
    that every attempt lands in the transcript.
    """

    base_url: str
    model: str
    api_key: str | None = None
    timeout: float = 30.0
    session: Any = field(default=None, repr=False)

    @classmethod
    def from_env(cls, environ: dict | None = None, **overrides) -> "RemoteBackend":
        env = os.environ if environ is None else environ
        base = overrides.pop("base_url", None) or env.get("CLOSEDLOOP_API_BASE")
        if not base:
            raise FatalLlmError("CLOSEDLOOP_API_BASE is not set")
        return cls(
            base_url=base,
            model=overrides.pop("model", None) or env.get("CLOSEDLOOP_MODEL", "default"),
            api_key=overrides.pop("api_key", None) or env.get("CLOSEDLOOP_API_KEY"),
            **overrides,
        )

    def complete(self, request: CompletionRequest) -> Completion:
        payload = {
            "model": self.model,
            "prompt": strip_sentinel(request.prompt),
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        if request.stop:
            payload["stop"] = list(request.stop)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        http = self.session or requests
        url = self.base_url.rstrip("/") + "/v1/completions"
        try:
            resp = http.post(url, json=payload, headers=headers, timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientLlmError(f"transport error: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientLlmError(f"provider returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise FatalLlmError(f"provider returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            text = body["choices"][0]["text"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise FatalLlmError(f"malformed provider response: {exc}") from exc
        usage = body.get("usage") or {}
        return Completion(
            text,
            int(usage.get("prompt_tokens", rough_tokens(payload["prompt"]))),
            int(usage.get("completion_tokens", rough_tokens(text))),
        )
