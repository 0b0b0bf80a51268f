"""Render a prompt, call the backend with bounded retries, log every attempt."""

from __future__ import annotations

import logging
import time

from .backends import Backend, CompletionRequest, LlmError
from .templates import classify_prompt, render_template
from .transcript import Transcript, TranscriptRecord

log = logging.getLogger(__name__)

MAX_TOKENS = {"ask_llm": 32, "start_from": 16, "act": 32}


class Gateway:
    """Per-episode front door to a backend.

    ``calls`` counts backend invocations (retries included) and always equals
    the number of transcript records this gateway wrote.
    """

    def __init__(
        self,
        backend: Backend,
        *,
        transcript: Transcript | None = None,
        episode: str = "",
        max_retries: int = 2,
        backoff: float = 0.0,
        temperature: float = 0.0,
    ):
        self.backend = backend
        self.transcript = transcript if transcript is not None else Transcript()
        self.episode = episode
        self.max_retries = max_retries
        self.backoff = backoff
        self.temperature = temperature
        self.calls = 0

    def ask(self, kind: str, substitutions: dict[str, str], *, stop: tuple[str, ...] = ()) -> str:
        prompt = render_template(kind, substitutions)
        request = CompletionRequest(prompt, MAX_TOKENS.get(kind, 1024), self.temperature, stop)
        return self.complete(request)

    def complete(self, request: CompletionRequest) -> str:
        kind = classify_prompt(request.prompt)
        attempt = 0
        while True:
            attempt += 1
            self.calls += 1
            try:
                result = self.backend.complete(request)
            except LlmError as exc:
                self.transcript.append(
                    TranscriptRecord(self.episode, kind, request.prompt, "", 0, 0, attempt, "error", str(exc))
                )
                if not exc.retryable or attempt > self.max_retries:
                    raise
                log.info("retrying %s call after: %s", kind, exc)
                if self.backoff:
                    time.sleep(self.backoff * attempt)
                continue
            self.transcript.append(
                TranscriptRecord(
                    self.episode,
                    kind,
                    request.prompt,
                    result.text,
                    result.prompt_tokens,
                    result.completion_tokens,
                    attempt,
                )
            )
            return result.text
