"""Append-only record of every model call."""

from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass
from pathlib import Path


@dataclass(frozen=True)
class TranscriptRecord:
    episode: str
    kind: str
    prompt: str
    response: str
    prompt_tokens: int
    completion_tokens: int
    attempt: int = 1
    status: str = "ok"
    error: str | None = None


class Transcript:
    """Thread-safe in-memory log, optionally mirrored to a JSONL file."""

    def __init__(self, path: str | Path | None = None):
        self._records: list[TranscriptRecord] = []
        self._lock = threading.Lock()
        self.path = Path(path) if path else None

    def append(self, record: TranscriptRecord) -> None:
        with self._lock:
            self._records.append(record)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(asdict(record), sort_keys=True) + "\n")

    @property
    def records(self) -> list[TranscriptRecord]:
        with self._lock:
            return list(self._records)

    def for_episode(self, episode: str) -> list[TranscriptRecord]:
        return [r for r in self.records if r.episode == episode]

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    @staticmethod
    def load(path: str | Path) -> list[TranscriptRecord]:
        with open(path, encoding="utf-8") as fh:
            return [TranscriptRecord(**json.loads(line)) for line in fh if line.strip()]
