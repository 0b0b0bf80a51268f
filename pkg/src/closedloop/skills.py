"""Skill discovery: keep successful final plans that measurably help."""

from __future__ import annotations

import enum
import json
import threading
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable

from .env import TaskInstance
from .llm import load_sample
from .plan import render_plan

SKILL_HEADER = "# Skill: "
SAMPLE_HEADER = "# Expert sample: "


class SkillStatus(str, enum.Enum):
    CANDIDATE = "candidate"
    ARCHIVED = "archived"
    DISCARDED = "discarded"


@dataclass(frozen=True)
class SkillEval:
    success_rate_without: Fraction
    success_rate_with: Fraction
    eval_tasks: tuple[str, ...]


@dataclass(frozen=True)
class SkillRecord:
    signature: str
    solution: str
    episode_id: str
    seed: int
    env_actions: int = 0
    eval: SkillEval | None = None
    status: SkillStatus = SkillStatus.CANDIDATE

    def exemplar(self) -> str:
        return f"{SKILL_HEADER}{self.signature}\n{self.solution}"

    def to_dict(self) -> dict:
        data = {
            "signature": self.signature,
            "solution": self.solution,
            "episode_id": self.episode_id,
            "seed": self.seed,
            "env_actions": self.env_actions,
            "status": self.status.value,
            "eval": None,
        }
        if self.eval is not None:
            data["eval"] = {
                "success_rate_without": str(self.eval.success_rate_without),
                "success_rate_with": str(self.eval.success_rate_with),
                "eval_tasks": list(self.eval.eval_tasks),
            }
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SkillRecord":
        ev = data.get("eval")
        return cls(
            signature=data["signature"],
            solution=data["solution"],
            episode_id=data["episode_id"],
            seed=int(data["seed"]),
            env_actions=int(data.get("env_actions", 0)),
            eval=None
            if ev is None
            else SkillEval(
                Fraction(ev["success_rate_without"]),
                Fraction(ev["success_rate_with"]),
                tuple(ev["eval_tasks"]),
            ),
            status=SkillStatus(data["status"]),
        )


class CorruptStoreError(ValueError):
    def __init__(self, index: int, reason: str):
        super().__init__(f"skill store record {index} is unreadable: {reason}")
        self.index = index


class SkillStore:
    """Records in insertion order; at most one archived record per signature."""

    def __init__(self, records: Iterable[SkillRecord] = ()):
        self._records: list[SkillRecord] = []
        self._lock = threading.Lock()
        for record in records:
            self.add(record)

    @property
    def records(self) -> list[SkillRecord]:
        with self._lock:
            return list(self._records)

    def add(self, record: SkillRecord) -> None:
        with self._lock:
            if record.status is SkillStatus.ARCHIVED:
                # newest archived record for a signature wins
                self._records = [
                    r
                    for r in self._records
                    if not (r.status is SkillStatus.ARCHIVED and r.signature == record.signature)
                ]
            self._records.append(record)

    def archived(self, signature: str) -> SkillRecord | None:
        with self._lock:
            for r in reversed(self._records):
                if r.status is SkillStatus.ARCHIVED and r.signature == signature:
                    return r
        return None

    def __eq__(self, other) -> bool:
        return isinstance(other, SkillStore) and self.records == other.records

    def __len__(self) -> int:
        return len(self.records)

    def persist(self, path: str | Path) -> None:
        lines = [json.dumps(r.to_dict(), sort_keys=True) for r in self.records]
        Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SkillStore":
        store = cls()
        text = Path(path).read_text(encoding="utf-8")
        for index, line in enumerate(text.splitlines()):
            if not line.strip():
                continue
            try:
                record = SkillRecord.from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise CorruptStoreError(index, str(exc)) from None
            store.add(record)
        return store


def acquire(episodes) -> list[SkillRecord]:
    """One candidate per signature from successful episodes: the final plan with fewest actions."""
    best: dict[str, SkillRecord] = {}
    for ep in episodes:
        if not ep.success or ep.final_plan is None:
            continue
        candidate = SkillRecord(
            signature=ep.task.signature,
            solution=render_plan(ep.final_plan),
            episode_id=ep.task.task_id,
            seed=ep.task.seed,
            env_actions=ep.env_actions,
        )
        held = best.get(candidate.signature)
        if held is None or candidate.env_actions < held.env_actions:
            best[candidate.signature] = candidate
    return [best[s] for s in sorted(best)]


# Runs one suite; receives the exemplar list per task, returns success flags.
SuiteRunner = Callable[[list[TaskInstance], Callable[[TaskInstance], list[str]]], list[bool]]


def filter_skill(
    candidate: SkillRecord,
    eval_tasks: list[TaskInstance],
    run: SuiteRunner,
    baseline: Callable[[TaskInstance], list[str]] = lambda task: [],
) -> SkillRecord:
    """Archive ``candidate`` iff it strictly raises the success rate on ``eval_tasks``."""
    if not eval_tasks:
        raise ValueError("filtering needs at least one evaluation task")
    if any(t.seed == candidate.seed and t.signature == candidate.signature for t in eval_tasks):
        raise ValueError("evaluation seeds must differ from the candidate's own episode")
    without = run(eval_tasks, baseline)
    with_ = run(eval_tasks, lambda task: [candidate.exemplar()] + baseline(task))
    rate_without = Fraction(sum(without), len(eval_tasks))
    rate_with = Fraction(sum(with_), len(eval_tasks))
    status = SkillStatus.ARCHIVED if rate_with > rate_without else SkillStatus.DISCARDED
    ev = SkillEval(rate_without, rate_with, tuple(t.task_id for t in eval_tasks))
    return replace(candidate, eval=ev, status=status)


def expert_exemplar(task: TaskInstance) -> str:
    return f"{SAMPLE_HEADER}{task.task_type.value}\n{load_sample(task.task_type.slug)}"


@dataclass(frozen=True)
class ExemplarPolicy:
    use_skills: bool = True
    use_expert_samples: bool = True


def retrieve(store: SkillStore | None, task: TaskInstance, policy: ExemplarPolicy = ExemplarPolicy()) -> list[str]:
    """Matching archived skill, else the expert sample, else nothing."""
    if policy.use_skills and store is not None:
        record = store.archived(task.signature)
        if record is not None:
            return [record.exemplar()]
    if policy.use_expert_samples:
        return [expert_exemplar(task)]
    return []
