"""Prompt templates with ``<name>`` placeholders and kind sentinels."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

KINDS = ("basic_info", "initial_planning", "code_check", "refinement", "start_from", "ask_llm", "act")

PLACEHOLDERS = frozenset(
    {
        "basic_info",
        "action_list",
        "sample",
        "receptacle_list",
        "task",
        "error_msg",
        "previous_solution",
        "revised_solution",
        "candidate",
        "question",
        "observation",
    }
)

SENTINEL_PREFIX = "#@kind="
_SENTINEL = re.compile(r"\A#@kind=([a-z_]+)[ \t]*\r?\n")
_PLACEHOLDER = re.compile(r"<([a-z_]+)>")


class TemplateError(KeyError):
    def __str__(self) -> str:
        return str(self.args[0])


class MissingPlaceholderError(TemplateError):
    def __init__(self, name: str):
        super().__init__(f"missing substitution for <{name}>")
        self.name = name


class UnknownPromptKind(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    kind: str
    body: str

    @property
    def placeholders(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for m in _PLACEHOLDER.finditer(self.body):
            if m.group(1) in PLACEHOLDERS:
                seen.setdefault(m.group(1))
        return tuple(seen)

    def render(self, substitutions: dict[str, str]) -> str:
        """Single-pass substitution; inserted text is never re-scanned."""
        for name in self.placeholders:
            if name not in substitutions:
                raise MissingPlaceholderError(name)

        def swap(m: re.Match) -> str:
            name = m.group(1)
            return str(substitutions[name]) if name in PLACEHOLDERS else m.group(0)

        return _PLACEHOLDER.sub(swap, self.body)


@lru_cache(maxsize=None)
def load_template(kind: str) -> PromptTemplate:
    if kind not in KINDS:
        raise UnknownPromptKind(f"unknown prompt kind {kind!r}")
    body = resources.files("closedloop.llm").joinpath("prompts", f"{kind}.txt").read_text(encoding="utf-8")
    return PromptTemplate(kind, body)


def render_template(kind: str, substitutions: dict[str, str], *, sentinel: bool = True) -> str:
    """Render ``kind``; ``<basic_info>`` is filled from its own template when absent.

    With ``sentinel`` the result starts with a hidden ``#@kind=...`` line that
    lets test doubles route the prompt; remote backends strip it.
    """
    template = load_template(kind)
    subs = dict(substitutions)
    if "basic_info" in template.placeholders and "basic_info" not in subs:
        subs["basic_info"] = load_template("basic_info").render(subs)
    text = template.render(subs)
    return f"{SENTINEL_PREFIX}{kind}\n{text}" if sentinel else text


def classify_prompt(prompt: str) -> str:
    m = _SENTINEL.match(prompt)
    if not m or m.group(1) not in KINDS:
        raise UnknownPromptKind("prompt carries no recognised kind marker")
    return m.group(1)


def strip_sentinel(prompt: str) -> str:
    return _SENTINEL.sub("", prompt, count=1)


@lru_cache(maxsize=None)
def load_sample(task_slug: str) -> str:
    """Expert sample solution for a task type slug such as ``clean``."""
    return resources.files("closedloop.llm").joinpath("samples", f"sample_{task_slug}.plan").read_text(encoding="utf-8")
