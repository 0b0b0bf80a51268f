"""Static checks run before a plan is executed."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol

from .nodes import (
    BUILTIN_NAMES,
    ActionCall,
    AskLlm,
    Assign,
    AssertStep,
    Expr,
    ForEach,
    If,
    ListLit,
    PlanAst,
    Stmt,
    Var,
    expr_vars,
    iter_stmts,
)

ERROR = "error"
WARNING = "warning"


class Catalog(Protocol):
    def arity(self, name: str) -> int | None: ...


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    subgoal: int
    ordinal: int
    message: str

    def render(self) -> str:
        return f"{self.severity.upper()} {self.subgoal}:{self.ordinal} {self.message}"


def has_errors(diagnostics: Iterable[Diagnostic]) -> bool:
    return any(d.severity == ERROR for d in diagnostics)


def render_diagnostics(diagnostics: Iterable[Diagnostic]) -> str:
    return "\n".join(d.render() for d in diagnostics)


@dataclass
class _Flow:
    bound: frozenset[str]
    nonempty: frozenset[str]  # names known to hold a non-empty list


def _assigned(body: tuple[Stmt, ...]) -> set[str]:
    names = set()
    for stmt in iter_stmts(body):
        target = getattr(stmt, "target", None)
        if target:
            names.add(target)
    return names


class _Checker:
    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        self.diags: list[Diagnostic] = []
        self.where = (0, 0)

    def add(self, severity: str, message: str) -> None:
        self.diags.append(Diagnostic(severity, self.where[0], self.where[1], message))

    def expr(self, expr: Expr | None, flow: _Flow) -> None:
        for var in expr_vars(expr):
            if var.name not in flow.bound and var.name not in BUILTIN_NAMES:
                self.add(ERROR, f"variable '{var.name}' is used before it is bound")

    def bind(self, name: str, flow: _Flow, nonempty: bool = False) -> _Flow:
        if name in BUILTIN_NAMES:
            self.add(ERROR, f"'{name}' is a read-only session value and cannot be assigned")
        ne = flow.nonempty | {name} if nonempty else flow.nonempty - {name}
        return _Flow(flow.bound | {name}, ne)

    def stmt(self, stmt: Stmt, flow: _Flow) -> _Flow:
        if isinstance(stmt, ActionCall):
            for arg in stmt.args:
                self.expr(arg, flow)
            arity = self.catalog.arity(stmt.action)
            if arity is None:
                self.add(ERROR, f"unknown action '{stmt.action}'")
            elif arity != len(stmt.args):
                self.add(
                    ERROR,
                    f"action '{stmt.action}' takes {arity} argument(s), got {len(stmt.args)}",
                )
            return self.bind(stmt.target, flow) if stmt.target else flow
        if isinstance(stmt, AskLlm):
            self.expr(stmt.question, flow)
            self.expr(stmt.context, flow)
            return self.bind(stmt.target, flow)
        if isinstance(stmt, Assign):
            self.expr(stmt.value, flow)
            nonempty = isinstance(stmt.value, ListLit) and bool(stmt.value.items)
            return self.bind(stmt.target, flow, nonempty)
        if isinstance(stmt, ForEach):
            self.expr(stmt.iterable, flow)
            inner = self.bind(stmt.target, flow)
            inner = self.block(stmt.body, inner)
            self.expr(stmt.break_if, inner)
            runs_once = (isinstance(stmt.iterable, ListLit) and bool(stmt.iterable.items)) or (
                isinstance(stmt.iterable, Var) and stmt.iterable.name in flow.nonempty
            )
            killed = _assigned(stmt.body) | {stmt.target}
            if runs_once:
                return _Flow(inner.bound, inner.nonempty - killed)
            return _Flow(flow.bound, flow.nonempty - killed)
        if isinstance(stmt, If):
            self.expr(stmt.test, flow)
            a = self.block(stmt.body, flow)
            b = self.block(stmt.orelse, flow)
            return _Flow(a.bound & b.bound, a.nonempty & b.nonempty)
        if isinstance(stmt, AssertStep):
            self.expr(stmt.test, flow)
            self.expr(stmt.message, flow)
            return flow
        raise TypeError(f"not a statement: {stmt!r}")

    def block(self, body: tuple[Stmt, ...], flow: _Flow) -> _Flow:
        for stmt in body:
            flow = self.stmt(stmt, flow)
        return flow


def validate_plan(
    ast: PlanAst,
    catalog: Catalog,
    *,
    start_from: int = 1,
    prebound: Iterable[str] = (),
) -> list[Diagnostic]:
    """Check ``ast`` against ``catalog``; an empty error set means executable.

    ``start_from``/``prebound`` describe a resumed execution: sub-goals before
    ``start_from`` are skipped and ``prebound`` names come from the checkpoint.
    """
    checker = _Checker(catalog)
    flow = _Flow(frozenset({ast.agent_param, ast.start_param, *prebound}), frozenset())
    for sg in ast.subgoals:
        asked: dict[str, int] = {}
        assigned_here: set[str] = set()
        active = sg.index >= start_from
        for ordinal, stmt in enumerate(sg.body, start=1):
            checker.where = (sg.index, ordinal)
            if active:
                flow = checker.stmt(stmt, flow)
            for inner in iter_stmts((stmt,)):
                if isinstance(inner, AskLlm):
                    if inner.target in asked or inner.target in assigned_here:
                        checker.add(
                            ERROR,
                            f"ask_llm result '{inner.target}' is re-bound within step {sg.index}",
                        )
                    asked[inner.target] = ordinal
                else:
                    target = getattr(inner, "target", None)
                    if target:
                        if target in asked:
                            checker.add(
                                ERROR,
                                f"ask_llm result '{target}' is re-bound within step {sg.index}",
                            )
                        assigned_here.add(target)
        if sg.assertion is not None and active:
            checker.where = (sg.index, len(sg.body) + 1)
            flow = checker.stmt(sg.assertion, flow)

    read = {v.name for sg in ast.subgoals for s in iter_stmts(sg.body + ((sg.assertion,) if sg.assertion else ())) for v in _stmt_reads(s)}
    for sg in ast.subgoals:
        for ordinal, stmt in enumerate(sg.body, start=1):
            for inner in iter_stmts((stmt,)):
                if isinstance(inner, AskLlm) and inner.target not in read:
                    checker.where = (sg.index, ordinal)
                    checker.add(WARNING, f"ask_llm result '{inner.target}' is never used")
    return checker.diags


def _stmt_reads(stmt: Stmt):
    if isinstance(stmt, ActionCall):
        for arg in stmt.args:
            yield from expr_vars(arg)
    elif isinstance(stmt, AskLlm):
        yield from expr_vars(stmt.question)
        yield from expr_vars(stmt.context)
    elif isinstance(stmt, Assign):
        yield from expr_vars(stmt.value)
    elif isinstance(stmt, ForEach):
        yield from expr_vars(stmt.iterable)
        yield from expr_vars(stmt.break_if)
    elif isinstance(stmt, If):
        yield from expr_vars(stmt.test)
    elif isinstance(stmt, AssertStep):
        yield from expr_vars(stmt.test)
        yield from expr_vars(stmt.message)
