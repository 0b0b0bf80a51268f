"""AST node types for the plan language.

Every node is a frozen dataclass so plans can be shared between concurrent
episode runners and compared structurally. Source line numbers are carried
for diagnostics but excluded from equality, so ``parse(render(p)) == p``
holds even though rendering re-flows the text.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: str | int | bool | None


@dataclass(frozen=True)
class ListLit:
    items: tuple[Const, ...]


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Interp:
    """Text interpolation: literal chunks interleaved with variable refs."""

    parts: tuple[Union[str, Var], ...]


@dataclass(frozen=True)
class Compare:
    op: str  # '==', '!=', 'in', 'not in'
    left: Expr
    right: Expr


@dataclass(frozen=True)
class BoolOp:
    op: str  # 'and' | 'or'
    values: tuple[Expr, ...]


@dataclass(frozen=True)
class Not:
    operand: Expr


Expr = Union[Const, ListLit, Var, Interp, Compare, BoolOp, Not]

COMPARE_OPS = ("==", "!=", "in", "not in")

# -- statements --------------------------------------------------------------


@dataclass(frozen=True)
class ActionCall:
    action: str
    args: tuple[Expr, ...]
    target: str | None = None
    line: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class AskLlm:
    """``target = ask_llm(question[, context])``.

    ``context`` is the observation text handed to the model; when omitted the
    interpreter supplies the most recent environment observation.
    """

    question: Expr
    target: str
    context: Expr | None = None
    line: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Assign:
    target: str
    value: Expr
    line: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class ForEach:
    target: str
    iterable: Expr
    body: tuple[Stmt, ...]
    break_if: Expr | None = None
    line: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class If:
    test: Expr
    body: tuple[Stmt, ...]
    orelse: tuple[Stmt, ...] = ()
    line: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class AssertStep:
    test: Expr
    message: Expr | None = None
    line: int = field(default=0, compare=False, repr=False)


Stmt = Union[ActionCall, AskLlm, Assign, ForEach, If, AssertStep]

# -- plan --------------------------------------------------------------------


@dataclass(frozen=True)
class SubGoal:
    index: int
    comment: str
    body: tuple[Stmt, ...]
    assertion: AssertStep | None = None
    line: int = field(default=0, compare=False, repr=False)

    def structure(self) -> tuple:
        """Comment-free view used when comparing revisions."""
        return (self.body, self.assertion)


@dataclass(frozen=True)
class PlanAst:
    subgoals: tuple[SubGoal, ...]
    preamble: tuple[str, ...] = ()
    name: str = "solution"
    agent_param: str = "agent"
    start_param: str = "start_from"
    start_default: int = 1

    def __len__(self) -> int:
        return len(self.subgoals)

    def subgoal(self, index: int) -> SubGoal:
        return self.subgoals[index - 1]


ASK_LLM = "ask_llm"
# Read-only session queries usable in any expression.
BUILTIN_NAMES = frozenset({"holding", "location", "last_observation"})


def iter_stmts(body: tuple[Stmt, ...]):
    """Yield every statement in ``body``, depth first."""
    for stmt in body:
        yield stmt
        if isinstance(stmt, ForEach):
            yield from iter_stmts(stmt.body)
        elif isinstance(stmt, If):
            yield from iter_stmts(stmt.body)
            yield from iter_stmts(stmt.orelse)


def expr_vars(expr: Expr | None):
    """Yield the variable references inside ``expr``."""
    if expr is None:
        return
    if isinstance(expr, Var):
        yield expr
    elif isinstance(expr, Interp):
        for part in expr.parts:
            if isinstance(part, Var):
                yield part
    elif isinstance(expr, Compare):
        yield from expr_vars(expr.left)
        yield from expr_vars(expr.right)
    elif isinstance(expr, BoolOp):
        for value in expr.values:
            yield from expr_vars(value)
    elif isinstance(expr, Not):
        yield from expr_vars(expr.operand)
