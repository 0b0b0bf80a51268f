"""Parser for plan text.

Plans are written in a small Python-shaped language, so the concrete syntax
is handled by the stdlib ``ast`` and ``tokenize`` modules. This module then
lowers the Python tree into :mod:`closedloop.plan.nodes`, rejecting every
construct outside the plan grammar, and recovers sub-goal boundaries from the
``# [Step k]`` comments.
"""

from __future__ import annotations

import ast
import io
import re
import tokenize
from dataclasses import dataclass

from .nodes import (
    ASK_LLM,
    ActionCall,
    AskLlm,
    Assign,
    AssertStep,
    BoolOp,
    Compare,
    Const,
    Expr,
    ForEach,
    If,
    Interp,
    ListLit,
    Not,
    PlanAst,
    Stmt,
    SubGoal,
    Var,
)

STEP_RE = re.compile(r"^#\s*\[Step\s+(\d+)\]\s*(.*?)\s*$")

_CMP_OPS = {ast.Eq: "==", ast.NotEq: "!=", ast.In: "in", ast.NotIn: "not in"}


class ParseError(ValueError):
    """Plan text that is not a valid plan.

    ``str(err)`` is phrased for feeding straight back into a repair prompt.
    """

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


@dataclass
class _Comment:
    line: int
    col: int
    text: str


def _err(node: ast.AST | None, message: str) -> ParseError:
    if node is None:
        return ParseError(message)
    return ParseError(message, getattr(node, "lineno", 0), getattr(node, "col_offset", 0) + 1)


def extract_code(text: str) -> str:
    """Pull the ``def solution`` block out of a model response.

    Markdown fences and chatter before the ``def`` line are dropped; chatter
    after the function is cut at the first unindented, non-comment line.
    """
    text = text.replace("\r\n", "\n")
    fence = re.search(r"```[a-zA-Z]*\n(.*?)```", text, re.S)
    if fence and "def " in fence.group(1):
        text = fence.group(1)
    lines = text.split("\n")
    start = next((i for i, ln in enumerate(lines) if ln.lstrip().startswith("def ")), None)
    if start is None:
        return text
    indent = len(lines[start]) - len(lines[start].lstrip())
    out = [lines[start][indent:]]
    for ln in lines[start + 1:]:
        stripped = ln.strip()
        if stripped and len(ln) - len(ln.lstrip()) <= indent:
            break
        out.append(ln[indent:] if ln[:indent].strip() == "" else ln.lstrip())
    return "\n".join(out).rstrip() + "\n"


def _comments(source: str) -> list[_Comment]:
    found = []
    try:
        for tok in tokenize.generate_tokens(io.StringIO(source).readline):
            if tok.type == tokenize.COMMENT:
                found.append(_Comment(tok.start[0], tok.start[1], tok.string))
    except (tokenize.TokenError, IndentationError, SyntaxError):
        pass  # ast.parse reports the real error
    return found


# -- expressions -------------------------------------------------------------


def _const_value(node: ast.AST):
    if isinstance(node, ast.Constant):
        value = node.value
        if value is None or isinstance(value, (str, bool, int)):
            return value
        raise _err(node, f"unsupported literal {value!r}")
    if (
        isinstance(node, ast.UnaryOp)
        and isinstance(node.op, ast.USub)
        and isinstance(node.operand, ast.Constant)
        and type(node.operand.value) is int
    ):
        return -node.operand.value
    raise _err(node, "list items must be literals")


def lower_expr(node: ast.AST) -> Expr:
    if isinstance(node, (ast.Constant, ast.UnaryOp)) and not (
        isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.Not)
    ):
        return Const(_const_value(node))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.Not):
        return Not(lower_expr(node.operand))
    if isinstance(node, ast.List):
        return ListLit(tuple(Const(_const_value(item)) for item in node.elts))
    if isinstance(node, ast.Name):
        return Var(node.id)
    if isinstance(node, ast.JoinedStr):
        parts: list = []
        for value in node.values:
            if isinstance(value, ast.Constant) and isinstance(value.value, str):
                if parts and isinstance(parts[-1], str):
                    parts[-1] += value.value
                elif value.value:
                    parts.append(value.value)
            elif (
                isinstance(value, ast.FormattedValue)
                and isinstance(value.value, ast.Name)
                and value.conversion == -1
                and value.format_spec is None
            ):
                parts.append(Var(value.value.id))
            else:
                raise _err(node, "only plain variable names may be interpolated")
        return Interp(tuple(parts))
    if isinstance(node, ast.Compare):
        if len(node.ops) != 1:
            raise _err(node, "chained comparisons are not supported")
        op = _CMP_OPS.get(type(node.ops[0]))
        if op is None:
            raise _err(node, "only ==, !=, in and not in comparisons are supported")
        return Compare(op, lower_expr(node.left), lower_expr(node.comparators[0]))
    if isinstance(node, ast.BoolOp):
        op = "and" if isinstance(node.op, ast.And) else "or"
        return BoolOp(op, tuple(lower_expr(v) for v in node.values))
    if isinstance(node, ast.Call):
        raise _err(node, "calls are only allowed as statements")
    raise _err(node, f"unsupported expression: {ast.unparse(node)}")


# -- statements --------------------------------------------------------------


def _call_name(call: ast.Call) -> str:
    func = call.func
    if isinstance(func, ast.Name):
        return func.id
    # agent.goto(...) is accepted as a synonym for goto(...)
    if isinstance(func, ast.Attribute) and isinstance(func.value, ast.Name):
        return func.attr
    raise _err(call, "actions must be called by name")


def _lower_call(call: ast.Call, target: str | None, line: int) -> Stmt:
    if call.keywords or any(isinstance(a, ast.Starred) for a in call.args):
        raise _err(call, "keyword and starred arguments are not supported")
    name = _call_name(call)
    args = tuple(lower_expr(a) for a in call.args)
    if name == ASK_LLM:
        if target is None:
            raise _err(call, "the result of ask_llm must be assigned to a variable")
        if len(args) not in (1, 2):
            raise _err(call, "ask_llm takes a question and an optional observation")
        return AskLlm(args[0], target, args[1] if len(args) == 2 else None, line=line)
    return ActionCall(name, args, target, line=line)


def _is_break_guard(node: ast.stmt) -> bool:
    return (
        isinstance(node, ast.If)
        and len(node.body) == 1
        and isinstance(node.body[0], ast.Break)
        and not node.orelse
    )


def lower_stmt(node: ast.stmt) -> Stmt:
    line = node.lineno
    if isinstance(node, ast.Expr) and isinstance(node.value, ast.Call):
        return _lower_call(node.value, None, line)
    if isinstance(node, ast.Assign):
        if len(node.targets) != 1 or not isinstance(node.targets[0], ast.Name):
            raise _err(node, "assignments must bind a single plain name")
        target = node.targets[0].id
        if isinstance(node.value, ast.Call):
            return _lower_call(node.value, target, line)
        return Assign(target, lower_expr(node.value), line=line)
    if isinstance(node, ast.For):
        if not isinstance(node.target, ast.Name):
            raise _err(node, "loop variable must be a plain name")
        if node.orelse:
            raise _err(node, "for/else is not supported")
        body_nodes = list(node.body)
        break_if = None
        if body_nodes and _is_break_guard(body_nodes[-1]):
            break_if = lower_expr(body_nodes.pop().test)
        body = _lower_block(body_nodes)
        if not body:
            raise _err(node, "loop body must contain at least one statement")
        return ForEach(node.target.id, lower_expr(node.iter), body, break_if, line=line)
    if isinstance(node, ast.If):
        return If(lower_expr(node.test), _lower_block(node.body), _lower_block(node.orelse), line=line)
    if isinstance(node, ast.Assert):
        raise _err(node, "assert is only allowed as the last statement of a step")
    if isinstance(node, ast.Break):
        raise _err(node, "break is only allowed as `if <condition>: break` at the end of a loop")
    if isinstance(node, ast.Pass):
        raise _err(node, "pass is not supported")
    raise _err(node, f"unsupported statement: {type(node).__name__}")


def _lower_block(nodes) -> tuple[Stmt, ...]:
    return tuple(lower_stmt(n) for n in nodes)


def _lower_assert(node: ast.Assert) -> AssertStep:
    msg = lower_expr(node.msg) if node.msg is not None else None
    return AssertStep(lower_expr(node.test), msg, line=node.lineno)


# -- plan --------------------------------------------------------------------


def parse_plan(source: str) -> PlanAst:
    """Parse plan text into a :class:`PlanAst`.

    Raises :class:`ParseError` with a line and column on any syntax error or
    violation of the plan invariants (contiguous ``[Step k]`` numbering,
    non-empty steps, an assertion closing every step but the last).
    """
    source = source.replace("\r\n", "\n").expandtabs(4)
    lines = source.split("\n")
    def_idx = next((i for i, ln in enumerate(lines) if ln.lstrip().startswith("def ")), None)
    if def_idx is not None and not any(
        ln.strip() and not ln.strip().startswith("#") for ln in lines[def_idx + 1:]
    ):
        raise ParseError("empty solution body: the function has no statements", def_idx + 1, 1)
    try:
        module = ast.parse(source)
    except SyntaxError as exc:
        raise ParseError(exc.msg or "invalid syntax", exc.lineno or 0, exc.offset or 0) from None

    if len(module.body) != 1 or not isinstance(module.body[0], ast.FunctionDef):
        raise ParseError("expected exactly one function definition `def solution(agent, start_from=1):`", 1, 1)
    func: ast.FunctionDef = module.body[0]
    args = func.args
    if (
        len(args.args) != 2
        or args.vararg
        or args.kwarg
        or args.kwonlyargs
        or args.posonlyargs
        or len(args.defaults) != 1
    ):
        raise _err(func, "the plan function must take exactly (agent, start_from=1)")
    default = args.defaults[0]
    if not (isinstance(default, ast.Constant) and type(default.value) is int):
        raise _err(default, "start_from must default to an integer")
    if default.value != 1:
        raise _err(default, "start_from must default to 1")
    if func.decorator_list or func.returns:
        raise _err(func, "decorators and return annotations are not supported")

    spans = [(n.lineno, n.end_lineno or n.lineno) for n in func.body]
    steps: list[tuple[int, int, str]] = []
    preamble: list[str] = []
    for c in _comments(source):
        if c.line <= func.lineno:
            continue
        inside = any(lo <= c.line <= hi for lo, hi in spans)
        m = STEP_RE.match(c.text)
        if m:
            if inside:
                raise ParseError("[Step k] comments must sit at the top level of the function", c.line, c.col + 1)
            steps.append((c.line, int(m.group(1)), m.group(2)))
        elif not steps and not inside and c.line < spans[0][0]:
            text = c.text[1:].strip()
            if text:
                preamble.append(text)

    if not steps:
        raise _err(func, "no [Step k] comments found; sub-goals must be marked `# [Step 1] ...`")
    for expected, (line, number, _) in enumerate(steps, start=1):
        if number != expected:
            raise ParseError(
                f"non-contiguous sub-goal indices: expected [Step {expected}], found [Step {number}]",
                line,
                1,
            )

    groups: list[list[ast.stmt]] = [[] for _ in steps]
    for node in func.body:
        owner = None
        for i, (line, _, _) in enumerate(steps):
            if line < node.lineno:
                owner = i
        if owner is None:
            raise _err(node, "statement appears before the first [Step 1] comment")
        groups[owner].append(node)

    subgoals = []
    for i, ((line, number, comment), nodes) in enumerate(zip(steps, groups)):
        if not comment:
            raise ParseError(f"[Step {number}] needs a description", line, 1)
        assertion = None
        if nodes and isinstance(nodes[-1], ast.Assert):
            assertion = _lower_assert(nodes.pop())
        if not nodes:
            raise ParseError(f"[Step {number}] has no statements besides its assertion", line, 1)
        body = _lower_block(nodes)
        if assertion is None and i != len(steps) - 1:
            raise ParseError(f"[Step {number}] must end with an assertion", line, 1)
        subgoals.append(SubGoal(number, comment, body, assertion, line=line))

    return PlanAst(
        subgoals=tuple(subgoals),
        preamble=tuple(preamble),
        name=func.name,
        agent_param=args.args[0].arg,
        start_param=args.args[1].arg,
        start_default=1,
    )


def parse_action(text: str) -> ActionCall:
    """Parse a single action call such as ``goto('sinkbasin 1')``."""
    snippet = extract_code(text) if "def " in text else text.strip().split("\n")[0].strip()
    snippet = snippet.strip("`").strip()
    try:
        module = ast.parse(snippet)
    except SyntaxError as exc:
        raise ParseError(exc.msg or "invalid syntax", exc.lineno or 0, exc.offset or 0) from None
    if len(module.body) != 1:
        raise ParseError("expected a single action call")
    stmt = lower_stmt(module.body[0])
    if not isinstance(stmt, ActionCall):
        raise ParseError("expected a single action call")
    return stmt
