"""Canonical text rendering of plan ASTs."""

from __future__ import annotations

from .nodes import (
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
    Var,
)

INDENT = "    "

_PREC_OR, _PREC_AND, _PREC_NOT, _PREC_CMP, _PREC_ATOM = range(1, 6)


def _escape(text: str, *, braces: bool = False) -> str:
    out = []
    for ch in text:
        if ch == "\\":
            out.append("\\\\")
        elif ch == "'":
            out.append("\\'")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\t":
            out.append("\\t")
        elif braces and ch in "{}":
            out.append(ch * 2)
        elif not ch.isprintable():
            code = ord(ch)
            if code <= 0xFF:
                out.append(f"\\x{code:02x}")
            elif code <= 0xFFFF:
                out.append(f"\\u{code:04x}")
            else:
                out.append(f"\\U{code:08x}")
        else:
            out.append(ch)
    return "".join(out)


def _const(value) -> str:
    if isinstance(value, str):
        return "'" + _escape(value) + "'"
    return repr(value)


def _prec(expr: Expr) -> int:
    if isinstance(expr, BoolOp):
        return _PREC_OR if expr.op == "or" else _PREC_AND
    if isinstance(expr, Not):
        return _PREC_NOT
    if isinstance(expr, Compare):
        return _PREC_CMP
    return _PREC_ATOM


def render_expr(expr: Expr) -> str:
    if isinstance(expr, Const):
        return _const(expr.value)
    if isinstance(expr, ListLit):
        return "[" + ", ".join(_const(item.value) for item in expr.items) + "]"
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Interp):
        chunks = []
        for part in expr.parts:
            if isinstance(part, Var):
                chunks.append("{" + part.name + "}")
            else:
                chunks.append(_escape(part, braces=True))
        return "f'" + "".join(chunks) + "'"
    if isinstance(expr, Compare):
        # Operands must be atoms: anything else would re-associate or chain.
        return f"{_wrap(expr.left, _PREC_ATOM)} {expr.op} {_wrap(expr.right, _PREC_ATOM)}"
    if isinstance(expr, BoolOp):
        # Nested boolean ops always get parentheses so their grouping survives.
        parts = [
            f"({render_expr(v)})" if isinstance(v, BoolOp) else _wrap(v, _prec(expr) + 1)
            for v in expr.values
        ]
        return f" {expr.op} ".join(parts)
    if isinstance(expr, Not):
        return "not " + _wrap(expr.operand, _PREC_NOT)
    raise TypeError(f"not an expression: {expr!r}")


def _wrap(expr: Expr, min_prec: int) -> str:
    text = render_expr(expr)
    return text if _prec(expr) >= min_prec else f"({text})"


def _call(name: str, args) -> str:
    return f"{name}(" + ", ".join(render_expr(a) for a in args) + ")"


def render_stmt(stmt: Stmt, depth: int = 1) -> list[str]:
    pad = INDENT * depth
    if isinstance(stmt, ActionCall):
        call = _call(stmt.action, stmt.args)
        return [pad + (f"{stmt.target} = {call}" if stmt.target else call)]
    if isinstance(stmt, AskLlm):
        args = (stmt.question,) if stmt.context is None else (stmt.question, stmt.context)
        return [pad + f"{stmt.target} = " + _call("ask_llm", args)]
    if isinstance(stmt, Assign):
        return [pad + f"{stmt.target} = {render_expr(stmt.value)}"]
    if isinstance(stmt, ForEach):
        lines = [pad + f"for {stmt.target} in {render_expr(stmt.iterable)}:"]
        for inner in stmt.body:
            lines.extend(render_stmt(inner, depth + 1))
        if stmt.break_if is not None:
            lines.append(pad + INDENT + f"if {render_expr(stmt.break_if)}:")
            lines.append(pad + INDENT * 2 + "break")
        return lines
    if isinstance(stmt, If):
        lines = [pad + f"if {render_expr(stmt.test)}:"]
        for inner in stmt.body:
            lines.extend(render_stmt(inner, depth + 1))
        if stmt.orelse:
            lines.append(pad + "else:")
            for inner in stmt.orelse:
                lines.extend(render_stmt(inner, depth + 1))
        return lines
    if isinstance(stmt, AssertStep):
        text = f"assert {render_expr(stmt.test)}"
        if stmt.message is not None:
            text += f", {render_expr(stmt.message)}"
        return [pad + text]
    raise TypeError(f"not a statement: {stmt!r}")


def render_plan(ast: PlanAst) -> str:
    """Render ``ast`` as canonical plan text (trailing newline included)."""
    lines = [f"def {ast.name}({ast.agent_param}, {ast.start_param}={ast.start_default}):"]
    lines.extend(f"{INDENT}# {line}" for line in ast.preamble)
    for sg in ast.subgoals:
        lines.append(f"{INDENT}# [Step {sg.index}] {sg.comment}")
        for stmt in sg.body:
            lines.extend(render_stmt(stmt))
        if sg.assertion is not None:
            lines.extend(render_stmt(sg.assertion))
    return "\n".join(lines) + "\n"


def render_subgoal(ast: PlanAst, index: int) -> str:
    """Statements of one sub-goal without its comment (used for diffing)."""
    sg = ast.subgoal(index)
    lines = []
    for stmt in sg.body:
        lines.extend(render_stmt(stmt))
    if sg.assertion is not None:
        lines.extend(render_stmt(sg.assertion))
    return "\n".join(lines)
