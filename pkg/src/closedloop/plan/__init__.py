"""The plan language: AST, parser, canonical printer, validator and diff."""

from .diff import diff_first_divergence, same_structure
from .nodes import (
    ASK_LLM,
    BUILTIN_NAMES,
    ActionCall,
    AskLlm,
    Assign,
    AssertStep,
    BoolOp,
    Compare,
    Const,
    ForEach,
    If,
    Interp,
    ListLit,
    Not,
    PlanAst,
    SubGoal,
    Var,
)
from .parser import ParseError, extract_code, parse_action, parse_plan
from .printer import render_expr, render_plan
from .validate import ERROR, WARNING, Diagnostic, has_errors, render_diagnostics, validate_plan

__all__ = [
    "ASK_LLM",
    "BUILTIN_NAMES",
    "ActionCall",
    "AskLlm",
    "Assign",
    "AssertStep",
    "BoolOp",
    "Compare",
    "Const",
    "Diagnostic",
    "ERROR",
    "ForEach",
    "If",
    "Interp",
    "ListLit",
    "Not",
    "ParseError",
    "PlanAst",
    "SubGoal",
    "Var",
    "WARNING",
    "diff_first_divergence",
    "extract_code",
    "has_errors",
    "parse_action",
    "parse_plan",
    "render_diagnostics",
    "render_expr",
    "render_plan",
    "same_structure",
    "validate_plan",
]
