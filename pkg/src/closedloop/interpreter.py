"""Plan execution with sub-goal checkpoints and resume-from-breakpoint."""

from __future__ import annotations

import copy
import enum
import logging
from dataclasses import dataclass, field
from typing import Any, Callable

from .env import NOTHING, EnvSession, UnknownActionError
from .plan import (
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
    Var,
    parse_action,
    ParseError,
)

log = logging.getLogger(__name__)

DEFAULT_CAP = 50
REPORT_TAIL = 3


class Status(str, enum.Enum):
    SUCCESS = "success"
    ASSERTION_FAILED = "assertion_failed"
    ACTION_CAP_REACHED = "action_cap_reached"
    RUNTIME_FAULT = "runtime_fault"


class RuntimeFault(Exception):
    """Raised for problems only visible at run time (unbound names, bad answers)."""


@dataclass
class Checkpoint:
    bindings: dict[str, Any]
    actions_taken: int


@dataclass
class ExecutionState:
    bindings: dict[str, Any] = field(default_factory=dict)
    current_subgoal: int = 0
    actions_taken: int = 0
    checkpoints: dict[int, Checkpoint] = field(default_factory=dict)


@dataclass(frozen=True)
class ContextEntry:
    action: str
    observation: str
    subgoal: int
    round: int = 0
    substitute: bool = False


@dataclass
class EpisodeContext:
    """Trajectory so far: the first observation, then (action, observation) pairs."""

    initial_observation: str
    entries: list[ContextEntry] = field(default_factory=list)

    def append(self, entry: ContextEntry) -> None:
        self.entries.append(entry)

    @property
    def interactions(self) -> list[tuple[str, str]]:
        return [(e.action, e.observation) for e in self.entries]

    def actions_in(self, subgoals, round: int | None = None) -> int:
        wanted = set(subgoals)
        return sum(1 for e in self.entries if e.subgoal in wanted and (round is None or e.round == round))


@dataclass(frozen=True)
class AssertionReport:
    failing_subgoal: int
    message: str
    agent_location: str
    held_object: str | None
    last_interactions: tuple[tuple[str, str], ...]

    def render(self) -> str:
        lines = [f"Error in [Step {self.failing_subgoal}]: {self.message}"]
        if self.last_interactions:
            lines.append("The last three interactions before error were:")
            for action, observation in self.last_interactions:
                lines.append(f"> {action}")
                lines.append(observation)
        else:
            lines.append("No interactions happened before the error.")
        held = self.held_object or "nothing"
        lines.append(f"I am at {self.agent_location} and holding {held}.")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "failing_subgoal": self.failing_subgoal,
            "message": self.message,
            "agent_location": self.agent_location,
            "held_object": self.held_object,
            "last_interactions": [list(pair) for pair in self.last_interactions],
        }


@dataclass
class EpisodeOutcome:
    status: Status
    context: EpisodeContext
    final_state: ExecutionState
    report: AssertionReport | None = None
    fault: str | None = None

    @property
    def failed_at(self) -> int | None:
        return self.report.failing_subgoal if self.report else None


def build_report(failing: int, message: str, session: EnvSession, ctx: EpisodeContext | None = None) -> AssertionReport:
    """Failure context for the refiner: where we are, what we hold, the last three steps."""
    view = session.introspect(REPORT_TAIL)
    tail = tuple(ctx.interactions[-REPORT_TAIL:]) if ctx is not None else view.last_interactions
    return AssertionReport(failing, message, view.location, view.held, tail)


# -- expression evaluation ---------------------------------------------------


def _lookup(name: str, bindings: dict, session: EnvSession) -> Any:
    if name == "holding":
        return session.holding
    if name == "location":
        return session.location
    if name == "last_observation":
        return session.last_observation
    if name not in bindings:
        raise RuntimeFault(f"variable '{name}' is not bound")
    return bindings[name]


def _text(value: Any) -> str:
    return value if isinstance(value, str) else str(value)


def evaluate(expr, bindings: dict, session: EnvSession) -> Any:
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, ListLit):
        return [item.value for item in expr.items]
    if isinstance(expr, Var):
        return _lookup(expr.name, bindings, session)
    if isinstance(expr, Interp):
        return "".join(p if isinstance(p, str) else _text(_lookup(p.name, bindings, session)) for p in expr.parts)
    if isinstance(expr, Compare):
        left = evaluate(expr.left, bindings, session)
        right = evaluate(expr.right, bindings, session)
        if expr.op == "==":
            return left == right
        if expr.op == "!=":
            return left != right
        if not isinstance(right, (str, list)):
            raise RuntimeFault(f"cannot test membership in {right!r}")
        if isinstance(right, str) and not isinstance(left, str):
            raise RuntimeFault(f"cannot search text for {left!r}")
        found = left in right
        return found if expr.op == "in" else not found
    if isinstance(expr, BoolOp):
        if expr.op == "and":
            return all(truthy(v, bindings, session) for v in expr.values)
        return any(truthy(v, bindings, session) for v in expr.values)
    if isinstance(expr, Not):
        return not truthy(expr.operand, bindings, session)
    raise RuntimeFault(f"cannot evaluate {expr!r}")


def truthy(expr, bindings: dict, session: EnvSession) -> bool:
    return bool(evaluate(expr, bindings, session))


def evaluate_assertion(cond, bindings: dict, session: EnvSession) -> bool:
    """Pure check over bindings plus read-only session queries."""
    return truthy(cond, bindings, session)


# -- execution ---------------------------------------------------------------

AskFn = Callable[[str, str], str]
SubstituteFn = Callable[[AssertionReport], "str | None"]


class _Halt(Exception):
    def __init__(self, status: Status, report: AssertionReport | None = None, fault: str | None = None):
        super().__init__(status.value)
        self.status = status
        self.report = report
        self.fault = fault


class _Run:
    def __init__(self, ast, session, state, ctx, cap, ask, substitute, round_index):
        self.ast = ast
        self.session = session
        self.state = state
        self.ctx = ctx
        self.cap = cap
        self.ask = ask
        self.substitute = substitute
        self.round = round_index

    # environment side
    def act(self, action: str, args: tuple, *, substitute: bool = False) -> str:
        if self.session.step_count >= self.cap:
            raise _Halt(Status.ACTION_CAP_REACHED)
        try:
            observation = self.session.step(action, args)
        except UnknownActionError as exc:
            raise RuntimeFault(str(exc)) from None
        self.state.actions_taken = self.session.step_count
        text = self.session.interaction_log[-1][0]
        self.ctx.append(ContextEntry(text, observation, self.state.current_subgoal, self.round, substitute))
        if self.session.goal_met():
            raise _Halt(Status.SUCCESS)
        return observation

    def try_substitute(self, message: str) -> str | None:
        """Implicit-mode hook: ask for one replacement action and run it."""
        report = build_report(self.state.current_subgoal, message, self.session, self.ctx)
        reply = self.substitute(report)
        if not reply:
            return None
        try:
            call = parse_action(reply)
        except ParseError as exc:
            log.debug("unusable substitute action %r: %s", reply, exc)
            return None
        args = tuple(evaluate(a, self.state.bindings, self.session) for a in call.args)
        return self.act(call.action, args, substitute=True)

    # statements
    def run_block(self, body) -> None:
        for stmt in body:
            self.run_stmt(stmt)

    def run_stmt(self, stmt) -> None:
        b = self.state.bindings
        if isinstance(stmt, ActionCall):
            args = tuple(evaluate(a, b, self.session) for a in stmt.args)
            if not all(isinstance(a, str) for a in args):
                raise RuntimeFault(f"action '{stmt.action}' expects text arguments, got {list(args)!r}")
            observation = self.act(stmt.action, args)
            if observation == NOTHING and self.substitute is not None:
                done = self.session.interaction_log[-1][0]
                replaced = self.try_substitute(f"The action '{done}' had no effect: {NOTHING}")
                if replaced is not None:
                    observation = replaced
            if stmt.target:
                b[stmt.target] = observation
        elif isinstance(stmt, AskLlm):
            question = _text(evaluate(stmt.question, b, self.session))
            if stmt.context is not None:
                context = _text(evaluate(stmt.context, b, self.session))
            else:
                context = self.session.last_observation
            if self.ask is None:
                raise RuntimeFault("ask_llm used but no model is attached")
            b[stmt.target] = self.ask(question, context)
        elif isinstance(stmt, Assign):
            b[stmt.target] = copy.deepcopy(evaluate(stmt.value, b, self.session))
        elif isinstance(stmt, ForEach):
            items = evaluate(stmt.iterable, b, self.session)
            if not isinstance(items, list):
                raise RuntimeFault(f"cannot loop over {items!r}")
            for item in list(items):
                b[stmt.target] = item
                self.run_block(stmt.body)
                if stmt.break_if is not None and truthy(stmt.break_if, b, self.session):
                    break
        elif isinstance(stmt, If):
            self.run_block(stmt.body if truthy(stmt.test, b, self.session) else stmt.orelse)
        elif isinstance(stmt, AssertStep):
            self.check(stmt)
        else:
            raise RuntimeFault(f"unsupported statement {stmt!r}")

    def check(self, stmt: AssertStep) -> None:
        b = self.state.bindings
        if evaluate_assertion(stmt.test, b, self.session):
            return
        message = self.message(stmt)
        if self.substitute is not None:
            self.try_substitute(message)
            if evaluate_assertion(stmt.test, b, self.session):
                return
        report = build_report(self.state.current_subgoal, message, self.session, self.ctx)
        raise _Halt(Status.ASSERTION_FAILED, report)

    def message(self, stmt: AssertStep) -> str:
        if stmt.message is None:
            return "The assertion of this step failed."
        try:
            return _text(evaluate(stmt.message, self.state.bindings, self.session))
        except RuntimeFault as exc:
            return f"The assertion of this step failed ({exc})."


def execute(
    ast: PlanAst,
    session: EnvSession,
    *,
    start_from: int = 1,
    prior: ExecutionState | None = None,
    cap: int = DEFAULT_CAP,
    ask: AskFn | None = None,
    substitute: SubstituteFn | None = None,
    context: EpisodeContext | None = None,
    round_index: int = 0,
) -> EpisodeOutcome:
    """Run ``ast`` from sub-goal ``start_from`` against the live ``session``.

    Sub-goals before ``start_from`` are skipped and their bindings come from the
    checkpoint ``prior`` recorded when that sub-goal was last entered. The world
    is not reset. ``cap`` bounds the episode's total action count, including
    actions taken in earlier rounds on the same session.
    """
    n = len(ast)
    if not 1 <= start_from <= max(n, 1):
        raise ValueError(f"start_from={start_from} outside 1..{n}")
    state = ExecutionState(actions_taken=session.step_count)
    if start_from > 1:
        if prior is None or start_from not in prior.checkpoints:
            raise ValueError(f"no checkpoint for sub-goal {start_from}")
        state.bindings = copy.deepcopy(prior.checkpoints[start_from].bindings)
        state.checkpoints = {k: v for k, v in prior.checkpoints.items() if k < start_from}
    else:
        state.bindings = {ast.start_param: start_from, ast.agent_param: None}
    state.bindings[ast.start_param] = start_from
    ctx = context if context is not None else EpisodeContext(session.initial_observation)
    run = _Run(ast, session, state, ctx, cap, ask, substitute, round_index)

    def outcome(status, report=None, fault=None) -> EpisodeOutcome:
        return EpisodeOutcome(status, ctx, state, report, fault)

    if session.goal_met():
        return outcome(Status.SUCCESS)
    if session.step_count >= cap:
        return outcome(Status.ACTION_CAP_REACHED)
    try:
        for sg in ast.subgoals[start_from - 1 :]:
            state.current_subgoal = sg.index
            state.checkpoints[sg.index] = Checkpoint(copy.deepcopy(state.bindings), session.step_count)
            try:
                run.run_block(sg.body)
                if sg.assertion is not None:
                    run.check(sg.assertion)
            except RuntimeFault as exc:
                report = build_report(sg.index, str(exc), session, ctx)
                return outcome(Status.RUNTIME_FAULT, report, str(exc))
        report = build_report(
            n, "The plan finished but the task is not complete yet.", session, ctx
        )
        return outcome(Status.ASSERTION_FAILED, report)
    except _Halt as halt:
        return outcome(halt.status, halt.report, halt.fault)
