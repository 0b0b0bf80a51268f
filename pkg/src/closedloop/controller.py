"""Episode orchestration for the open, implicit and explicit loop modes."""

from __future__ import annotations

import copy
import enum
import logging
import re
from dataclasses import dataclass, field

from .env import EnvSession, TaskInstance
from .interpreter import (
    AssertionReport,
    EpisodeContext,
    EpisodeOutcome,
    RuntimeFault,
    Status,
    execute,
)
from .llm import Gateway, LlmError
from .plan import (
    ParseError,
    PlanAst,
    diff_first_divergence,
    extract_code,
    has_errors,
    parse_plan,
    render_diagnostics,
    render_plan,
    same_structure,
    validate_plan,
)

log = logging.getLogger(__name__)

PLAN_GENERATION_FAILED = "plan_generation_failed"
LLM_ERROR = "llm_error"
NO_EXEMPLARS = "(no examples are available for this task)"
PREVIOUS_OMITTED = "(the previous solution is not shown; rely on the error report below)"


class LoopMode(str, enum.Enum):
    OPEN = "open"
    IMPLICIT = "implicit"
    EXPLICIT = "explicit"


@dataclass
class ControllerConfig:
    mode: LoopMode = LoopMode.EXPLICIT
    max_refinement_rounds: int = 4
    max_repair_attempts: int = 2
    action_cap: int = 50
    use_expert_samples: bool = True
    use_skills: bool = True
    include_previous_solution: bool = False
    resume: bool = True  # False: reset the world and rerun revisions from step 1

    def __post_init__(self):
        self.mode = LoopMode(self.mode)
        for name in ("max_refinement_rounds", "max_repair_attempts", "action_cap"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


class PlanGenerationFailed(Exception):
    pass


@dataclass
class RoundTrace:
    round: int
    start_from: int
    plan_text: str
    status: str
    actions: int
    report: str | None = None


@dataclass
class EpisodeRecord:
    task: TaskInstance
    mode: LoopMode
    status: str
    plans: list[PlanAst] = field(default_factory=list)
    refinement_rounds: int = 0
    llm_calls: int = 0
    env_actions: int = 0
    start_froms: list[int] = field(default_factory=list)
    rounds: list[RoundTrace] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)
    stop_reason: str = ""
    error: str | None = None

    @property
    def success(self) -> bool:
        return self.status == Status.SUCCESS.value

    @property
    def success_round(self) -> int | None:
        """Smallest round budget under which this episode succeeds."""
        return self.refinement_rounds if self.success else None

    @property
    def final_plan(self) -> PlanAst | None:
        return self.plans[-1] if self.plans else None

    def to_dict(self) -> dict:
        return {
            "task_id": self.task.task_id,
            "task": self.task.to_dict(),
            "mode": self.mode.value,
            "status": self.status,
            "stop_reason": self.stop_reason,
            "error": self.error,
            "refinement_rounds": self.refinement_rounds,
            "llm_calls": self.llm_calls,
            "env_actions": self.env_actions,
            "start_froms": list(self.start_froms),
            "rounds": [vars(r).copy() for r in self.rounds],
            "steps": list(self.steps),
        }


# -- model-facing operations -------------------------------------------------

_Q1 = re.compile(r"question\s*1\s*:\s*(yes|no)\b", re.IGNORECASE)
_Q2 = re.compile(r"question\s*2\s*:", re.IGNORECASE)


def _task_subs(session: EnvSession) -> dict[str, str]:
    return {
        "action_list": session.catalog.describe(),
        "receptacle_list": ", ".join(session.receptacle_ids),
        "task": session.task.goal_text,
    }


def code_check(candidate: str, diagnostics: str, gateway: Gateway, subs: dict[str, str]) -> str:
    """Ask the model to repair ``candidate``; keep it unless the model says Yes."""
    response = gateway.ask("code_check", {**subs, "candidate": candidate, "error_msg": diagnostics})
    q1 = _Q1.search(response)
    q2 = _Q2.search(response)
    if not q1 or q1.group(1).lower() != "yes" or not q2:
        return candidate
    fixed = response[q2.end() :].strip()
    return extract_code(fixed) if fixed else candidate


def check_candidate(text: str, catalog) -> tuple[PlanAst | None, str]:
    """Parse and validate; returns the plan or the diagnostics text."""
    try:
        ast = parse_plan(extract_code(text))
    except ParseError as exc:
        return None, f"SyntaxError: {exc}"
    diags = validate_plan(ast, catalog)
    if has_errors(diags):
        return None, render_diagnostics(d for d in diags if d.severity == "error")
    return ast, ""


def repair(text: str, gateway: Gateway, config: ControllerConfig, session: EnvSession) -> PlanAst:
    subs = _task_subs(session)
    for attempt in range(config.max_repair_attempts + 1):
        ast, problems = check_candidate(text, session.catalog)
        if ast is not None:
            return ast
        if attempt == config.max_repair_attempts:
            raise PlanGenerationFailed(problems)
        text = code_check(extract_code(text), problems, gateway, subs)
    raise AssertionError("unreachable")


def generate_initial_plan(
    session: EnvSession, exemplars: list[str], gateway: Gateway, config: ControllerConfig
) -> PlanAst:
    subs = {**_task_subs(session), "sample": "\n\n".join(exemplars) if exemplars else NO_EXEMPLARS}
    return repair(gateway.ask("initial_planning", subs), gateway, config, session)


def resolve_ask_llm(question: str, observation: str, gateway: Gateway) -> str:
    """One-line answer from the model; an empty answer is a runtime fault."""
    response = gateway.ask("ask_llm", {"question": question, "observation": observation}, stop=("\n",))
    for line in response.splitlines():
        value = line.strip().strip("'\"`").rstrip(".").strip("'\"`").strip()
        if value:
            return value
    raise RuntimeFault(f"the model gave no answer to: {question}")


_INT = re.compile(r"-?\d+")


def parse_start_from(response: str, n_new: int) -> int | None:
    m = _INT.search(response)
    if not m:
        return None
    value = int(m.group(0))
    return value if 1 <= value <= n_new else None


def out_of_plan_refine(
    session: EnvSession,
    report: AssertionReport,
    prev_plan: PlanAst,
    exemplars: list[str],
    gateway: Gateway,
    config: ControllerConfig,
) -> tuple[PlanAst, int]:
    """Revise the whole plan from the failure report and pick the resume step.

    Returns ``start_from = len(plan) + 1`` when the revision is structurally
    identical to ``prev_plan``; callers treat that as an unproductive round.
    """
    previous = render_plan(prev_plan) if config.include_previous_solution else PREVIOUS_OMITTED
    subs = {
        **_task_subs(session),
        "sample": "\n\n".join(exemplars) if exemplars else NO_EXEMPLARS,
        "previous_solution": previous,
        "error_msg": report.render(),
    }
    revised = repair(gateway.ask("refinement", subs), gateway, config, session)
    if same_structure(prev_plan, revised):
        return revised, len(revised) + 1
    answer = gateway.ask(
        "start_from",
        {
            "error_msg": report.render(),
            "previous_solution": render_plan(prev_plan),
            "revised_solution": render_plan(revised),
        },
    )
    start = parse_start_from(answer, len(revised))
    if start is None:
        start = min(diff_first_divergence(prev_plan, revised), len(revised))
    # Checkpoints only exist for sub-goals entered before the failure.
    return revised, min(start, report.failing_subgoal)


# -- episode loop ------------------------------------------------------------


def _substitute_fn(gateway: Gateway, session: EnvSession):
    subs = _task_subs(session)

    def substitute(report: AssertionReport) -> str:
        return gateway.ask("act", {**subs, "error_msg": report.render()})

    return substitute


def run_episode(
    config: ControllerConfig,
    session: EnvSession,
    gateway: Gateway,
    exemplars: list[str] | None = None,
) -> EpisodeRecord:
    exemplars = list(exemplars or [])
    record = EpisodeRecord(task=session.task, mode=config.mode, status=PLAN_GENERATION_FAILED)
    pristine = copy.deepcopy(session.state)
    ask = lambda question, observation: resolve_ask_llm(question, observation, gateway)  # noqa: E731
    substitute = _substitute_fn(gateway, session) if config.mode is LoopMode.IMPLICIT else None
    ctx = EpisodeContext(session.initial_observation)
    spent = 0  # actions on sessions discarded by a from-scratch restart

    def run(plan: PlanAst, start: int, prior, round_index: int) -> EpisodeOutcome:
        before_entries = len(ctx.entries)
        before_steps = session.step_count
        outcome = execute(
            plan,
            session,
            start_from=start,
            prior=prior,
            cap=config.action_cap,
            ask=ask,
            substitute=substitute,
            context=ctx,
            round_index=round_index,
        )
        for offset, entry in enumerate(ctx.entries[before_entries:]):
            record.steps.append(
                {
                    "round": round_index,
                    "subgoal": entry.subgoal,
                    "step": spent + before_steps + offset + 1,
                    "action": entry.action,
                    "observation": entry.observation,
                    "goal_met": session.goal_log[before_steps + offset],
                    "substitute": entry.substitute,
                }
            )
        record.start_froms.append(start)
        record.rounds.append(
            RoundTrace(
                round_index,
                start,
                render_plan(plan),
                outcome.status.value,
                session.step_count - before_steps,
                outcome.report.render() if outcome.report else None,
            )
        )
        record.status = outcome.status.value
        return outcome

    try:
        try:
            plan = generate_initial_plan(session, exemplars, gateway, config)
        except PlanGenerationFailed as exc:
            record.error = str(exc)
            record.stop_reason = "initial plan could not be repaired"
            return record
        record.plans.append(plan)
        outcome = run(plan, 1, None, 0)
        while (
            config.mode is LoopMode.EXPLICIT
            and outcome.status in (Status.ASSERTION_FAILED, Status.RUNTIME_FAULT)
        ):
            if record.refinement_rounds >= config.max_refinement_rounds:
                record.stop_reason = "refinement budget exhausted"
                break
            try:
                revised, start = out_of_plan_refine(session, outcome.report, plan, exemplars, gateway, config)
            except PlanGenerationFailed as exc:
                record.error = str(exc)
                record.stop_reason = "revised plan could not be repaired"
                break
            if start > len(revised):
                record.stop_reason = "refinement unproductive (plan unchanged)"
                break
            record.refinement_rounds += 1
            record.plans.append(revised)
            prior = outcome.final_state
            if not config.resume:
                spent += session.step_count
                session.state = copy.deepcopy(pristine)
                session.interaction_log.clear()
                session.goal_log.clear()
                ctx.entries.clear()
                start, prior = 1, None
            plan = revised
            outcome = run(plan, start, prior, record.refinement_rounds)
        if not record.stop_reason:
            record.stop_reason = outcome.status.value
    except LlmError as exc:
        record.status = LLM_ERROR
        record.error = str(exc)
        record.stop_reason = "model call failed"
    finally:
        record.llm_calls = gateway.calls
        record.env_actions = spent + session.step_count
    return record
