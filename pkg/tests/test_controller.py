from __future__ import annotations

import pytest

from closedloop.controller import (
    ControllerConfig,
    LoopMode,
    PlanGenerationFailed,
    code_check,
    out_of_plan_refine,
    parse_start_from,
    repair,
    resolve_ask_llm,
    run_episode,
)
from closedloop.env import TaskType, generate_task, EnvSession
from closedloop.fixtures import ablation_queues
from closedloop.interpreter import RuntimeFault, Status, execute
from closedloop.llm import Gateway, ScriptedBackend, Transcript
from closedloop.plan import parse_plan
from closedloop.scenarios import lettuce_queues, lettuce_session, load_plan_text

GOOD = "def solution(agent, start_from=1):\n    # [Step 1] go\n    goto('desk 1')\n"
BAD = "def solution(agent, start_from=1):\n    # [Step 1] go\n    fly_to('desk 1')\n"


def gateway(queues, **kw) -> Gateway:
    return Gateway(ScriptedBackend(queues), **kw)


@pytest.mark.parametrize(
    "reply,expected",
    [
        (f"Question 1: Yes\nQuestion 2:\n```python\n{GOOD}```", GOOD),
        ("Question 1: No\nQuestion 2: nothing to fix", BAD),
        ("I think it looks fine.", BAD),
        ("question 1: yes, it has a bug", BAD),
    ],
)
def test_code_check_replies(reply, expected):
    gw = gateway({"code_check": [reply]})
    assert code_check(BAD, "ERROR 1:1 unknown action", gw, {"task": "t", "action_list": ""}) == expected


def test_repair_fixes_an_invalid_candidate():
    session = lettuce_session()
    gw = gateway({"code_check": [f"Question 1: Yes\nQuestion 2:\n{GOOD}"]})
    ast = repair(BAD, gw, ControllerConfig(), session)
    assert ast.subgoal(1).body[0].action == "goto"
    assert gw.calls == 1


def test_valid_candidates_skip_the_code_check():
    gw = gateway({})
    repair(GOOD, gw, ControllerConfig(), lettuce_session())
    assert gw.calls == 0


def test_repair_gives_up_after_the_attempt_budget():
    gw = gateway({"code_check": ["Question 1: No\nQuestion 2:"] * 5})
    with pytest.raises(PlanGenerationFailed, match="fly_to"):
        repair(BAD, gw, ControllerConfig(max_repair_attempts=2), lettuce_session())
    assert gw.calls == 2


def test_syntax_errors_are_sent_to_the_code_check():
    gw = gateway({"code_check": [f"Question 1: Yes\nQuestion 2:\n{GOOD}"]})
    repair("def solution(agent, start_from=1):\n    goto(", gw, ControllerConfig(), lettuce_session())
    assert "SyntaxError" in gw.transcript.records[0].prompt


@pytest.mark.parametrize("reply", ["lettuce 1", "'lettuce 1'.", "\n  \"lettuce 1\"\nmore text", "`lettuce 1`"])
def test_ask_llm_answers_are_normalized(reply):
    assert resolve_ask_llm("which lettuce?", "obs", gateway({"ask_llm": [reply]})) == "lettuce 1"


def test_empty_ask_llm_answer_is_a_runtime_fault():
    with pytest.raises(RuntimeFault):
        resolve_ask_llm("which lettuce?", "obs", gateway({"ask_llm": ["  \n"]}))


@pytest.mark.parametrize(
    "reply,n,expected",
    [("3", 6, 3), ("Start from step 2.", 6, 2), ("step 99", 6, None), ("0", 6, None), ("none", 6, None)],
)
def test_parse_start_from(reply, n, expected):
    assert parse_start_from(reply, n) == expected


def _failed_lettuce():
    session = lettuce_session()
    ast = parse_plan(load_plan_text("lettuce_initial"))
    out = execute(ast, session, ask=lambda q, o: "lettuce 1")
    return session, ast, out


def test_out_of_range_start_from_falls_back_to_the_diff():
    session, ast, out = _failed_lettuce()
    gw = gateway({"refinement": [load_plan_text("lettuce_revised")], "start_from": ["step 99"]})
    revised, start = out_of_plan_refine(session, out.report, ast, [], gw, ControllerConfig())
    assert start == 3 and len(revised) == 6


def test_start_from_is_clamped_to_the_failing_subgoal():
    session, ast, out = _failed_lettuce()
    gw = gateway({"refinement": [load_plan_text("lettuce_revised")], "start_from": ["6"]})
    _, start = out_of_plan_refine(session, out.report, ast, [], gw, ControllerConfig())
    assert start == out.report.failing_subgoal == 4


def test_identical_revision_is_unproductive():
    session, ast, out = _failed_lettuce()
    gw = gateway({"refinement": [load_plan_text("lettuce_initial")]})
    revised, start = out_of_plan_refine(session, out.report, ast, [], gw, ControllerConfig())
    assert start == len(revised) + 1
    assert gw.calls == 1


def test_refinement_prompt_carries_the_report_and_hides_the_old_plan():
    session, ast, out = _failed_lettuce()
    gw = gateway({"refinement": [load_plan_text("lettuce_revised")], "start_from": ["3"]})
    out_of_plan_refine(session, out.report, ast, ["# Expert sample: x"], gw, ControllerConfig())
    prompt = gw.transcript.records[0].prompt
    assert out.report.render() in prompt and "# Expert sample: x" in prompt
    assert "recep_to_check = ['fridge 1'" not in prompt
    start_prompt = gw.transcript.records[1].prompt
    assert "recep_to_check = ['fridge 1'" in start_prompt


def test_lettuce_episode_end_to_end():
    transcript = Transcript()
    gw = Gateway(ScriptedBackend(lettuce_queues()), transcript=transcript)
    record = run_episode(ControllerConfig(mode=LoopMode.EXPLICIT), lettuce_session(), gw)
    assert record.success and record.refinement_rounds == 1
    assert record.start_froms == [1, 3]
    assert record.llm_calls == len(transcript) == 5
    assert record.env_actions == len(record.steps) == 11
    assert [r.start_from for r in record.rounds] == [1, 3]


def test_resume_false_restarts_from_a_fresh_world():
    gw = Gateway(ScriptedBackend(lettuce_queues()))
    record = run_episode(ControllerConfig(mode=LoopMode.EXPLICIT, resume=False), lettuce_session(), gw)
    assert record.success and record.start_froms == [1, 1]
    assert record.env_actions == 15
    assert [s["step"] for s in record.steps] == list(range(1, 16))


@pytest.mark.parametrize("tt", list(TaskType))
def test_open_equals_explicit_with_zero_budget(tt):
    for seed in range(5):
        task, state, obs = generate_task(tt, seed)
        records = []
        for mode, rounds in ((LoopMode.OPEN, 4), (LoopMode.EXPLICIT, 0)):
            t, s, o = generate_task(tt, seed)
            gw = Gateway(ScriptedBackend(ablation_queues(t, s), strict=False))
            cfg = ControllerConfig(mode=mode, max_refinement_rounds=rounds)
            records.append(run_episode(cfg, EnvSession(t, s, o), gw))
        a, b = records
        assert (a.status, a.steps, a.llm_calls, a.env_actions) == (b.status, b.steps, b.llm_calls, b.env_actions)


def test_unrepairable_initial_plan_is_recorded():
    gw = gateway({"initial_planning": [BAD], "code_check": ["Question 1: No"] * 3})
    record = run_episode(ControllerConfig(), lettuce_session(), gw)
    assert record.status == "plan_generation_failed" and "fly_to" in record.error
    assert record.env_actions == 0 and record.llm_calls == 3


def test_exhausted_script_becomes_an_llm_error():
    queues = lettuce_queues()
    del queues["start_from"]
    gw = gateway(queues)
    record = run_episode(ControllerConfig(), lettuce_session(), gw)
    assert record.status == "llm_error" and "start_from" in record.error
    assert record.llm_calls == len(gw.transcript)


def test_refinement_budget_is_respected():
    gw = gateway({"initial_planning": [load_plan_text("lettuce_initial")], "ask_llm": ["lettuce 1"] * 10,
                  "refinement": [load_plan_text("lettuce_initial").replace("'sinkbasin 1')\n", f"'sinkbasin {n}')\n", 1)
                                 for n in (2, 3, 4)],
                  "start_from": ["4"] * 3})
    record = run_episode(ControllerConfig(max_refinement_rounds=2), lettuce_session(), gw)
    assert not record.success
    assert record.refinement_rounds == 2
    assert record.stop_reason == "refinement budget exhausted"


def test_implicit_mode_uses_substitute_actions():
    task, state, obs = generate_task(TaskType.CLEAN, 1)  # seed 1 is an F1 fault
    gw = Gateway(ScriptedBackend(ablation_queues(task, state)))
    record = run_episode(ControllerConfig(mode=LoopMode.IMPLICIT), EnvSession(task, state, obs), gw)
    assert record.success and record.refinement_rounds == 0
    assert sum(s["substitute"] for s in record.steps) == 2
    assert {r.kind for r in gw.transcript.records} >= {"initial_planning", "act"}


def test_action_cap_status():
    gw = Gateway(ScriptedBackend(lettuce_queues()))
    record = run_episode(ControllerConfig(action_cap=3), lettuce_session(), gw)
    assert record.status == Status.ACTION_CAP_REACHED.value and record.env_actions == 3


def test_config_rejects_negative_budgets():
    with pytest.raises(ValueError):
        ControllerConfig(max_refinement_rounds=-1)
