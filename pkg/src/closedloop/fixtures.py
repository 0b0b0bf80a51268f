"""Oracle plans and fault-injected scripted responses for the benchmark suites.

Each household task gets a correct plan built from world knowledge. A fault
picked from the task seed is then injected into the plan the "model" proposes
first:

* ``F0``: no fault.
* ``F1``: the move to the appliance (or to the target) before the key action is
  missing. Explicit mode repairs it in one round, and implicit mode can patch
  it with two substitute actions.
* ``F2``: every receptacle holding the target object is missing from the search
  list. The search fails, so the plan has to be revised from step 1.
* ``F21``: both faults, fixed one per round.

Response queues are literal text, so they can be written out as fixture files.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from pathlib import Path

from .env import (
    APPLIANCE,
    LAMP_CLASS,
    HouseholdState,
    TaskInstance,
    TaskType,
    class_of,
    generate_task,
)
from .llm.backends import join_fixture

FAULT_CYCLE = ("F0", "F1", "F1", "F2", "F21")
LAMP_ID = f"{LAMP_CLASS} 1"
FIX_STEP = 4  # the sub-goal an F1 fault lands in, for every task type

VERB = {TaskType.CLEAN: "clean", TaskType.HEAT: "heat", TaskType.COOL: "cool"}


def fault_for(seed: int) -> str:
    return FAULT_CYCLE[seed % len(FAULT_CYCLE)]


def default_search(task: TaskInstance, state: HouseholdState) -> list[str]:
    """Every receptacle except the destination, in layout order."""
    return [r for r in state.receptacles if r != task.target_receptacle]


def _quote(items) -> str:
    return "[" + ", ".join(f"'{i}'" for i in items) + "]"


_HEAD = """def solution(agent, start_from=1):
    # General plan: I need to find $a_obj, take it, $plan_tail.
    # [Step 1] List the receptacles where $a_obj might be
    recep_to_check = $search
    assert recep_to_check, 'There is no receptacle to check.'
    # [Step 2] Visit each receptacle until I see $a_obj
    for recep in recep_to_check:
        observation = goto(recep)
        if 'closed' in observation:
            observation = open(recep)
        if '$obj' in observation:
            break
    assert '$obj' in observation, f'I cannot find $a_obj in {recep_to_check}.'
    # [Step 3] Identify the $obj I just found and take it
    found_obj = ask_llm('what is the identifier of the $obj?', observation)
    take(found_obj, recep)
    assert holding == found_obj, f'I cannot take {found_obj} from {recep}.'
"""

_PUT = """    # [Step $k] Go to the $target and put the $obj there
$goto    put($var, '$target')
    assert 'You put' in last_observation, f'I cannot put {$var} on $target.'
"""

_TREAT = """    # [Step 4] Go to the $app and $verb the $obj
$goto    $verb(found_obj, '$app')
    assert 'You $verb' in last_observation, f'I cannot $verb {found_obj} with $app.'
"""

_EXAMINE = """    # [Step 4] Go to the $target and turn on the desklamp
$goto    use('$lamp')
    assert 'You turn on' in last_observation, f'I cannot examine {found_obj} with the desklamp.'
"""

_SECOND = """    # [Step 5] Look for a second $obj, starting where I found the first one
    second_to_check = $second
    for recep in second_to_check:
        observation = goto(recep)
        if 'closed' in observation:
            observation = open(recep)
        if '$obj' in observation:
            break
    assert '$obj' in observation, f'I cannot find a second $obj in {second_to_check}.'
    # [Step 6] Identify the second $obj and take it
    second_obj = ask_llm('what is the identifier of the $obj?', observation)
    take(second_obj, recep)
    assert holding == second_obj, f'I cannot take {second_obj} from {recep}.'
"""


def _sub(template: str, **values) -> str:
    if "obj" in values:
        article = "an" if values["obj"][0] in "aeiou" else "a"
        values["a_obj"] = f"{article} {values['obj']}"
    return string.Template(template).substitute(**values)


def _first_find(state: HouseholdState, search: list[str], cls: str, skip=()) -> tuple[int, str] | None:
    for i, rid in enumerate(search):
        for obj in state.receptacles[rid].contents:
            if class_of(obj) == cls and obj not in skip:
                return i, obj
    return None


def oracle_plan(task: TaskInstance, state: HouseholdState, search: list[str], *, drop_goto: bool = False) -> str:
    """Render a plan for ``task`` that searches ``search`` in order."""
    obj = task.target_object_class
    target = task.target_receptacle
    tt = task.task_type
    if tt is TaskType.PICK:
        tail = f"and put it on the {target}"
    elif tt in VERB:
        tail = f"{VERB[tt]} it with the {APPLIANCE[tt]}, and put it on the {target}"
    elif tt is TaskType.EXAMINE:
        tail = f"and look at it under the desklamp on the {target}"
    else:
        tail = f"put it on the {target}, then do the same with a second one"
    text = _sub(_HEAD, obj=obj, search=_quote(search), plan_tail=tail)

    def put(k: int, var: str, skip_goto: bool) -> str:
        goto = "" if skip_goto else f"    goto('{target}')\n"
        return _sub(_PUT, k=k, goto=goto, var=var, target=target, obj=obj)

    if tt is TaskType.PICK:
        text += put(4, "found_obj", drop_goto)
    elif tt in VERB:
        app = f"{APPLIANCE[tt]} 1"
        goto = "" if drop_goto else f"    goto('{app}')\n"
        text += _sub(_TREAT, app=app, verb=VERB[tt], obj=obj, goto=goto)
        text += put(5, "found_obj", False)
    elif tt is TaskType.EXAMINE:
        goto = "" if drop_goto else f"    goto('{target}')\n"
        text += _sub(_EXAMINE, target=target, lamp=LAMP_ID, goto=goto)
    else:
        text += put(4, "found_obj", drop_goto)
        first = _first_find(state, search, obj)
        second = search[first[0] :] if first else search
        text += _sub(_SECOND, obj=obj, second=_quote(second))
        text += put(7, "second_obj", False)
    return text


@dataclass(frozen=True)
class Answers:
    """What a well-behaved model would say for a given search order."""

    asks: tuple[str, ...]
    first_receptacle: str


def oracle_answers(task: TaskInstance, state: HouseholdState, search: list[str]) -> Answers:
    cls = task.target_object_class
    first = _first_find(state, search, cls)
    if first is None:
        raise ValueError(f"no {cls} reachable from the search list")
    i, obj1 = first
    asks = [obj1]
    if task.task_type is TaskType.PICK_TWO:
        second = _first_find(state, search[i:], cls, skip={obj1})
        if second is None:
            raise ValueError(f"no second {cls} reachable")
        asks.append(second[1])
    return Answers(tuple(asks), search[i])


def _substitutes(task: TaskInstance, obj_id: str) -> list[str]:
    tt = task.task_type
    target = task.target_receptacle
    if tt in VERB:
        app = f"{APPLIANCE[tt]} 1"
        return [f"goto('{app}')", f"{VERB[tt]}('{obj_id}', '{app}')"]
    if tt is TaskType.EXAMINE:
        return [f"goto('{target}')", f"use('{LAMP_ID}')"]
    return [f"goto('{target}')", f"put('{obj_id}', '{target}')"]


def ablation_queues(task: TaskInstance, state: HouseholdState, fault: str | None = None) -> dict[str, list[str]]:
    """Scripted responses for every prompt kind the three modes can issue."""
    fault = fault or fault_for(task.seed)
    good = default_search(task, state)
    holders = [r for r in good if any(class_of(o) == task.target_object_class for o in state.receptacles[r].contents)]
    partial = [r for r in good if r not in holders]
    fixed = holders + partial
    asks = list(oracle_answers(task, state, good if fault in ("F0", "F1") else fixed).asks)
    q: dict[str, list[str]] = {"ask_llm": asks}
    if fault == "F0":
        q["initial_planning"] = [oracle_plan(task, state, good)]
    elif fault == "F1":
        q["initial_planning"] = [oracle_plan(task, state, good, drop_goto=True)]
        q["refinement"] = [oracle_plan(task, state, good)]
        q["start_from"] = [str(FIX_STEP)]
        q["act"] = _substitutes(task, asks[0])
    elif fault == "F2":
        q["initial_planning"] = [oracle_plan(task, state, partial)]
        q["refinement"] = [oracle_plan(task, state, fixed)]
        q["start_from"] = ["1"]
        q["act"] = [f"goto('{holders[0]}')"]
    elif fault == "F21":
        q["initial_planning"] = [oracle_plan(task, state, partial, drop_goto=True)]
        q["refinement"] = [oracle_plan(task, state, fixed, drop_goto=True), oracle_plan(task, state, fixed)]
        q["start_from"] = ["1", str(FIX_STEP)]
        q["act"] = [f"goto('{holders[0]}')"]
    else:
        raise ValueError(f"unknown fault {fault!r}")
    return q


def expected_rates(faults: list[str]) -> dict[str, float]:
    """Fixture bookkeeping: which faults each mode can overcome by design."""
    n = len(faults)
    return {
        "open": sum(f == "F0" for f in faults) / n,
        "implicit": sum(f in ("F0", "F1") for f in faults) / n,
    }


# -- skill-discovery fixtures -----------------------------------------------

SKILL_MARKER = "# Skill:"
# Task types whose zero-shot plan is already correct in the skill setup.
ZERO_SHOT_OK = (TaskType.PICK, TaskType.PICK_TWO)


def skill_queues(task: TaskInstance, state: HouseholdState) -> dict[str, list]:
    """Responses that only reach the goal when a skill exemplar is in the prompt.

    Without one, the model keeps proposing a plan that skips the move before
    the key action, and its revision is the same plan, so refinement stalls.
    Pick and Pick two are solved zero-shot, so their skills cannot help.
    """
    good = default_search(task, state)
    plan = oracle_plan(task, state, good)
    weak = plan if task.task_type in ZERO_SHOT_OK else oracle_plan(task, state, good, drop_goto=True)
    asks = list(oracle_answers(task, state, good).asks)
    cond = {"if_prompt_contains": SKILL_MARKER, "then": plan, "else": weak}
    return {
        "initial_planning": [cond],
        "refinement": [weak] * 4,
        "ask_llm": asks * 2,
    }


# -- on-disk fixtures --------------------------------------------------------


def write_fixture_dir(root: str | Path, queues: dict[str, list]) -> None:
    import json

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for kind, items in queues.items():
        if all(isinstance(i, str) for i in items):
            (root / f"{kind}.txt").write_text(join_fixture(items) if items else "", encoding="utf-8")
        else:
            (root / f"{kind}.json").write_text(json.dumps(items, indent=2) + "\n", encoding="utf-8")


def write_ablation_fixtures(root: str | Path, tasks: list[tuple[str, int]]) -> list[str]:
    written = []
    for task_type, seed in tasks:
        task, state, _ = generate_task(task_type, seed)
        write_fixture_dir(Path(root) / task.task_id, ablation_queues(task, state))
        written.append(task.task_id)
    return written


_ID = re.compile(r"\b([a-z]+ \d+)\b")


def answer_from_observation(prompt: str) -> str:
    """Independent ask_llm oracle: first object id of the asked class in the prompt."""
    q = re.search(r"identifier of the ([a-z]+)\?", prompt)
    obs = re.search(r"Observation: (.*)", prompt)
    if not q or not obs:
        return ""
    for m in _ID.finditer(obs.group(1)):
        if m.group(1).rsplit(" ", 1)[0] == q.group(1):
            return m.group(1)
    return ""
