"""Hand-built worlds and plans for end-to-end scenarios."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from ..env import (
    RECEPTACLE_LAYOUT,
    EnvSession,
    HouseholdState,
    ObjectAttrs,
    Receptacle,
    TaskInstance,
    TaskType,
    initial_observation,
)

LETTUCE_SEED = 0

# Contents per receptacle; the countertop 2 line is the one the scenario turns on.
_LETTUCE_CONTENTS = {
    "countertop 1": ["bread 1", "spatula 1"],
    "countertop 2": ["knife 1", "lettuce 1", "saltshaker 2", "soapbottle 1"],
    "countertop 3": ["apple 1", "saltshaker 1"],
    "cabinet 1": ["plate 1"],
    "cabinet 2": ["mug 1"],
    "drawer 1": ["fork 1"],
    "drawer 2": ["spoon 1"],
    "shelf 1": ["vase 1"],
    "fridge 1": ["egg 1", "tomato 1"],
    "sidetable 1": ["desklamp 1", "keychain 1"],
    "desk 1": ["book 1"],
    "garbagecan 1": ["potato 1"],
}


def lettuce_task() -> tuple[TaskInstance, HouseholdState, str]:
    """The clean-lettuce kitchen: lettuce 1 waits on countertop 2."""
    receptacles = {}
    for cls, _, hi, openable in RECEPTACLE_LAYOUT:
        count = min(hi, 2) if cls in ("cabinet", "drawer", "shelf") else hi
        if cls == "shelf":
            count = 1
        for n in range(1, count + 1):
            rid = f"{cls} {n}"
            receptacles[rid] = Receptacle(openable=openable, contents=list(_LETTUCE_CONTENTS.get(rid, [])))
    objects = {
        oid: ObjectAttrs(lamp=oid.startswith("desklamp"))
        for contents in _LETTUCE_CONTENTS.values()
        for oid in contents
    }
    state = HouseholdState(receptacles=receptacles, objects=objects)
    task = TaskInstance(TaskType.CLEAN, "lettuce", "diningtable 1", LETTUCE_SEED)
    return task, state, initial_observation(state, task)


def lettuce_session() -> EnvSession:
    task, state, obs = lettuce_task()
    return EnvSession(task, state, obs)


@lru_cache(maxsize=None)
def load_plan_text(name: str) -> str:
    return resources.files(__name__).joinpath(f"{name}.plan").read_text(encoding="utf-8")


def lettuce_queues() -> dict[str, list[str]]:
    """Scripted model responses for the clean-lettuce episode."""
    return {
        "initial_planning": [load_plan_text("lettuce_initial")],
        "ask_llm": ["lettuce 1", "lettuce 1"],
        "refinement": [load_plan_text("lettuce_revised")],
        "start_from": ["3"],
    }
