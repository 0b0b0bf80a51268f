"""Deterministic household text world.

A scaled-down ALFWorld-style simulator: a dozen-odd receptacles, a few dozen
objects, six task types and their goal predicates. Observations use the
ALFWorld phrasing ("On the countertop 2, you see ...", "Nothing happens.")
because plans and prompts match on that text.
"""

from __future__ import annotations

import copy
import enum
import random
from dataclasses import dataclass, field

NOTHING = "Nothing happens."


class TaskType(str, enum.Enum):
    PICK = "Pick"
    CLEAN = "Clean"
    HEAT = "Heat"
    COOL = "Cool"
    EXAMINE = "Examine"
    PICK_TWO = "PickTwo"

    @property
    def label(self) -> str:
        return "Pick two" if self is TaskType.PICK_TWO else self.value

    @property
    def slug(self) -> str:
        return self.value.lower()

    @classmethod
    def parse(cls, text: str) -> "TaskType":
        key = text.replace(" ", "").replace("_", "").lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown task type {text!r}")


GOAL_TEMPLATES = {
    TaskType.PICK: "put some {obj} on the {recep}",
    TaskType.CLEAN: "put some clean {obj} on the {recep}",
    TaskType.HEAT: "put some hot {obj} on the {recep}",
    TaskType.COOL: "put some cool {obj} on the {recep}",
    TaskType.EXAMINE: "examine the {obj} with the desklamp",
    TaskType.PICK_TWO: "put two {obj} on the {recep}",
}

# Appliance a task's object must visit, by receptacle class.
APPLIANCE = {TaskType.CLEAN: "sinkbasin", TaskType.HEAT: "microwave", TaskType.COOL: "fridge"}

TARGET_CLASSES = {
    TaskType.PICK: ["book", "cellphone", "keychain", "watch", "vase", "candle", "spraybottle"],
    TaskType.CLEAN: ["lettuce", "apple", "tomato", "plate", "mug", "spatula"],
    TaskType.HEAT: ["potato", "egg", "apple", "mug", "bread", "tomato"],
    TaskType.COOL: ["tomato", "apple", "lettuce", "bread", "potato", "winebottle"],
    TaskType.EXAMINE: ["book", "cellphone", "creditcard", "keychain", "watch"],
    TaskType.PICK_TWO: ["book", "cellphone", "keychain", "vase", "candle", "spraybottle"],
}

OBJECT_CLASSES = sorted(
    {c for classes in TARGET_CLASSES.values() for c in classes}
    | {"knife", "fork", "spoon", "saltshaker", "soapbottle", "cloth", "towel"}
)

LAMP_CLASS = "desklamp"

# (class, min count, max count, openable)
RECEPTACLE_LAYOUT = [
    ("countertop", 1, 3, False),
    ("cabinet", 2, 3, True),
    ("drawer", 1, 3, True),
    ("shelf", 1, 2, False),
    ("fridge", 1, 1, True),
    ("microwave", 1, 1, True),
    ("sinkbasin", 1, 1, False),
    ("diningtable", 1, 1, False),
    ("sidetable", 1, 1, False),
    ("desk", 1, 1, False),
    ("garbagecan", 1, 1, False),
]

PUT_TARGETS = ["diningtable 1", "sidetable 1", "desk 1", "garbagecan 1"]
LAMP_SPOTS = ["desk 1", "sidetable 1"]


def class_of(entity_id: str) -> str:
    return entity_id.rsplit(" ", 1)[0]


@dataclass
class Receptacle:
    openable: bool
    is_open: bool = False
    contents: list[str] = field(default_factory=list)

    @property
    def accessible(self) -> bool:
        return self.is_open or not self.openable


@dataclass
class ObjectAttrs:
    clean: bool = False
    hot: bool = False
    cold: bool = False
    lamp: bool = False
    used: bool = False


@dataclass
class HouseholdState:
    receptacles: dict[str, Receptacle]
    objects: dict[str, ObjectAttrs]
    agent_location: str = "start"
    held: str | None = None

    def where_is(self, obj: str) -> str | None:
        if self.held == obj:
            return None
        for rid, recep in self.receptacles.items():
            if obj in recep.contents:
                return rid
        raise KeyError(obj)

    def to_dict(self) -> dict:
        return {
            "receptacles": {
                rid: {"openable": r.openable, "is_open": r.is_open, "contents": list(r.contents)}
                for rid, r in self.receptacles.items()
            },
            "objects": {oid: vars(attrs).copy() for oid, attrs in self.objects.items()},
            "agent_location": self.agent_location,
            "held": self.held,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HouseholdState":
        return cls(
            receptacles={rid: Receptacle(**r) for rid, r in data["receptacles"].items()},
            objects={oid: ObjectAttrs(**a) for oid, a in data["objects"].items()},
            agent_location=data["agent_location"],
            held=data["held"],
        )


@dataclass(frozen=True)
class TaskInstance:
    task_type: TaskType
    target_object_class: str
    target_receptacle: str
    seed: int
    goal_text: str = ""

    def __post_init__(self):
        if not self.goal_text:
            text = GOAL_TEMPLATES[self.task_type].format(
                obj=self.target_object_class, recep=class_of(self.target_receptacle)
            )
            object.__setattr__(self, "goal_text", text)

    @property
    def task_id(self) -> str:
        return f"{self.task_type.slug}-{self.seed:04d}"

    @property
    def signature(self) -> str:
        """Task type plus goal template with object/receptacle classes abstracted."""
        return f"{self.task_type.value}: {GOAL_TEMPLATES[self.task_type]}"

    def to_dict(self) -> dict:
        return {
            "task_type": self.task_type.value,
            "target_object_class": self.target_object_class,
            "target_receptacle": self.target_receptacle,
            "seed": self.seed,
            "goal_text": self.goal_text,
        }


@dataclass(frozen=True)
class ActionSpec:
    name: str
    arity: int
    description: str
    command: str  # text-world command template


class ActionCatalog:
    def __init__(self, specs: list[ActionSpec]):
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ValueError("action names must be unique")
        self.specs = list(specs)
        self._by_name = {s.name: s for s in specs}

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __iter__(self):
        return iter(self.specs)

    def arity(self, name: str) -> int | None:
        spec = self._by_name.get(name)
        return spec.arity if spec else None

    def get(self, name: str) -> ActionSpec:
        return self._by_name[name]

    def describe(self) -> str:
        return "\n".join(f"- {s.name}({', '.join(_arg_names(s))}): {s.description}" for s in self.specs)


def _arg_names(spec: ActionSpec) -> list[str]:
    return ["obj", "recep"][: spec.arity] if spec.arity == 2 else (["recep"] if spec.name in {"goto", "open", "close"} else ["obj"])


HOUSEHOLD_CATALOG = ActionCatalog(
    [
        ActionSpec("goto", 1, "go to a receptacle and observe what is on or in it", "go to {0}"),
        ActionSpec("open", 1, "open a closed receptacle you are at", "open {0}"),
        ActionSpec("close", 1, "close an open receptacle you are at", "close {0}"),
        ActionSpec("take", 2, "pick up an object from the receptacle you are at", "take {0} from {1}"),
        ActionSpec("put", 2, "put the held object in or on the receptacle you are at", "put {0} in/on {1}"),
        ActionSpec("clean", 2, "clean the held object with the sinkbasin you are at", "clean {0} with {1}"),
        ActionSpec("heat", 2, "heat the held object with the microwave you are at", "heat {0} with {1}"),
        ActionSpec("cool", 2, "cool the held object with the fridge you are at", "cool {0} with {1}"),
        ActionSpec("use", 1, "turn on a desklamp at the receptacle you are at", "use {0}"),
    ]
)


class UnknownActionError(ValueError):
    pass


def _listing(items: list[str]) -> str:
    if not items:
        return "nothing"
    named = [f"a {item}" for item in items]
    if len(named) == 1:
        return named[0]
    return ", ".join(named[:-1]) + ", and " + named[-1]


def describe_receptacle(state: HouseholdState, rid: str) -> str:
    recep = state.receptacles[rid]
    if recep.openable and not recep.is_open:
        return f"The {rid} is closed."
    if recep.openable:
        return f"The {rid} is open. In it, you see {_listing(recep.contents)}."
    return f"On the {rid}, you see {_listing(recep.contents)}."


def initial_observation(state: HouseholdState, task: TaskInstance) -> str:
    return (
        "You are in the middle of a room. Looking quickly around you, you see "
        f"{_listing(list(state.receptacles))}.\nYour task is to: {task.goal_text}."
    )


# -- transitions -------------------------------------------------------------


def _apply(state: HouseholdState, action: str, args: tuple) -> str | None:
    """Mutate ``state`` and return the observation, or None for a no-op."""
    if not all(isinstance(a, str) for a in args):
        return None
    here = state.agent_location
    recep = state.receptacles.get(here)
    if action == "goto":
        (rid,) = args
        if rid not in state.receptacles or rid == here:
            return None
        state.agent_location = rid
        return describe_receptacle(state, rid)
    if action in ("open", "close"):
        (rid,) = args
        if rid != here or recep is None or not recep.openable:
            return None
        if action == "open" and not recep.is_open:
            recep.is_open = True
            return f"You open the {rid}. The {rid} is open. In it, you see {_listing(recep.contents)}."
        if action == "close" and recep.is_open:
            recep.is_open = False
            return f"You close the {rid}."
        return None
    if action == "take":
        obj, rid = args
        if (
            rid != here
            or recep is None
            or not recep.accessible
            or obj not in recep.contents
            or state.held is not None
            or state.objects[obj].lamp
        ):
            return None
        recep.contents.remove(obj)
        state.held = obj
        return f"You pick up the {obj} from the {rid}."
    if action == "put":
        obj, rid = args
        if state.held != obj or rid != here or recep is None or not recep.accessible:
            return None
        recep.contents.append(obj)
        state.held = None
        return f"You put the {obj} in/on the {rid}."
    if action in ("clean", "heat", "cool"):
        obj, rid = args
        needed = {"clean": "sinkbasin", "heat": "microwave", "cool": "fridge"}[action]
        if state.held != obj or rid != here or recep is None or class_of(rid) != needed:
            return None
        attrs = state.objects[obj]
        if action == "clean":
            if attrs.clean:
                return None
            attrs.clean = True
        elif action == "heat":
            if attrs.hot and not attrs.cold:
                return None
            attrs.hot, attrs.cold = True, False
        else:
            if attrs.cold and not attrs.hot:
                return None
            attrs.hot, attrs.cold = False, True
        return f"You {action} the {obj} using the {rid}."
    if action == "use":
        (obj,) = args
        if recep is None or obj not in recep.contents or not state.objects[obj].lamp:
            return None
        if state.objects[obj].used:
            return None
        state.objects[obj].used = True
        return f"You turn on the {obj}."
    raise UnknownActionError(action)


def check_goal(task: TaskInstance, state: HouseholdState) -> bool:
    """Goal predicate for ``task`` over a raw world state."""
    cls = task.target_object_class
    if task.task_type is TaskType.EXAMINE:
        if state.held is None or class_of(state.held) != cls:
            return False
        recep = state.receptacles.get(state.agent_location)
        if recep is None:
            return False
        return any(state.objects[o].lamp and state.objects[o].used for o in recep.contents)
    inside = [o for o in state.receptacles[task.target_receptacle].contents if class_of(o) == cls]
    if task.task_type is TaskType.CLEAN:
        inside = [o for o in inside if state.objects[o].clean]
    elif task.task_type is TaskType.HEAT:
        inside = [o for o in inside if state.objects[o].hot]
    elif task.task_type is TaskType.COOL:
        inside = [o for o in inside if state.objects[o].cold]
    need = 2 if task.task_type is TaskType.PICK_TWO else 1
    return len(set(inside)) >= need


@dataclass(frozen=True)
class Introspection:
    location: str
    held: str | None
    last_interactions: tuple[tuple[str, str], ...]


class EnvSession:
    """One live episode. Not thread-safe: each runner owns its own session."""

    catalog = HOUSEHOLD_CATALOG

    def __init__(self, task: TaskInstance, state: HouseholdState, observation: str | None = None):
        self.task = task
        self.state = state
        self.initial_observation = observation or initial_observation(state, task)
        self.interaction_log: list[tuple[str, str]] = []
        self.goal_log: list[bool] = []

    @property
    def step_count(self) -> int:
        return len(self.interaction_log)

    @property
    def location(self) -> str:
        return self.state.agent_location

    @property
    def holding(self) -> str | None:
        return self.state.held

    @property
    def last_observation(self) -> str:
        if self.interaction_log:
            return self.interaction_log[-1][1]
        return self.initial_observation

    @property
    def receptacle_ids(self) -> list[str]:
        return list(self.state.receptacles)

    def command_text(self, action: str, args: tuple) -> str:
        return self.catalog.get(action).command.format(*args)

    def step(self, action: str, args: tuple | list = ()) -> str:
        """Apply one action; illegal actions leave the world as-is."""
        args = tuple(args)
        spec_arity = self.catalog.arity(action)
        if spec_arity is None:
            raise UnknownActionError(f"unknown action '{action}'")
        if spec_arity != len(args):
            raise UnknownActionError(f"action '{action}' takes {spec_arity} argument(s), got {len(args)}")
        before = copy.deepcopy(self.state)
        observation = _apply(self.state, action, args)
        if observation is None:
            self.state = before
            observation = NOTHING
        self.interaction_log.append((self.command_text(action, args), observation))
        self.goal_log.append(check_goal(self.task, self.state))
        return observation

    def goal_met(self) -> bool:
        return check_goal(self.task, self.state)

    def introspect(self, n: int = 3) -> Introspection:
        tail = tuple(self.interaction_log[-n:]) if n > 0 else ()
        return Introspection(self.location, self.holding, tail)

    def trace_records(self) -> list[dict]:
        return [
            {"step": i + 1, "action": a, "observation": o, "goal_met": g}
            for i, ((a, o), g) in enumerate(zip(self.interaction_log, self.goal_log))
        ]


def goal_met(session: EnvSession) -> bool:
    return session.goal_met()


def introspect(session: EnvSession) -> Introspection:
    return session.introspect()


# -- generation --------------------------------------------------------------


def generate_task(task_type: TaskType | str, seed: int) -> tuple[TaskInstance, HouseholdState, str]:
    """Build a seeded world for ``task_type``.

    Same (type, seed) always yields the same task, world and observation.
    """
    task_type = TaskType.parse(task_type) if isinstance(task_type, str) else task_type
    rng = random.Random(f"{task_type.value}:{seed}")

    receptacles: dict[str, Receptacle] = {}
    for cls, lo, hi, openable in RECEPTACLE_LAYOUT:
        for n in range(1, rng.randint(lo, hi) + 1):
            receptacles[f"{cls} {n}"] = Receptacle(openable=openable)

    target_class = rng.choice(TARGET_CLASSES[task_type])
    lamp_spot = rng.choice(LAMP_SPOTS)
    if task_type is TaskType.EXAMINE:
        target_recep = lamp_spot
    else:
        target_recep = rng.choice(PUT_TARGETS)

    excluded = {target_recep}
    if task_type in APPLIANCE:
        excluded.add(f"{APPLIANCE[task_type]} 1")
    eligible = [r for r in receptacles if r not in excluded]

    objects: dict[str, ObjectAttrs] = {}
    counters: dict[str, int] = {}

    def new_object(cls: str, **attrs) -> str:
        counters[cls] = counters.get(cls, 0) + 1
        oid = f"{cls} {counters[cls]}"
        objects[oid] = ObjectAttrs(**attrs)
        return oid

    lamp = new_object(LAMP_CLASS, lamp=True)
    receptacles[lamp_spot].contents.append(lamp)
    for _ in range(2 if task_type is TaskType.PICK_TWO else 1):
        receptacles[rng.choice(eligible)].contents.append(new_object(target_class))

    distractor_classes = [c for c in OBJECT_CLASSES if c != target_class]
    total = rng.randint(15, 20)
    rids = list(receptacles)
    while len(objects) < total:
        cls = rng.choice(distractor_classes)
        receptacles[rng.choice(rids)].contents.append(new_object(cls))

    for recep in receptacles.values():
        recep.contents.sort(key=lambda o: (class_of(o), int(o.rsplit(" ", 1)[1])))

    state = HouseholdState(receptacles=receptacles, objects=objects)
    task = TaskInstance(task_type, target_class, target_recep, seed)
    return task, state, initial_observation(state, task)


def new_session(task_type: TaskType | str, seed: int) -> EnvSession:
    task, state, obs = generate_task(task_type, seed)
    return EnvSession(task, state, obs)
