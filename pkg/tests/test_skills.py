from __future__ import annotations

from fractions import Fraction

import pytest

from closedloop.controller import EpisodeRecord, LoopMode
from closedloop.env import TaskType, generate_task
from closedloop.plan import parse_plan, render_plan
from closedloop.scenarios import load_plan_text
from closedloop.skills import (
    SAMPLE_HEADER,
    SKILL_HEADER,
    CorruptStoreError,
    ExemplarPolicy,
    SkillRecord,
    SkillStatus,
    SkillStore,
    acquire,
    filter_skill,
    retrieve,
)

PLAN = parse_plan(load_plan_text("lettuce_revised"))


def episode(tt: TaskType, seed: int, actions: int, success: bool = True) -> EpisodeRecord:
    task, _, _ = generate_task(tt, seed)
    return EpisodeRecord(
        task=task,
        mode=LoopMode.EXPLICIT,
        status="success" if success else "assertion_failed",
        plans=[PLAN],
        env_actions=actions,
    )


def test_acquire_keeps_the_cheapest_success_per_signature():
    eps = [episode(TaskType.CLEAN, 1, 25), episode(TaskType.CLEAN, 2, 18), episode(TaskType.CLEAN, 3, 5, False)]
    (cand,) = acquire(eps)
    assert cand.env_actions == 18 and cand.seed == 2
    assert cand.status is SkillStatus.CANDIDATE
    assert cand.solution == render_plan(PLAN)
    assert cand.signature == eps[0].task.signature


def test_acquire_groups_by_signature():
    eps = [episode(TaskType.CLEAN, 1, 10), episode(TaskType.HEAT, 1, 10), episode(TaskType.CLEAN, 5, 10)]
    cands = acquire(eps)
    assert [c.signature.split(":")[0] for c in cands] == ["Clean", "Heat"]
    assert cands[0].seed == 1  # ties keep the first seen


def test_signature_abstracts_object_and_receptacle():
    a, _, _ = generate_task(TaskType.CLEAN, 1)
    b, _, _ = generate_task(TaskType.CLEAN, 2)
    assert a.signature == b.signature
    assert a.target_object_class not in a.signature


def _scripted_runner(without: list[bool], with_: list[bool]):
    def run(tasks, exemplar_fn):
        has_skill = any(e.startswith(SKILL_HEADER) for e in exemplar_fn(tasks[0]))
        return with_ if has_skill else without

    return run


def _eval_tasks():
    return [generate_task(TaskType.CLEAN, s)[0] for s in (11, 12, 13)]


def test_filter_archives_a_strict_improvement():
    cand = acquire([episode(TaskType.CLEAN, 1, 10)])[0]
    judged = filter_skill(cand, _eval_tasks(), _scripted_runner([True, False, False], [True, True, True]))
    assert judged.status is SkillStatus.ARCHIVED
    assert judged.eval.success_rate_without == Fraction(1, 3)
    assert judged.eval.success_rate_with == 1
    assert judged.eval.eval_tasks == ("clean-0011", "clean-0012", "clean-0013")


def test_filter_discards_a_tie():
    cand = acquire([episode(TaskType.CLEAN, 1, 10)])[0]
    judged = filter_skill(cand, _eval_tasks(), _scripted_runner([True, True, False], [False, True, True]))
    assert judged.status is SkillStatus.DISCARDED


def test_filter_needs_fresh_evaluation_tasks():
    cand = acquire([episode(TaskType.CLEAN, 11, 10)])[0]
    with pytest.raises(ValueError, match="at least one"):
        filter_skill(cand, [], _scripted_runner([], []))
    with pytest.raises(ValueError, match="differ"):
        filter_skill(cand, _eval_tasks(), _scripted_runner([True] * 3, [True] * 3))


def test_store_keeps_one_archived_record_per_signature():
    base = acquire([episode(TaskType.CLEAN, 1, 10)])[0]
    first = SkillRecord(**{**vars(base), "status": SkillStatus.ARCHIVED})
    second = SkillRecord(**{**vars(base), "seed": 2, "status": SkillStatus.ARCHIVED})
    store = SkillStore([first, base, second])
    assert store.archived(base.signature).seed == 2
    assert [r.status for r in store.records] == [SkillStatus.CANDIDATE, SkillStatus.ARCHIVED]


def test_store_persistence_round_trips(tmp_path):
    cand = acquire([episode(TaskType.CLEAN, 1, 10)])[0]
    judged = filter_skill(cand, _eval_tasks(), _scripted_runner([False] * 3, [True] * 3))
    store = SkillStore([judged, acquire([episode(TaskType.HEAT, 4, 9)])[0]])
    path = tmp_path / "skills.jsonl"
    store.persist(path)
    assert SkillStore.load(path) == store


def test_corrupt_store_names_the_record(tmp_path):
    cand = acquire([episode(TaskType.CLEAN, 1, 10)])[0]
    path = tmp_path / "skills.jsonl"
    SkillStore([cand, cand]).persist(path)
    lines = path.read_text().splitlines()
    path.write_text(lines[0] + "\n{not json\n")
    with pytest.raises(CorruptStoreError) as info:
        SkillStore.load(path)
    assert info.value.index == 1


def test_retrieve_prefers_archived_skills_then_samples():
    task, _, _ = generate_task(TaskType.CLEAN, 20)
    store = SkillStore()
    (sample,) = retrieve(store, task)
    assert sample.startswith(SAMPLE_HEADER + "Clean")
    cand = acquire([episode(TaskType.CLEAN, 1, 10)])[0]
    store.add(SkillRecord(**{**vars(cand), "status": SkillStatus.ARCHIVED}))
    (skill,) = retrieve(store, task)
    assert skill.startswith(SKILL_HEADER + task.signature)
    assert retrieve(store, task, ExemplarPolicy(use_skills=False))[0].startswith(SAMPLE_HEADER)
    assert retrieve(store, task, ExemplarPolicy(False, False)) == []
    other, _, _ = generate_task(TaskType.HEAT, 20)
    assert retrieve(store, other)[0].startswith(SAMPLE_HEADER)


def test_retrieve_is_pure():
    task, _, _ = generate_task(TaskType.CLEAN, 20)
    cand = acquire([episode(TaskType.CLEAN, 1, 10)])[0]
    store = SkillStore([SkillRecord(**{**vars(cand), "status": SkillStatus.ARCHIVED})])
    before = store.records
    assert retrieve(store, task) == retrieve(store, task)
    assert store.records == before


def test_candidates_are_never_retrieved():
    task, _, _ = generate_task(TaskType.CLEAN, 20)
    store = SkillStore(acquire([episode(TaskType.CLEAN, 1, 10)]))
    assert retrieve(store, task)[0].startswith(SAMPLE_HEADER)
