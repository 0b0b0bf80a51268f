from __future__ import annotations

from .nodes import PlanAst


def diff_first_divergence(old: PlanAst, new: PlanAst) -> int:
    """Index of the first sub-goal whose statements differ between revisions.

    Step comments are ignored. When the shared prefix matches entirely the
    result is ``min(len(old), len(new)) + 1``.
    """
    shared = min(len(old), len(new))
    for k in range(1, shared + 1):
        if old.subgoal(k).structure() != new.subgoal(k).structure():
            return k
    return shared + 1


def same_structure(old: PlanAst, new: PlanAst) -> bool:
    return len(old) == len(new) and diff_first_divergence(old, new) == len(old) + 1
