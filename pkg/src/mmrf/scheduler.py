"""Subtask scheduler: rebuild the actual plan from the nominal plan.

`refine` repeatedly scans the not-yet-selected nominal subtasks in reverse
order, takes the first one whose preconditions are covered by the cumulative
logic state (the feasible subtask closest to the goal), applies its effects,
and restarts the scan.  It returns None — logic-level failure, the caller's
cue to eventually replan — when a full scan selects nothing before the goal
is covered.

Two effect semantics are supported:

* ``verbatim``      — the cumulative state only grows: L_cumu |= L_add | L_del
* ``delete_aware``  — L_cumu = (L_cumu - L_del) | L_add   (default)

The verbatim mode can accumulate mutually inconsistent atoms in pick-and-
place domains (e.g. holding and handempty); it is kept selectable because it
is the cheaper, original formulation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .domain import LogicState, Subtask

MODES = ("verbatim", "delete_aware")


@dataclass(frozen=True)
class ActualPlan:
    subtasks: tuple          # ordered Subtask refs drawn from the nominal plan
    provenance: int          # nominal plan id

    def ids(self):
        return tuple(t.id for t in self.subtasks)

    def __len__(self):
        return len(self.subtasks)

    def __iter__(self):
        return iter(self.subtasks)


def _accumulate(cumu: set, tau: Subtask, mode: str) -> set:
    if mode == "verbatim":
        return cumu | set(tau.L_add) | set(tau.L_del)
    return (cumu - set(tau.L_del)) | set(tau.L_add)


def refine(L_curr: LogicState, L_goal: LogicState, P_n, mode: str = "delete_aware",
           provenance: int = -1):
    """Refine an actual plan out of `P_n`; None signals logic-level failure."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    remaining = list(P_n)
    cumu = set(L_curr)
    chosen = []
    while not set(L_goal) <= cumu:
        picked = None
        for tau in reversed(remaining):
            if set(tau.L_P) <= cumu:
                picked = tau
                break
        if picked is None:
            return None
        remaining.remove(picked)
        chosen.append(picked)
        cumu = _accumulate(cumu, picked, mode)
    return ActualPlan(subtasks=tuple(chosen), provenance=provenance)


def check_chain(P, L_start: LogicState, L_goal: LogicState,
                mode: str = "delete_aware") -> bool:
    """Precondition-chaining check: every subtask's L_P, and finally L_goal,
    must be covered by the accumulated effects of the prefix before it."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    cumu = set(L_start)
    for tau in P:
        if not set(tau.L_P) <= cumu:
            return False
        cumu = _accumulate(cumu, tau, mode)
    return set(L_goal) <= cumu
