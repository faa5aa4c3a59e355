"""Nominal-plan solver: symbolic search plus geometric binding.

`plan_symbolic` is an A* over ground-action application with derived `clear`
normalization; unit action costs plus soft penalties for actions whose
geometric binding failed before.  `bind_and_verify` turns an action sequence
into subtasks (scheduling sets, shared placement cells) and runs a full
front-to-back planning pass so the returned plan is feasible at the motion
level.  `solve` loops the two, banning the blocking action on each binding
failure, until a fully verified plan exists.

Subtask scheduling sets
-----------------------
The precondition set of a subtask is intentionally weaker than the symbolic
precondition: derived `clear` atoms and gripper-over atoms for multi-capacity
surfaces (table, regions) are dropped, which keeps a stale-but-reorderable
plan executable until the *motion* level vetoes it — that is what lets the
whole-plan planner, not the scheduler, catch occupied placements.

To make reverse-order refinement safe, each subtask is guarded by the
"achievements" its nominal slot relied on: every atom that some earlier
subtask established (it appears in that subtask's effect diff), that still
holds at this subtask's slot, and that mentions a movable block this
subtask's manipulation episode touches.  Guards are what make the scheduler
redo a knocked-over sub-stack before continuing, while leaving logically
independent manipulations (the rearrange domain) unordered.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .config import Config
from .domain import (
    DomainSpec,
    GroundAction,
    LogicState,
    PlacementCell,
    Predicate,
    Subtask,
    apply_action,
    ground,
    normalize_state,
)
from .planner import Meter, plan_pass
from .rng import SplitMix64
from .world import WorldState


class Unsolvable(Exception):
    pass


class SolverTimeout(Exception):
    pass


@dataclass
class BindFailure(Exception):
    index: int
    action_id: str
    kind: str  # "target" | "motion"

    def __str__(self):
        return f"binding failed at step {self.index} ({self.action_id}: {self.kind})"


@dataclass
class SolveStats:
    expansions: int = 0
    bind_attempts: int = 0
    iterations: int = 0
    units: int = 0


@dataclass
class NominalPlan:
    subtasks: list
    goal: LogicState
    stats: SolveStats
    plan_id: int = 0

    def __iter__(self):
        return iter(self.subtasks)

    def __len__(self):
        return len(self.subtasks)


# ---------------------------------------------------------------------------
# symbolic search
# ---------------------------------------------------------------------------

def objects_from_world(chi: WorldState):
    """(name, type) universe for grounding, derived from the live world so
    spawned bodies join the replanning universe."""
    kind_to_type = {"block": "block", "table": "table", "region_marker": "region"}
    out = []
    for b in chi.bodies.values():
        t = kind_to_type.get(b.kind)
        if t is not None:
            out.append((b.id, t))
    return tuple(out)


def _universe(objects):
    blocks = tuple(o for o, t in objects if t == "block")
    surfaces = tuple(o for o, t in objects
                     if t in ("block", "table", "region"))
    return blocks, surfaces


def _goal_heuristic(state, goal, blocks):
    """Admissible per-goal-atom case estimate; each unsatisfied placement
    needs between 1 and 4 of its own block's actions."""
    h = 0
    state_set = state
    for g in goal:
        if g in state_set:
            continue
        b = g[1]
        dest = g[2] if len(g) > 2 else None
        if ("holding", b) in state_set:
            if dest is not None and ("gripperon", dest) in state_set:
                h += 1
            else:
                h += 2
        elif ("handempty",) in state_set and ("gripperon", b) in state_set:
            h += 3
        else:
            h += 4
    return h


def plan_symbolic(L_curr: LogicState, L_goal: LogicState, grounded,
                  costs=None, max_expansions: int = 200000,
                  stats: SolveStats | None = None):
    """Cheapest action sequence from L_curr to a superset of L_goal; unit
    costs unless `costs` overrides an action id.  Ties break toward the
    lexicographically smallest action-id sequence."""
    blocks = sorted({a[1] for g in grounded for a in g.add if a[0] == "holding"})
    surfaces = sorted({a.args[1] for a in grounded if len(a.args) > 1} |
                      set(blocks))
    actions = sorted(grounded, key=lambda a: a.id)
    costs = costs or {}

    start = normalize_state(L_curr, blocks, surfaces)
    if set(L_goal) <= set(start):
        return []

    by_id = {a.id: a for a in actions}
    h0 = _goal_heuristic(start, L_goal, blocks)
    open_heap = [(h0, (), 0, start)]
    best_g = {start: 0}
    expansions = 0
    while open_heap:
        f, path, g, state = heapq.heappop(open_heap)
        if g != best_g.get(state):
            continue  # stale entry
        if set(L_goal) <= set(state):
            return [by_id[aid] for aid in path]
        expansions += 1
        if stats is not None:
            stats.expansions += 1
        if expansions > max_expansions:
            raise SolverTimeout(f"symbolic search exceeded {max_expansions} expansions")
        for action in actions:
            if not action.pre <= state:
                continue
            nxt = apply_action(state, action, blocks, surfaces)
            ng = g + 1 + costs.get(action.id, 0)
            old = best_g.get(nxt)
            if old is not None and old <= ng:
                continue
            best_g[nxt] = ng
            h = _goal_heuristic(nxt, L_goal, blocks)
            heapq.heappush(open_heap, (ng + h, path + (action.id,), ng, nxt))
    raise Unsolvable("symbolic state space exhausted")


# ---------------------------------------------------------------------------
# subtask construction
# ---------------------------------------------------------------------------

def _episodes(actions):
    """Group the linear plan into per-block manipulation episodes: the
    consecutive run move_free(b)/pick(b)/move_hold(b,.)/place(b,.) belongs to
    one episode; a place ends it."""
    episodes = []
    current = None
    for idx, action in enumerate(actions):
        b = action.args[0]
        if current is None or current["block"] != b:
            current = {"block": b, "start": idx, "indices": []}
            episodes.append(current)
        current["indices"].append(idx)
        if action.name == "place":
            current = None
    return episodes


def _episode_blocks(actions, episode, blocks):
    out = set()
    for idx in episode["indices"]:
        for arg in actions[idx].args:
            if arg in blocks:
                out.add(arg)
    return out


def _established(projection):
    """established[i] = atoms introduced by some earlier step's effect diff
    (indexed by the state they first appear in)."""
    established = [set() for _ in projection]
    seen = set()
    for i in range(1, len(projection)):
        seen |= set(projection[i]) - set(projection[i - 1])
        established[i] = set(seen)
    return established


_VOLATILE_FOR_LP = ("clear",)


def build_subtasks(actions, L_start: LogicState, blocks, surfaces,
                   object_types, id_start: int = 0):
    """Subtasks with scheduling sets, goal-progress guards and shared
    placement cells for move_hold/place pairs."""
    projection = [normalize_state(L_start, blocks, surfaces)]
    for action in actions:
        projection.append(apply_action(projection[-1], action, blocks, surfaces))
    established = _established(projection)

    episodes = _episodes(actions)
    guards_by_index = {}
    for ep in episodes:
        ep_blocks = _episode_blocks(actions, ep, set(blocks))
        start = ep["start"]
        guard = {
            a for a in established[start]
            if a in projection[start] and any(arg in ep_blocks for arg in a[1:])
        }
        for idx in ep["indices"]:
            guards_by_index[idx] = guard

    subtasks = []
    cells = {}
    for idx, action in enumerate(actions):
        pre = set()
        for a in action.pre:
            if a[0] in _VOLATILE_FOR_LP:
                continue
            if a[0] == "gripperon" and object_types.get(a[1]) != "block":
                continue  # multi-capacity surfaces carry no hover guard
            pre.add(a)
        pre |= guards_by_index.get(idx, set())

        before, after = projection[idx], projection[idx + 1]
        l_add = LogicState(set(after) - set(before))
        l_del = LogicState(set(before) - set(after))

        cell = None
        check = None
        if action.name in ("move_hold", "place"):
            key = (action.args[0], action.args[1])
            cell = cells.get(key)
            if cell is None:
                dest_type = object_types.get(action.args[1])
                cell = PlacementCell(fixed=(dest_type == "block"))
                cells[key] = cell
        if action.name == "pick":
            check = Predicate("holding", action.args[0])
        elif action.name == "place":
            dest_type = object_types.get(action.args[1])
            if dest_type == "table":
                check = Predicate("ontable", action.args[0])
            elif dest_type == "region":
                check = Predicate("inregion", action.args[0], action.args[1])
            else:
                check = Predicate("on", action.args[0], action.args[1])
        elif action.name in ("move_free", "move_hold"):
            target = action.args[-1]
            if object_types.get(target) == "block":
                check = Predicate("gripperon", target)

        subtasks.append(Subtask(
            id=id_start + idx,
            type=action.name,
            params=action.args,
            L_P=LogicState(pre),
            L_add=l_add,
            L_del=l_del,
            cell=cell,
            check_atom=check,
        ))
    return subtasks


# ---------------------------------------------------------------------------
# bind and solve
# ---------------------------------------------------------------------------

def bind_and_verify(actions, chi: WorldState, rng: SplitMix64,
                    budget: int | None = None, cfg: Config | None = None,
                    L_curr: LogicState | None = None, id_start: int = 0,
                    stats: SolveStats | None = None, warm: bool = True,
                    do_shortcut: bool = True, parallel: bool = False):
    """Bind placements and verify motion feasibility front-to-back.

    Each failing step is retried with fresh samples up to solver.bind_retries
    times before BindFailure(i) is raised."""
    from .evaluator import evaluate

    cfg = cfg or Config()
    stats = stats or SolveStats()
    if L_curr is None:
        L_curr = evaluate(chi)
    objects = objects_from_world(chi)
    blocks, surfaces = _universe(objects)
    subtasks = build_subtasks(actions, L_curr, blocks, surfaces,
                              dict(objects), id_start)
    retries = cfg["solver.bind_retries"]

    attempts_left = {t.id: retries for t in subtasks}
    while True:
        result = plan_pass(subtasks, chi, rng, budget, cfg, warm=warm,
                           do_shortcut=do_shortcut, parallel=parallel)
        stats.bind_attempts += 1
        if result.all_feasible:
            return subtasks
        kind, idx = result.status[0], result.status[1]
        tau = subtasks[idx]
        attempts_left[tau.id] -= 1
        if attempts_left[tau.id] <= 0:
            raise BindFailure(index=idx, action_id=tau.name, kind=kind)
        # drop the failing step's cached binding so the retry resamples
        if tau.cell is not None and not tau.cell.fixed:
            tau.cell.offset = None
        tau.u_n = None


def solve(chi: WorldState, L_goal: LogicState, rng: SplitMix64,
          budget: int | None = None, cfg: Config | None = None,
          domain: DomainSpec | None = None, L_curr: LogicState | None = None,
          id_start: int = 0, plan_id: int = 0, warm: bool = True,
          do_shortcut: bool = True, parallel: bool = False) -> NominalPlan:
    """plan_symbolic -> bind_and_verify loop with soft action bans on
    binding failures; returns the first fully verified nominal plan."""
    from .evaluator import evaluate

    cfg = cfg or Config()
    if domain is None:
        domain = _default_domain()
    if L_curr is None:
        L_curr = evaluate(chi)
    stats = SolveStats()
    objects = objects_from_world(chi)
    grounded = ground(domain, objects)
    costs = {}
    ban_cost = cfg["solver.ban_cost"]

    for iteration in range(cfg["solver.max_iterations"]):
        stats.iterations = iteration + 1
        actions = plan_symbolic(L_curr, L_goal, grounded, costs,
                                cfg["solver.max_expansions"], stats)
        try:
            subtasks = bind_and_verify(actions, chi, rng, budget, cfg,
                                       L_curr, id_start, stats, warm,
                                       do_shortcut, parallel)
            return NominalPlan(subtasks=subtasks, goal=L_goal, stats=stats,
                               plan_id=plan_id)
        except BindFailure as fail:
            action_id = actions[fail.index].id
            costs[action_id] = costs.get(action_id, 0) + ban_cost
    raise SolverTimeout(
        f"no verified plan within {cfg['solver.max_iterations']} iterations")


_DOMAIN_CACHE = {}


def _default_domain() -> DomainSpec:
    from pathlib import Path

    from .domain import parse_domain

    if "blocks" not in _DOMAIN_CACHE:
        path = Path(__file__).resolve().parents[2] / "domains" / "blocks.dom"
        _DOMAIN_CACHE["blocks"] = parse_domain(path.read_text())
    return _DOMAIN_CACHE["blocks"]
