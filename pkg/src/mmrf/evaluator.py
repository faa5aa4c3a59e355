"""State evaluator: parse the logic state out of the numerical state.

Each predicate has a rule — a conjunction of inequalities over poses, the
gripper configuration and named tolerances.  `evaluate` sweeps every rule
over all object combinations and collects the atoms that hold, then applies
two deterministic consistency repairs (holding beats handempty; a held block
is never `on` anything).

Only `holding` has a rule dictated by the control interface (width residual
and grasp distance); the rest are geometric reconstructions documented here:

* on(a, b):       a's bottom face rests on b's top face within eps_support
                  and at least half of a's footprint overlaps b
* ontable(a):     same test against the table
* clear(b):       no block is `on` b
* gripperon(b):   gripper is horizontally within gripper_on_xy of b's center
                  and above its top face by gripper_on_margin
* inregion(b, r): b's center is horizontally inside r's box and b rests on
                  the table
* handempty:      gripper width at least open_width
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import Config
from .domain import LogicState, Predicate
from .world import WorldState, footprint_overlap

# instrumentation: number of individual rule tests since last reset
test_counter = {"tests": 0}


def reset_test_counter():
    test_counter["tests"] = 0


@dataclass(frozen=True)
class PredicateRule:
    name: str
    arity: int
    test: object  # callable (ctx, chi, args) -> bool


class _Ctx:
    """Tolerances and object universes, precomputed per rule set."""

    def __init__(self, cfg: Config):
        self.eps_width = cfg["eval.eps_width"]
        self.eps_grasp = cfg["eval.eps_grasp"]
        self.eps_support = cfg["eval.eps_support"]
        self.gripper_on_xy = cfg["eval.gripper_on_xy"]
        self.gripper_on_margin = cfg["eval.gripper_on_margin"]
        self.open_width = cfg["eval.open_width"]
        self.min_overlap = cfg["world.support_overlap"]


def _blocks(chi: WorldState):
    return [b for b in chi.bodies.values() if b.kind == "block"]


def _surfaces(chi: WorldState):
    return [b for b in chi.bodies.values()
            if b.kind in ("block", "table", "region_marker")]


def _rests_on(ctx, a, b) -> bool:
    if abs(a.bottom - b.top) > ctx.eps_support:
        return False
    return footprint_overlap(a, b) >= ctx.min_overlap


def _holding(ctx, chi, args):
    (bid,) = args
    b = chi.body(bid)
    width = 2.0 * b.half_extents.x
    if abs(chi.gripper.width - width) >= ctx.eps_width:
        return False
    return chi.gripper.position.dist(b.pose) < ctx.eps_grasp


def _handempty(ctx, chi, args):
    return chi.gripper.width >= ctx.open_width


def _on(ctx, chi, args):
    a, b = args
    return _rests_on(ctx, chi.body(a), chi.body(b))


def _ontable(ctx, chi, args):
    (a,) = args
    table = _table(chi)
    return table is not None and _rests_on(ctx, chi.body(a), table)


def _table(chi):
    for b in chi.bodies.values():
        if b.kind == "table":
            return b
    return None


def _gripperon(ctx, chi, args):
    (sid,) = args
    s = chi.body(sid)
    g = chi.gripper.position
    if abs(g.x - s.pose.x) >= ctx.gripper_on_xy or \
            abs(g.y - s.pose.y) >= ctx.gripper_on_xy:
        return False
    return g.z > s.top + ctx.gripper_on_margin


def _inregion(ctx, chi, args):
    bid, rid = args
    b = chi.body(bid)
    r = chi.body(rid)
    if abs(b.pose.x - r.pose.x) > r.half_extents.x or \
            abs(b.pose.y - r.pose.y) > r.half_extents.y:
        return False
    table = _table(chi)
    return table is not None and _rests_on(ctx, b, table)


def default_rules(cfg: Config | None = None):
    """The shipped rule set; tolerances from config."""
    ctx = _Ctx(cfg or Config())
    rules = [
        PredicateRule("handempty", 0, _handempty),
        PredicateRule("holding", 1, _holding),
        PredicateRule("on", 2, _on),
        PredicateRule("ontable", 1, _ontable),
        PredicateRule("gripperon", 1, _gripperon),
        PredicateRule("inregion", 2, _inregion),
    ]
    return ctx, rules


def holds(rule: PredicateRule, chi: WorldState, args, ctx=None) -> bool:
    """Evaluate one rule; total and deterministic over valid argument
    tuples."""
    if len(args) != rule.arity:
        raise ValueError(f"{rule.name} expects {rule.arity} args")
    if ctx is None:
        ctx = _Ctx(Config())
    test_counter["tests"] += 1
    return rule.test(ctx, chi, args)


def evaluate(chi: WorldState, rules=None) -> LogicState:
    """L_curr = all atoms whose rules hold, over all ordered combinations of
    distinct objects, plus derived `clear` atoms and consistency repairs."""
    if rules is None:
        ctx, rule_list = default_rules()
    else:
        ctx, rule_list = rules

    blocks = _blocks(chi)
    surfaces = _surfaces(chi)
    atoms = set()
    holding_ids = set()

    for rule in rule_list:
        if rule.name == "handempty":
            if holds(rule, chi, (), ctx):
                atoms.add(Predicate("handempty"))
        elif rule.name == "holding":
            for b in blocks:
                if holds(rule, chi, (b.id,), ctx):
                    atoms.add(Predicate("holding", b.id))
                    holding_ids.add(b.id)
        elif rule.name == "on":
            for a in blocks:
                for b in blocks:
                    if a.id != b.id and holds(rule, chi, (a.id, b.id), ctx):
                        atoms.add(Predicate("on", a.id, b.id))
        elif rule.name == "ontable":
            for b in blocks:
                if holds(rule, chi, (b.id,), ctx):
                    atoms.add(Predicate("ontable", b.id))
        elif rule.name == "gripperon":
            for b in blocks:
                if holds(rule, chi, (b.id,), ctx):
                    atoms.add(Predicate("gripperon", b.id))
        elif rule.name == "inregion":
            regions = [s for s in surfaces if s.kind == "region_marker"]
            for b in blocks:
                for r in regions:
                    if holds(rule, chi, (b.id, r.id), ctx):
                        atoms.add(Predicate("inregion", b.id, r.id))

    # repairs: holding wins over handempty; a held block is not resting
    if holding_ids:
        atoms.discard(Predicate("handempty"))
        for bid in holding_ids:
            atoms.discard(Predicate("ontable", bid))
            for other in surfaces:
                atoms.discard(Predicate("on", bid, other.id))
            for r in surfaces:
                if r.kind == "region_marker":
                    atoms.discard(Predicate("inregion", bid, r.id))

    # derived clear atoms (blocks only; tables/regions are multi-capacity
    # and handled as always-clear at the symbolic level)
    covered = {a[2] for a in atoms if a[0] == "on"}
    for b in blocks:
        if b.id not in covered:
            atoms.add(Predicate("clear", b.id))

    return LogicState(atoms)


def assert_consistent(lstate: LogicState) -> None:
    """Mutual-exclusion checks for simulator-generated states."""
    holding = {a[1] for a in lstate if a[0] == "holding"}
    if holding and Predicate("handempty") in lstate:
        raise AssertionError("holding and handempty both true")
    for a in lstate:
        if a[0] == "on" and a[1] in holding:
            raise AssertionError(f"held block {a[1]} also on {a[2]}")
