import itertools

import pytest

from mmrf.domain import LogicState, Predicate, Subtask
from mmrf.rng import derive
from mmrf.scheduler import check_chain, refine

A = Predicate  # terse atom constructor


def subtask(sid, name, pre, add, dele):
    return Subtask(
        id=sid, type=name.split("(")[0], params=(),
        L_P=LogicState(pre), L_add=LogicState(add), L_del=LogicState(dele),
    )


def hand_stack_plan():
    """pick/place of G then B with goal-progress guards, as in the
    mid-interference scenario: picks/places only, no move subtasks."""
    on_gr = A("on", "g", "r")
    on_bg = A("on", "b", "g")
    he = A("handempty")
    return [
        subtask(1, "pick(g)", [he, A("clear", "g")],
                [A("holding", "g")], [he, A("ontable", "g")]),
        subtask(2, "place(g,r)", [A("holding", "g"), A("clear", "r")],
                [on_gr, he], [A("holding", "g"), A("clear", "r")]),
        subtask(3, "pick(b)", [he, A("clear", "b"), on_gr],
                [A("holding", "b")], [he, A("ontable", "b")]),
        subtask(4, "place(b,g)", [A("holding", "b"), A("clear", "g"), on_gr],
                [on_bg, he], [A("holding", "b"), A("clear", "g")]),
    ]


def all_on_table_state():
    return LogicState([
        A("handempty"),
        A("ontable", "r"), A("ontable", "g"), A("ontable", "b"),
        A("clear", "r"), A("clear", "g"), A("clear", "b"),
    ])


STACK_GOAL = LogicState([A("on", "g", "r"), A("on", "b", "g")])


class TestRefineExamples:
    def test_goal_already_satisfied_returns_empty(self):
        l_curr = LogicState([A("handempty"), A("on", "g", "r"), A("on", "b", "g")])
        out = refine(l_curr, STACK_GOAL, hand_stack_plan())
        assert out is not None and len(out) == 0

    def test_middle_interference_reselects_g_chain(self):
        # G knocked back to the table before B was picked: the refinement
        # must redo the G subtasks first, then B's, in nominal order.
        out = refine(all_on_table_state(), STACK_GOAL, hand_stack_plan())
        assert out is not None
        assert out.ids() == (1, 2, 3, 4)

    def test_unsatisfiable_single_subtask_returns_none(self):
        tau = subtask(9, "pick(x)", [A("holding", "x")], [A("on", "x", "y")], [])
        assert refine(all_on_table_state(), LogicState([A("on", "x", "y")]), [tau]) is None

    def test_selection_takes_highest_index_feasible(self):
        # two simultaneously feasible subtasks: the one later in the nominal
        # plan (closest to the goal) must be selected
        goal = LogicState([A("on", "g", "r")])
        t1 = subtask(1, "a", [A("handempty")], [A("on", "g", "r")], [])
        t2 = subtask(2, "b", [A("handempty")], [A("on", "g", "r")], [])
        out = refine(LogicState([A("handempty")]), goal, [t1, t2])
        assert out.ids() == (2,)

    def test_no_duplicates(self):
        out = refine(all_on_table_state(), STACK_GOAL, hand_stack_plan())
        ids = out.ids()
        assert len(ids) == len(set(ids))

    def test_verbatim_union_keeps_deleted_atoms(self):
        # verbatim accumulation never removes handempty, so a second pick
        # chains even though delete-aware semantics would block it
        he = A("handempty")
        t1 = subtask(1, "pick(g)", [he], [A("holding", "g")], [he])
        t2 = subtask(2, "pick(b)", [he], [A("holding", "b")], [he])
        goal = LogicState([A("holding", "g"), A("holding", "b")])
        start = LogicState([he])
        assert refine(start, goal, [t1, t2], mode="delete_aware") is None
        out = refine(start, goal, [t1, t2], mode="verbatim")
        assert out is not None and set(out.ids()) == {1, 2}

    def test_mode_validation(self):
        with pytest.raises(ValueError):
            refine(LogicState(), LogicState(), [], mode="bogus")


class TestCheckChain:
    def test_empty_plan_goal_in_start(self):
        start = LogicState([A("handempty")])
        assert check_chain([], start, LogicState([A("handempty")]))
        assert not check_chain([], start, LogicState([A("on", "g", "r")]))

    def test_stack_plan_chains_from_start(self):
        assert check_chain(hand_stack_plan(), all_on_table_state(), STACK_GOAL)

    def test_swapped_places_fail_delete_aware(self):
        plan = hand_stack_plan()
        swapped = [plan[2], plan[3], plan[0], plan[1]]
        assert not check_chain(swapped, all_on_table_state(), STACK_GOAL,
                               mode="delete_aware")


# ---------------------------------------------------------------------------
# randomized instances against the brute-force ordered-subset oracle
# ---------------------------------------------------------------------------

def oracle_any_valid(L_curr, L_goal, P_n, mode):
    """Enumerate every ordered subset of P_n and test the chain constraint."""
    n = len(P_n)
    if set(L_goal) <= set(L_curr):
        return True
    for k in range(1, n + 1):
        for combo in itertools.permutations(range(n), k):
            if check_chain([P_n[i] for i in combo], L_curr, L_goal, mode):
                return True
    return False


def random_instance(rng, max_subtasks=6, n_atoms=8):
    atoms = [A("ontable", f"o{i}") for i in range(n_atoms)]
    universe = list(range(n_atoms))

    def random_state(k_max):
        k = rng.randrange(k_max + 1)
        picked = set()
        while len(picked) < k:
            picked.add(universe[rng.randrange(n_atoms)])
        return LogicState(atoms[i] for i in sorted(picked))

    n = 1 + rng.randrange(max_subtasks)
    subtasks = [
        subtask(i + 1, f"t{i}", random_state(3), random_state(3), random_state(2))
        for i in range(n)
    ]
    return random_state(4), random_state(3), subtasks


@pytest.mark.parametrize("mode", ["delete_aware", "verbatim"])
def test_randomized_against_oracle(mode):
    rng = derive(1234, "sched-oracle", mode)
    produced = 0
    nones = 0
    for trial in range(1000):
        L_curr, L_goal, P_n = random_instance(rng)
        got = refine(L_curr, L_goal, P_n, mode=mode)
        if got is not None:
            produced += 1
            # every refine output satisfies the chain constraint
            assert check_chain(got.subtasks, L_curr, L_goal, mode)
        else:
            nones += 1
            # greedy incompleteness is allowed, but if the exhaustive oracle
            # finds no valid ordered subset, refine must have returned None
            # (vacuous here) — and conversely a None is only *required* when
            # the oracle fails; nothing to assert when it succeeds.
        if not oracle_any_valid(L_curr, L_goal, P_n, mode):
            assert got is None
    assert produced > 50 and nones > 50  # the generator exercises both paths
