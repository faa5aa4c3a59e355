from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmrf.domain import (
    GroundAction,
    LogicState,
    ParseError,
    Predicate,
    apply_action,
    ground,
    normalize_state,
    parse_domain,
    parse_problem,
    print_domain,
)

ROOT = Path(__file__).resolve().parents[1]
DOMAIN_TEXT = (ROOT / "domains" / "blocks.dom").read_text()


@pytest.fixture(scope="module")
def blocks_domain():
    return parse_domain(DOMAIN_TEXT)


class TestParseDomain:
    def test_shipped_domain_has_four_schemas(self, blocks_domain):
        assert [s.name for s in blocks_domain.schemas] == \
            ["move_free", "pick", "move_hold", "place"]

    def test_arities(self, blocks_domain):
        params = {s.name: len(s.params) for s in blocks_domain.schemas}
        assert params == {"move_free": 1, "pick": 1, "move_hold": 2, "place": 2}

    def test_empty_action_list(self):
        spec = parse_domain("(define (domain d) (:predicates (p ?x - object)))")
        assert spec.schemas == ()

    def test_disjunction_rejected(self):
        text = """(define (domain d) (:predicates (p ?x - object))
                    (:action a :parameters (?x - object)
                      :precondition (or (p ?x)) :effect (and (p ?x))))"""
        with pytest.raises(ParseError, match="must be \\(and"):
            parse_domain(text)

    def test_or_inside_conjunction_rejected(self):
        text = """(define (domain d) (:predicates (p ?x - object))
                    (:action a :parameters (?x - object)
                      :precondition (and (or (p ?x))) :effect (and (p ?x))))"""
        with pytest.raises(ParseError, match="'or' unsupported"):
            parse_domain(text)

    def test_arity_mismatch(self):
        text = """(define (domain d) (:predicates (p ?x - object))
                    (:action a :parameters (?x - object)
                      :precondition (and (p ?x ?x)) :effect (and (p ?x))))"""
        with pytest.raises(ParseError, match="expects 1 args"):
            parse_domain(text)

    def test_undeclared_predicate(self):
        text = """(define (domain d) (:predicates (p ?x - object))
                    (:action a :parameters (?x - object)
                      :precondition (and (q ?x)) :effect (and (p ?x))))"""
        with pytest.raises(ParseError, match="undeclared predicate 'q'"):
            parse_domain(text)

    def test_unbound_variable(self):
        text = """(define (domain d) (:predicates (p ?x - object))
                    (:action a :parameters (?x - object)
                      :precondition (and (p ?y)) :effect (and (p ?x))))"""
        with pytest.raises(ParseError, match="unbound variable"):
            parse_domain(text)

    def test_syntax_error_carries_position(self):
        with pytest.raises(ParseError, match="at 1:"):
            parse_domain("(define (domain d) (:predicates (p)) ")

    def test_round_trip(self, blocks_domain):
        assert parse_domain(print_domain(blocks_domain)) == blocks_domain


class TestParseProblem:
    def test_stack_goal(self, blocks_domain):
        text = (ROOT / "problems" / "stack.prob").read_text()
        prob = parse_problem(text, blocks_domain)
        assert prob.goal == LogicState(
            [Predicate("on", "b_G", "b_R"), Predicate("on", "b_B", "b_G")])

    def test_rearrange_goal(self, blocks_domain):
        text = (ROOT / "problems" / "rearrange.prob").read_text()
        prob = parse_problem(text, blocks_domain)
        atoms = sorted(prob.goal)
        assert len(atoms) == 4
        assert all(a[0] == "inregion" for a in atoms)
        assert {a[2] for a in atoms} == {"r_left", "r_right"}

    def test_unknown_goal_object(self, blocks_domain):
        text = """(define (problem p) (:domain blocks)
                    (:objects b_1 - block table - table)
                    (:geometry table (half-extents 0.4 0.3 0.02) (pose 0 0 -0.02))
                    (:geometry b_1 (half-extents 0.025 0.025 0.025) (pose 0 0 0.025))
                    (:gripper (pose 0 0 0.2) (width 0.08))
                    (:goal (and (on b_1 b_9))))"""
        with pytest.raises(ParseError, match="undeclared object 'b_9'"):
            parse_problem(text, blocks_domain)

    def test_unsupported_initial_stack_rejected(self, blocks_domain):
        text = """(define (problem p) (:domain blocks)
                    (:objects b_1 - block table - table)
                    (:geometry table (half-extents 0.4 0.3 0.02) (pose 0 0 -0.02))
                    (:geometry b_1 (half-extents 0.025 0.025 0.025) (pose 0 0 0.2))
                    (:gripper (pose 0 0 0.3) (width 0.08))
                    (:goal (and (ontable b_1))))"""
        with pytest.raises(ParseError, match="not settled"):
            parse_problem(text, blocks_domain)


def objs(n_blocks, table=False, regions=0):
    out = [(f"b{i}", "block") for i in range(n_blocks)]
    if table:
        out.append(("table", "table"))
    out += [(f"r{i}", "region") for i in range(regions)]
    return out


class TestGround:
    def test_counts_four_blocks(self, blocks_domain):
        actions = ground(blocks_domain, objs(4))
        by_name = {}
        for a in actions:
            by_name.setdefault(a.name, []).append(a)
        assert len(by_name["pick"]) == 4
        assert len(by_name["move_free"]) == 4
        assert len(by_name["place"]) == 12  # ordered distinct pairs
        assert len(by_name["move_hold"]) == 12

    def test_zero_objects(self, blocks_domain):
        assert ground(blocks_domain, []) == []

    @given(nb=st.integers(0, 4), table=st.booleans(), nr=st.integers(0, 2))
    @settings(max_examples=40, deadline=None)
    def test_counts_match_closed_form(self, blocks_domain, nb, table, nr):
        actions = ground(blocks_domain, objs(nb, table, nr))
        n_surf = nb + (1 if table else 0) + nr
        want = nb + nb + nb * (n_surf - 1) + nb * (n_surf - 1)
        assert len(actions) == want

    def test_all_ground_and_del_sane(self, blocks_domain):
        for a in ground(blocks_domain, objs(3, table=True, regions=1)):
            assert isinstance(a, GroundAction)
            for atom_ in list(a.pre) + list(a.add) + list(a.delete):
                assert not any(str(x).startswith("?") for x in atom_)

    def test_structural_expansion_pick(self, blocks_domain):
        actions = ground(blocks_domain, objs(2, table=True, regions=1))
        pick0 = next(a for a in actions if a.id == "pick(b0)")
        assert Predicate("ontable", "b0") in pick0.delete
        assert Predicate("on", "b0", "b1") in pick0.delete
        assert Predicate("inregion", "b0", "r0") in pick0.delete
        assert Predicate("gripperon", "b1") in pick0.delete

    def test_on_table_rewrite(self, blocks_domain):
        actions = ground(blocks_domain, objs(1, table=True))
        place = next(a for a in actions if a.id == "place(b0,table)")
        assert Predicate("ontable", "b0") in place.add
        place_region = None
        actions = ground(blocks_domain, objs(1, table=True, regions=1))
        place_region = next(a for a in actions if a.id == "place(b0,r0)")
        assert Predicate("inregion", "b0", "r0") in place_region.add


class TestApply:
    def test_clear_is_rederived(self, blocks_domain):
        blocks = ("b0", "b1")
        surfaces = ("b0", "b1", "table")
        state = normalize_state(
            [Predicate("handempty"), Predicate("ontable", "b0"),
             Predicate("ontable", "b1"), Predicate("gripperon", "b0")],
            blocks, surfaces)
        assert Predicate("clear", "b0") in state
        actions = {a.id: a for a in ground(blocks_domain, objs(2, table=True))}
        s1 = apply_action(state, actions["pick(b0)"], blocks, surfaces)
        assert Predicate("holding", "b0") in s1
        assert Predicate("handempty") not in s1
        s2 = apply_action(s1, actions["move_hold(b0,b1)"], blocks, surfaces)
        s3 = apply_action(s2, actions["place(b0,b1)"], blocks, surfaces)
        assert Predicate("on", "b0", "b1") in s3
        assert Predicate("clear", "b1") not in s3
        assert Predicate("clear", "b0") in s3
        # picking b0 back up re-derives clear(b1)
        s4 = apply_action(s3, actions["move_free(b0)"], blocks, surfaces)
        s5 = apply_action(s4, actions["pick(b0)"], blocks, surfaces)
        assert Predicate("clear", "b1") in s5
        assert Predicate("on", "b0", "b1") not in s5
