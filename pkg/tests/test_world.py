import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmrf.world import (
    Body,
    GripperConfig,
    UnknownBodyError,
    Vec3,
    WorldState,
    aabb_overlap,
    collision_free,
    footprint_overlap,
    relative_pose,
    settle,
    support_of,
)

EPS = 1e-4


def box(bid, pose, half=(0.5, 0.5, 0.5), **kw):
    return Body(id=bid, half_extents=Vec3(*half), pose=Vec3(*pose), **kw)


def world(*bodies, gripper=None, attached=None):
    g = gripper or GripperConfig(Vec3(0.0, 0.0, 1.0), 0.08)
    return WorldState(bodies={b.id: b for b in bodies}, gripper=g, attached=attached)


# -- independent 1-D interval oracle for the aabb margin rule ----------------

def interval_overlap_1d(c1, h1, c2, h2, eps):
    lo = max(c1 - h1, c2 - h2)
    hi = min(c1 + h1, c2 + h2)
    return hi - lo > eps


def aabb_oracle(a, b, eps):
    return all(
        interval_overlap_1d(a.pose[i], a.half_extents[i], b.pose[i], b.half_extents[i], eps)
        for i in range(3)
    )


class TestAabbOverlap:
    def test_disjoint_unit_boxes(self):
        assert not aabb_overlap(box("a", (0, 0, 0)), box("b", (3, 0, 0)))

    def test_identical_boxes(self):
        assert aabb_overlap(box("a", (0, 0, 0)), box("b", (0, 0, 0)))

    def test_marginal_overlap_against_interval_oracle(self):
        a = box("a", (0, 0, 0))
        b = box("b", (0.999, 0, 0))
        assert aabb_oracle(a, b, EPS)
        assert aabb_overlap(a, b, EPS)
        # exactly eps of penetration is NOT an overlap (strict margin)
        c = box("c", (1.0 - EPS, 0, 0))
        assert not aabb_overlap(a, c, EPS)

    @given(
        ax=st.floats(-2, 2), ay=st.floats(-2, 2), az=st.floats(-2, 2),
        bx=st.floats(-2, 2), by=st.floats(-2, 2), bz=st.floats(-2, 2),
        ha=st.floats(0.01, 1), hb=st.floats(0.01, 1),
    )
    @settings(max_examples=200, deadline=None)
    def test_symmetry_and_oracle(self, ax, ay, az, bx, by, bz, ha, hb):
        a = box("a", (ax, ay, az), half=(ha, ha, ha))
        b = box("b", (bx, by, bz), half=(hb, hb, hb))
        assert aabb_overlap(a, b) == aabb_overlap(b, a)
        assert aabb_overlap(a, b) == aabb_oracle(a, b, EPS)


class TestCollisionFree:
    def test_empty_world(self):
        chi = world()
        assert collision_free(chi, GripperConfig(Vec3(0, 0, 0.5), 0.08))

    def test_inside_block(self):
        chi = world(box("a", (0, 0, 0.5)))
        assert not collision_free(chi, GripperConfig(Vec3(0, 0, 0.5), 0.08))

    def test_grazing_at_eps_pen_is_free(self):
        chi = world(box("a", (0, 0, 0.5)))
        # gripper half 0.03: face-to-face separation exactly eps_pen
        g = GripperConfig(Vec3(0.5 + 0.03 + EPS, 0, 0.5), 0.08)
        assert collision_free(chi, g, eps_pen=EPS)

    def test_ignore_is_monotone(self):
        blk = box("a", (0, 0, 0.5))
        chi = world(blk)
        g = GripperConfig(Vec3(0, 0, 0.5), 0.08)
        assert not collision_free(chi, g)
        assert collision_free(chi, g, ignore={"a"})

    def test_attached_body_checked(self):
        chi = world(
            box("a", (0, 0, 0.5)),
            box("held", (5, 5, 5), half=(0.1, 0.1, 0.1)),
            attached=("held", Vec3(0, 0, -0.2)),
        )
        g_clear = GripperConfig(Vec3(2, 0, 2), 0.05)
        assert collision_free(chi, g_clear)
        # held box (0.2 below the gripper) dips into the block
        g_hit = GripperConfig(Vec3(0, 0, 1.2), 0.05)
        assert not collision_free(chi, g_hit)


# -- settle ------------------------------------------------------------------

def table():
    return Body(id="table", half_extents=Vec3(0.4, 0.3, 0.02),
                pose=Vec3(0, 0, -0.02), kind="table", movable=False)


def drop_oracle(chi, body_id):
    """Vertical ray-drop over sorted z-intervals of xy-overlapping bodies."""
    mover = chi.bodies[body_id]
    tops = [
        b.top for b in chi.bodies.values()
        if b.id != body_id and b.kind in ("block", "obstacle", "table")
        and footprint_overlap(mover, b) > 0.0 and b.top <= mover.bottom + 1e-3
    ]
    if not tops:
        return mover.pose.z
    return max(tops) + mover.half_extents.z


class TestSettle:
    def test_floating_block_drops_to_table(self):
        blk = box("b", (0.1, 0.1, 0.225), half=(0.025, 0.025, 0.025))
        chi = world(table(), blk)
        out = settle(chi)
        assert out.bodies["b"].pose == Vec3(0.1, 0.1, 0.025)

    def test_drop_onto_block_matches_ray_oracle(self):
        base = box("base", (0, 0, 0.025), half=(0.025, 0.025, 0.025))
        blk = box("b", (0, 0, 0.076), half=(0.025, 0.025, 0.025))
        chi = world(table(), base, blk)
        out = settle(chi)
        assert out.bodies["b"].pose.z == pytest.approx(drop_oracle(chi, "b"))
        assert out.bodies["b"].pose.z == pytest.approx(0.075)

    def test_supported_stack_is_fixed_point(self):
        base = box("base", (0, 0, 0.025), half=(0.025, 0.025, 0.025))
        top = box("top", (0, 0, 0.075), half=(0.025, 0.025, 0.025))
        chi = world(table(), base, top)
        once = settle(chi)
        twice = settle(once)
        assert once.bodies["base"].pose == chi.bodies["base"].pose
        assert once.bodies["top"].pose == chi.bodies["top"].pose
        assert twice.bodies["top"].pose == once.bodies["top"].pose

    def test_attached_body_does_not_drop(self):
        blk = box("b", (0, 0, 0.5), half=(0.025, 0.025, 0.025))
        chi = world(table(), blk, attached=("b", Vec3(0, 0, -0.008)))
        out = settle(chi)
        assert out.bodies["b"].pose.z == 0.5

    def test_displaced_stack_cascades(self):
        lower = box("lower", (0, 0, 0.125), half=(0.025, 0.025, 0.025))
        upper = box("upper", (0, 0, 0.175), half=(0.025, 0.025, 0.025))
        chi = world(table(), lower, upper)
        out = settle(chi)
        assert out.bodies["lower"].pose.z == pytest.approx(0.025)
        assert out.bodies["upper"].pose.z == pytest.approx(0.075)

    def test_support_of(self):
        base = box("base", (0, 0, 0.025), half=(0.025, 0.025, 0.025))
        top = box("top", (0.01, 0, 0.075), half=(0.025, 0.025, 0.025))
        chi = world(table(), base, top)
        assert support_of(chi, "top") == "base"
        assert support_of(chi, "base") == "table"


class TestRelativePose:
    def test_identity(self):
        a = box("a", (0.2, 0.1, 0.3))
        b = box("b", (0.2, 0.1, 0.3))
        chi = world(a, b)
        assert relative_pose(chi, "a", "b") == Vec3(0, 0, 0)

    def test_stacked_example(self):
        parent = box("p", (0.3, 0, 0.025), half=(0.025, 0.025, 0.025))
        child = box("c", (0.3, 0, 0.075), half=(0.025, 0.025, 0.025))
        chi = world(parent, child)
        off = relative_pose(chi, "p", "c")
        assert (off.x, off.y) == (0.0, 0.0)
        assert off.z == pytest.approx(0.05)

    def test_unknown_id(self):
        chi = world(box("a", (0, 0, 0)))
        with pytest.raises(UnknownBodyError):
            relative_pose(chi, "a", "nope")

    @given(
        px=st.floats(-1, 1), py=st.floats(-1, 1), pz=st.floats(0, 1),
        cx=st.floats(-1, 1), cy=st.floats(-1, 1), cz=st.floats(0, 1),
    )
    @settings(max_examples=100, deadline=None)
    def test_round_trip(self, px, py, pz, cx, cy, cz):
        chi = world(box("p", (px, py, pz)), box("c", (cx, cy, cz)))
        off = relative_pose(chi, "p", "c")
        back = chi.bodies["p"].pose.add(off)
        assert math.isclose(back.x, cx, abs_tol=1e-12)
        assert math.isclose(back.y, cy, abs_tol=1e-12)
        assert math.isclose(back.z, cz, abs_tol=1e-12)
