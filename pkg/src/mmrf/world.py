"""Axis-aligned blocks world.

Boxes only, identity orientations, a free-flying box gripper.  States are
immutable values: every mutator returns a new WorldState, so planner workers
can share states freely.  Collision queries delegate to the kernel backend
through a flat per-state geometry buffer.
"""

from __future__ import annotations

import array
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

from . import _kernels as K

EPS_PEN = 1e-4
EPS_SUPPORT = 1e-3
SUPPORT_OVERLAP = 0.5

# body kinds that take part in collision and support
SOLID_KINDS = ("block", "obstacle", "table")


class Vec3(NamedTuple):
    x: float
    y: float
    z: float

    def add(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def sub(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def dist(self, other: "Vec3") -> float:
        dx = self.x - other.x
        dy = self.y - other.y
        dz = self.z - other.z
        d2 = dx * dx
        d2 += dy * dy
        d2 += dz * dz
        return math.sqrt(d2)

    def finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)


class UnknownBodyError(KeyError):
    pass


class WorldInvariantError(AssertionError):
    pass


@dataclass(frozen=True)
class Body:
    id: str
    half_extents: Vec3
    pose: Vec3  # center position
    kind: str = "block"  # block | obstacle | table | region_marker
    movable: bool = True

    def __post_init__(self):
        h = self.half_extents
        if not (h.x > 0 and h.y > 0 and h.z > 0):
            raise ValueError(f"{self.id}: half extents must be positive")
        if not (h.finite() and self.pose.finite()):
            raise ValueError(f"{self.id}: non-finite geometry")

    @property
    def top(self) -> float:
        return self.pose.z + self.half_extents.z

    @property
    def bottom(self) -> float:
        return self.pose.z - self.half_extents.z

    def at(self, pose: Vec3) -> "Body":
        return replace(self, pose=pose)


class GripperConfig(NamedTuple):
    position: Vec3
    width: float


@dataclass(frozen=True)
class WorldState:
    bodies: dict  # id -> Body, insertion-ordered
    gripper: GripperConfig
    attached: Optional[tuple] = None  # (body id, grasp offset Vec3)
    tick: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- access -------------------------------------------------------------
    def body(self, body_id: str) -> Body:
        try:
            return self.bodies[body_id]
        except KeyError:
            raise UnknownBodyError(body_id) from None

    def solid_ids(self) -> tuple:
        """Ids of collidable bodies, excluding the attached one."""
        att = self.attached[0] if self.attached else None
        key = ("solid_ids", att)
        got = self._cache.get(key)
        if got is None:
            got = tuple(b.id for b in self.bodies.values()
                        if b.kind in SOLID_KINDS and b.id != att)
            self._cache[key] = got
        return got

    def geom_buffer(self):
        """(array of 6 doubles per solid body, count, id->index map)."""
        att = self.attached[0] if self.attached else None
        key = ("geom", att)
        got = self._cache.get(key)
        if got is None:
            ids = self.solid_ids()
            buf = array.array("d", bytes(48 * len(ids)))
            index = {}
            for i, bid in enumerate(ids):
                b = self.bodies[bid]
                j = 6 * i
                buf[j] = b.pose.x
                buf[j + 1] = b.pose.y
                buf[j + 2] = b.pose.z
                buf[j + 3] = b.half_extents.x
                buf[j + 4] = b.half_extents.y
                buf[j + 5] = b.half_extents.z
                index[bid] = i
            got = (buf, len(ids), index)
            self._cache[key] = got
        return got

    def ignore_mask(self, ignore) -> int:
        mask = 0
        if ignore:
            _, _, index = self.geom_buffer()
            for bid in ignore:
                i = index.get(bid)
                if i is not None:
                    mask |= 1 << i
        return mask

    # -- mutators (return new states) ----------------------------------------
    def with_gripper(self, gripper: GripperConfig) -> "WorldState":
        new = replace(self, gripper=gripper, _cache={})
        if new.attached:
            bid, offset = new.attached
            body = new.bodies[bid]
            moved = body.at(gripper.position.add(offset))
            bodies = dict(new.bodies)
            bodies[bid] = moved
            new = replace(new, bodies=bodies, _cache={})
        return new

    def with_body_pose(self, body_id: str, pose: Vec3) -> "WorldState":
        body = self.body(body_id)
        bodies = dict(self.bodies)
        bodies[body_id] = body.at(pose)
        return replace(self, bodies=bodies, _cache={})

    def with_body(self, body: Body) -> "WorldState":
        bodies = dict(self.bodies)
        bodies[body.id] = body
        return replace(self, bodies=bodies, _cache={})

    def with_attached(self, attached) -> "WorldState":
        return replace(self, attached=attached, _cache={})

    def with_tick(self, tick: int) -> "WorldState":
        return replace(self, tick=tick, _cache={})


# ---------------------------------------------------------------------------
# collision primitives
# ---------------------------------------------------------------------------

def aabb_overlap(a: Body, b: Body, eps_pen: float = EPS_PEN) -> bool:
    """True iff the boxes interpenetrate by more than eps_pen on every axis."""
    return K.box_hit(a.pose.x - b.pose.x, a.pose.y - b.pose.y, a.pose.z - b.pose.z,
                     a.half_extents.x + b.half_extents.x,
                     a.half_extents.y + b.half_extents.y,
                     a.half_extents.z + b.half_extents.z,
                     eps_pen)


def gripper_box_valid(chi: WorldState, g: GripperConfig, ignore=(),
                      eps: float = EPS_PEN, gripper_half: float = 0.03) -> bool:
    """Gripper box (and attached body, displaced by its grasp offset) against
    all solids except `ignore`.  Negative-margin checks are expressed by
    passing eps = -clearance."""
    geom, n, _ = chi.geom_buffer()
    mask = chi.ignore_mask(ignore)
    if chi.attached:
        bid, offset = chi.attached
        ah = chi.bodies[bid].half_extents
        return K.point_valid(geom, n, mask,
                             g.position.x, g.position.y, g.position.z,
                             gripper_half, gripper_half, gripper_half,
                             offset.x, offset.y, offset.z, ah.x, ah.y, ah.z,
                             True, eps)
    return K.point_valid(geom, n, mask,
                         g.position.x, g.position.y, g.position.z,
                         gripper_half, gripper_half, gripper_half,
                         0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False, eps)


def collision_free(chi: WorldState, g: GripperConfig, ignore=(),
                   eps_pen: float = EPS_PEN, gripper_half: float = 0.03) -> bool:
    """Validity oracle used by the planners: True iff the gripper placed at
    `g` collides with nothing outside `ignore`."""
    return gripper_box_valid(chi, g, ignore, eps_pen, gripper_half)


def sweep_valid(chi: WorldState, p0: Vec3, p1: Vec3, ignore=(),
                eps: float = EPS_PEN, delta: float = 0.01,
                gripper_half: float = 0.03) -> bool:
    """Straight-segment validity at resolution delta (endpoints included)."""
    geom, n, _ = chi.geom_buffer()
    mask = chi.ignore_mask(ignore)
    if chi.attached:
        bid, offset = chi.attached
        ah = chi.bodies[bid].half_extents
        return K.segment_valid(geom, n, mask, p0.x, p0.y, p0.z, p1.x, p1.y, p1.z,
                               gripper_half, gripper_half, gripper_half,
                               offset.x, offset.y, offset.z, ah.x, ah.y, ah.z,
                               True, eps, delta)
    return K.segment_valid(geom, n, mask, p0.x, p0.y, p0.z, p1.x, p1.y, p1.z,
                           gripper_half, gripper_half, gripper_half,
                           0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False, eps, delta)


# ---------------------------------------------------------------------------
# support / settling
# ---------------------------------------------------------------------------

def _xy_contact(a: Body, b: Body, eps_pen: float) -> bool:
    return (abs(a.pose.x - b.pose.x) < a.half_extents.x + b.half_extents.x - eps_pen
            and abs(a.pose.y - b.pose.y) < a.half_extents.y + b.half_extents.y - eps_pen)


def footprint_overlap(a: Body, b: Body) -> float:
    """Overlapped xy area as a fraction of a's footprint."""
    ox = min(a.pose.x + a.half_extents.x, b.pose.x + b.half_extents.x) - \
        max(a.pose.x - a.half_extents.x, b.pose.x - b.half_extents.x)
    oy = min(a.pose.y + a.half_extents.y, b.pose.y + b.half_extents.y) - \
        max(a.pose.y - a.half_extents.y, b.pose.y - b.half_extents.y)
    if ox <= 0.0 or oy <= 0.0:
        return 0.0
    return (ox * oy) / (4.0 * a.half_extents.x * a.half_extents.y)


def support_of(chi: WorldState, body_id: str,
               eps_support: float = EPS_SUPPORT,
               min_overlap: float = SUPPORT_OVERLAP):
    """Id of the body supporting `body_id` (table counts), or None."""
    mover = chi.body(body_id)
    best = None
    best_top = None
    for other in chi.bodies.values():
        if other.id == body_id or other.kind not in SOLID_KINDS:
            continue
        if other.top - eps_support > mover.bottom + eps_support:
            continue
        if abs(mover.bottom - other.top) <= eps_support and \
                footprint_overlap(mover, other) >= min_overlap:
            if best_top is None or other.top > best_top or \
                    (other.top == best_top and other.id < best):
                best = other.id
                best_top = other.top
    return best


def settle(chi: WorldState, eps_pen: float = EPS_PEN,
           eps_support: float = EPS_SUPPORT) -> WorldState:
    """Drop every unattached movable body straight down onto its first
    contact.  Lower bodies settle first so displaced stacks land sanely."""
    att = chi.attached[0] if chi.attached else None
    movers = sorted(
        (b for b in chi.bodies.values()
         if b.movable and b.kind in SOLID_KINDS and b.id != att),
        key=lambda b: (b.bottom, b.id))
    bodies = dict(chi.bodies)
    for body in movers:
        mover = bodies[body.id]
        rest = None
        for other in bodies.values():
            if other.id == mover.id or other.kind not in SOLID_KINDS:
                continue
            if other.id == att:
                continue
            if not _xy_contact(mover, other, eps_pen):
                continue
            if other.top <= mover.bottom + eps_support:
                if rest is None or other.top > rest:
                    rest = other.top
        if rest is not None:
            new_z = rest + mover.half_extents.z
            # drop to contact, or lift out of a sub-tolerance penetration;
            # bodies already at rest (within fp noise) are left untouched
            if new_z < mover.pose.z - 1e-12 or \
                    1e-12 < new_z - mover.pose.z <= eps_support:
                bodies[mover.id] = mover.at(Vec3(mover.pose.x, mover.pose.y, new_z))
    return replace(chi, bodies=bodies, _cache={})


def is_supported(chi: WorldState, body_id: str,
                 eps_support: float = EPS_SUPPORT,
                 min_overlap: float = SUPPORT_OVERLAP) -> bool:
    return support_of(chi, body_id, eps_support, min_overlap) is not None


def check_invariants(chi: WorldState, eps_pen: float = EPS_PEN,
                     eps_support: float = EPS_SUPPORT) -> None:
    """Attachment consistency, no interpenetration, support.  Raises
    WorldInvariantError; meant for debug runs and tests."""
    if chi.attached:
        bid, offset = chi.attached
        body = chi.body(bid)
        want = chi.gripper.position.add(offset)
        if body.pose.dist(want) > 1e-12:
            raise WorldInvariantError(f"attached body {bid} detached from gripper")
    solids = [b for b in chi.bodies.values() if b.kind in SOLID_KINDS]
    for i, a in enumerate(solids):
        for b in solids[i + 1:]:
            if not (a.movable or b.movable):
                continue
            if aabb_overlap(a, b, eps_pen):
                raise WorldInvariantError(f"{a.id} interpenetrates {b.id}")
    att = chi.attached[0] if chi.attached else None
    for b in solids:
        if b.movable and b.id != att and b.kind != "table":
            if not is_supported(chi, b.id, eps_support):
                raise WorldInvariantError(f"{b.id} unsupported")


def relative_pose(chi: WorldState, parent_id: str, child_id: str) -> Vec3:
    """child.pose - parent.pose (orientations are identity by design)."""
    parent = chi.body(parent_id)
    child = chi.body(child_id)
    return child.pose.sub(parent.pose)


# ---------------------------------------------------------------------------
# commanded gripper motion with contact clamping
# ---------------------------------------------------------------------------

def apply_gripper_command(chi: WorldState, cmd: GripperConfig, ignore=(),
                          eps_pen: float = EPS_PEN,
                          gripper_half: float = 0.03) -> WorldState:
    """Move the gripper toward `cmd`, axis by axis, skipping any axis move
    that would interpenetrate a non-ignored body.  The attached body follows.
    This is what keeps tracking noise from pushing blocks through each other.
    """
    pos = chi.gripper.position
    trial = [pos.x, pos.y, pos.z]
    target = (cmd.position.x, cmd.position.y, cmd.position.z)
    for axis in range(3):
        old = trial[axis]
        trial[axis] = target[axis]
        g = GripperConfig(Vec3(trial[0], trial[1], trial[2]), cmd.width)
        if not gripper_box_valid(chi, g, ignore, eps_pen, gripper_half):
            trial[axis] = old
    return chi.with_gripper(GripperConfig(Vec3(trial[0], trial[1], trial[2]), cmd.width))
