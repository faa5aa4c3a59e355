"""Subtask planner: target sampling, RRT-Connect, shortcutting, warm starts
and the whole-plan feasibility pass.

Every subtask is planned from the predicted end state of its predecessor
(the current world state for the first one).  Targets come from per-type
samplers; motions are gripper-position paths validated by the kernel
backend.  A previously planned path is reused when its endpoints still match
and it stays collision-free (warm start); it is then only shortcut further,
which is what makes successive passes anytime-improving.

Work is metered in units (one unit = one target attempt, RRT extension or
shortcut attempt) so the executive can spread planning over virtual time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from . import _kernels as K
from .config import Config
from .domain import PlacementCell, Subtask
from .rng import SplitMix64, stream_key
from .world import GripperConfig, Vec3, WorldState, settle


class InvalidEndpoint(ValueError):
    """Start or goal configuration rejected by the validity oracle."""


@dataclass(frozen=True)
class Trajectory:
    """Waypoint path for one subtask.

    `waypoints` is the approach leg; subtasks that actuate the gripper
    (pick/place) return along the same leg reversed, which `retreat` flags.
    `length` accounts for both legs.
    """

    waypoints: tuple          # Vec3 positions
    width: float              # commanded width along the approach leg
    delta: float
    retreat: bool = False
    length: float = 0.0

    def configs(self):
        return tuple(GripperConfig(p, self.width) for p in self.waypoints)

    @property
    def start(self) -> Vec3:
        return self.waypoints[0]

    @property
    def end(self) -> Vec3:
        return self.waypoints[-1]


def path_length(points) -> float:
    total = 0.0
    for a, b in zip(points, points[1:]):
        total += a.dist(b)
    return total


def _traj(points, width, delta, retreat):
    leg = path_length(points)
    return Trajectory(waypoints=tuple(points), width=width, delta=delta,
                      retreat=retreat, length=leg * 2.0 if retreat else leg)


# ---------------------------------------------------------------------------
# validity contexts
# ---------------------------------------------------------------------------

class CollisionSpec:
    """World-backed validity oracle for a planning query; kernel-ready."""

    def __init__(self, chi: WorldState, ignore=(), eps=1e-4,
                 gripper_half=0.03, delta=0.01):
        self.chi = chi
        self.ignore = frozenset(ignore)
        self.eps = eps
        self.gripper_half = gripper_half
        self.delta = delta
        geom, n, _ = chi.geom_buffer()
        self.geom = geom
        self.n = n
        self.mask = chi.ignore_mask(self.ignore)
        if chi.attached:
            bid, offset = chi.attached
            ah = chi.bodies[bid].half_extents
            self.att = (offset.x, offset.y, offset.z, ah.x, ah.y, ah.z, True)
        else:
            self.att = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False)

    def point_ok(self, p: Vec3) -> bool:
        ax, ay, az, ahx, ahy, ahz, has = self.att
        return K.point_valid(self.geom, self.n, self.mask, p.x, p.y, p.z,
                             self.gripper_half, self.gripper_half,
                             self.gripper_half, ax, ay, az, ahx, ahy, ahz,
                             has, self.eps)

    def seg_ok(self, p: Vec3, q: Vec3) -> bool:
        ax, ay, az, ahx, ahy, ahz, has = self.att
        return K.segment_valid(self.geom, self.n, self.mask,
                               p.x, p.y, p.z, q.x, q.y, q.z,
                               self.gripper_half, self.gripper_half,
                               self.gripper_half, ax, ay, az, ahx, ahy, ahz,
                               has, self.eps, self.delta)

    def seg_units(self, p: Vec3, q: Vec3) -> int:
        return K.seg_points(p.x, p.y, p.z, q.x, q.y, q.z, self.delta) + 1

    def __call__(self, p: Vec3) -> bool:
        return self.point_ok(p)


class _CallableSpec:
    """Adapter so rrt_connect/shortcut accept a plain point-validity
    callable (used by tests with synthetic worlds)."""

    def __init__(self, fn, delta):
        self.fn = fn
        self.delta = delta

    def point_ok(self, p):
        return self.fn(p)

    def seg_ok(self, p, q):
        m = K.seg_points(p.x, p.y, p.z, q.x, q.y, q.z, self.delta)
        mf = float(m)
        for k in range(m + 1):
            t = k / mf
            c = Vec3(p.x + (q.x - p.x) * t, p.y + (q.y - p.y) * t,
                     p.z + (q.z - p.z) * t)
            if not self.fn(c):
                return False
        return True

    def seg_units(self, p, q):
        return K.seg_points(p.x, p.y, p.z, q.x, q.y, q.z, self.delta) + 1


def _as_spec(validity, delta):
    if isinstance(validity, (CollisionSpec, _CallableSpec)):
        return validity
    return _CallableSpec(validity, delta)


def _generic_rrt(spec, bounds, step, delta, state, qs, qg, max_iters):
    """RRT over an arbitrary validity callable: pure-python backend with the
    segment check rerouted through the spec."""
    from ._kernels import _pykern

    rrt = _pykern.RrtBackend(
        [], 0, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False, 0.0,
        bounds, step, delta, state, qs, qg, max_iters)
    rrt._seg_ok = lambda p, q: spec.seg_ok(Vec3(*p), Vec3(*q))
    return rrt


# ---------------------------------------------------------------------------
# rrt-connect / shortcut / warm validation
# ---------------------------------------------------------------------------

def rrt_connect(q_start: Vec3, q_goal: Vec3, validity, rng: SplitMix64,
                max_iters: int = 5000, bounds=None, step: float = 0.03,
                delta: float = 0.01, budget: int = None, meter=None):
    """Bidirectional RRT between gripper positions.

    Returns a Trajectory (no retreat) or None after max_iters.  Raises
    InvalidEndpoint when either endpoint fails the validity oracle, which
    distinguishes target failures from motion failures upstream.
    """
    spec = _as_spec(validity, delta)
    if not spec.point_ok(q_start) or not spec.point_ok(q_goal):
        raise InvalidEndpoint("rrt endpoint in collision")
    if bounds is None:
        bounds = default_bounds(q_start, q_goal)
    if isinstance(spec, CollisionSpec):
        rrt = K.RrtBackend(spec.geom, spec.n, spec.mask,
                           spec.gripper_half, spec.gripper_half, spec.gripper_half,
                           *spec.att, spec.eps, bounds, step, delta,
                           rng.next_u64(), tuple(q_start), tuple(q_goal), max_iters)
    else:
        rrt = _generic_rrt(spec, bounds, step, delta, rng.next_u64(),
                           tuple(q_start), tuple(q_goal), max_iters)
    status, used = rrt.run(budget if budget is not None else (1 << 60))
    if meter is not None:
        meter.spend(used)
    if status != K.RRT_DONE:
        return None
    points = [Vec3(*p) for p in rrt.path()]
    return _traj(points, 0.08, delta, retreat=False)


def default_bounds(*points, lo=(-0.45, -0.35, 0.03), hi=(0.45, 0.35, 0.35)):
    xlo, ylo, zlo = lo
    xhi, yhi, zhi = hi
    for p in points:
        xlo = min(xlo, p.x)
        xhi = max(xhi, p.x)
        ylo = min(ylo, p.y)
        yhi = max(yhi, p.y)
        zlo = min(zlo, p.z)
        zhi = max(zhi, p.z)
    return (xlo, xhi, ylo, yhi, zlo, zhi)


def shortcut(path: Trajectory, validity, rng: SplitMix64, iters: int = 30,
             meter=None) -> Trajectory:
    """Random-pair shortcutting; output never longer than the input."""
    spec = _as_spec(validity, path.delta)
    points = list(path.waypoints)
    for _ in range(iters):
        if meter is not None:
            meter.spend(1)
        n = len(points)
        if n < 3:
            break
        i = rng.randrange(n - 1)
        j = rng.randrange(n - 1) + 1
        if j <= i:
            i, j = j - 1, i + 1
        if j - i < 2 or (i == 0 and j == n - 1 and n == 2):
            continue
        direct = points[i].dist(points[j])
        via = path_length(points[i : j + 1])
        if direct >= via - 1e-12:
            continue
        if spec.seg_ok(points[i], points[j]):
            points[i + 1 : j] = []
    return _traj(points, path.width, path.delta, path.retreat)


def validate_warm(path: Trajectory, chi_start: WorldState, q_start: Vec3,
                  q_goal: Vec3, validity, eps_match: float = 1e-4) -> bool:
    """True iff the cached path still starts/ends at the current endpoints
    (within eps_match) and every segment remains valid in chi_start."""
    spec = _as_spec(validity, path.delta)
    if path.start.dist(q_start) > eps_match or path.end.dist(q_goal) > eps_match:
        return False
    for a, b in zip(path.waypoints, path.waypoints[1:]):
        if not spec.seg_ok(a, b):
            return False
    return True


# ---------------------------------------------------------------------------
# per-type target samplers (f_target)
# ---------------------------------------------------------------------------

class TargetFailure(Exception):
    pass


def _grasp_pose(body, cfg) -> Vec3:
    return Vec3(body.pose.x, body.pose.y, body.pose.z + cfg["exec.grasp_lift"])


def _hover_z(release_z, cfg) -> float:
    return release_z + cfg["planner.hover_height"]


def _placement_valid(chi, body, pos: Vec3, support_id, cfg) -> bool:
    """Placed-block validity: exact contact with the support, clearance from
    everything else."""
    margin = cfg["rrt.safety_margin"]
    eps_pen = cfg["world.eps_pen"]
    for other in chi.bodies.values():
        if other.id in (body.id, support_id) or other.kind not in ("block", "obstacle", "table"):
            continue
        if K.box_hit(pos.x - other.pose.x, pos.y - other.pose.y, pos.z - other.pose.z,
                     body.half_extents.x + other.half_extents.x,
                     body.half_extents.y + other.half_extents.y,
                     body.half_extents.z + other.half_extents.z,
                     -margin):
            return False
    support = chi.bodies[support_id]
    if K.box_hit(pos.x - support.pose.x, pos.y - support.pose.y, pos.z - support.pose.z,
                 body.half_extents.x + support.half_extents.x,
                 body.half_extents.y + support.half_extents.y,
                 body.half_extents.z + support.half_extents.z,
                 eps_pen):
        return False
    return True


def ensure_offset(tau: Subtask, chi: WorldState, rng: SplitMix64, cfg: Config,
                  meter=None) -> Optional[Vec3]:
    """Validate the stored relative placement, resampling table/region
    offsets on collision.  Returns the offset or None."""
    cell = tau.cell
    block = chi.body(tau.params[0])
    dest = chi.body(tau.params[1])
    tries = cfg["planner.target_samples"]

    if cell.fixed:
        if cell.offset is None:
            cell.offset = Vec3(0.0, 0.0, dest.half_extents.z + block.half_extents.z)
        if meter is not None:
            meter.spend(1)
        pos = dest.pose.add(cell.offset)
        if _placement_valid(chi, block, pos, dest.id, cfg):
            return cell.offset
        return None

    table = next(b for b in chi.bodies.values() if b.kind == "table")
    pad = 0.005
    # region markers sit on the table; parking on the raw table uses its own extent
    if dest.kind == "region_marker":
        span_x = dest.half_extents.x - block.half_extents.x - pad
        span_y = dest.half_extents.y - block.half_extents.y - pad
    else:
        span_x = dest.half_extents.x - block.half_extents.x - 0.04
        span_y = dest.half_extents.y - block.half_extents.y - 0.04
    target_z = table.top + block.half_extents.z

    if cell.offset is not None:
        if meter is not None:
            meter.spend(1)
        pos = dest.pose.add(cell.offset)
        if _placement_valid(chi, block, pos, table.id, cfg):
            return cell.offset

    for _ in range(tries):
        if meter is not None:
            meter.spend(1)
        ox = rng.uniform_in(-span_x, span_x)
        oy = rng.uniform_in(-span_y, span_y)
        offset = Vec3(ox, oy, target_z - dest.pose.z)
        pos = dest.pose.add(offset)
        if _placement_valid(chi, block, pos, table.id, cfg):
            cell.offset = offset
            return offset
    return None


def sample_target(tau: Subtask, chi_start: WorldState, rng: SplitMix64,
                  cfg: Config | None = None, meter=None):
    """Target world state for a subtask, or None when no valid target exists
    within the sampling budget."""
    cfg = cfg or Config()
    margin = cfg["rrt.safety_margin"]
    eps_pen = cfg["world.eps_pen"]
    ghalf = cfg["world.gripper_half"]
    kind = tau.type

    def gripper_at(pos, width, ignore, eps):
        g = GripperConfig(pos, width)
        from .world import gripper_box_valid
        if meter is not None:
            meter.spend(1)
        if not gripper_box_valid(chi_start, g, ignore, eps, ghalf):
            return None
        return chi_start.with_gripper(g)

    if kind == "move_free":
        body = chi_start.body(tau.params[0])
        pos = Vec3(body.pose.x, body.pose.y,
                   _hover_z(_grasp_pose(body, cfg).z, cfg))
        return gripper_at(pos, chi_start.gripper.width, (), -margin)

    if kind == "pick":
        body = chi_start.body(tau.params[0])
        pos = _grasp_pose(body, cfg)
        return gripper_at(pos, chi_start.gripper.width, (body.id,), eps_pen)

    if kind == "move_hold":
        offset = ensure_offset(tau, chi_start, rng, cfg, meter)
        if offset is None:
            return None
        dest = chi_start.body(tau.params[1])
        release_z = dest.pose.add(offset).z + cfg["exec.grasp_lift"]
        pos = Vec3(dest.pose.x + offset.x, dest.pose.y + offset.y,
                   _hover_z(release_z, cfg))
        return gripper_at(pos, chi_start.gripper.width, (), -margin)

    if kind == "place":
        offset = ensure_offset(tau, chi_start, rng, cfg, meter)
        if offset is None:
            return None
        dest = chi_start.body(tau.params[1])
        target = dest.pose.add(offset)
        pos = Vec3(target.x, target.y, target.z + cfg["exec.grasp_lift"])
        return gripper_at(pos, chi_start.gripper.width, (dest.id,), eps_pen)

    raise ValueError(f"unknown subtask type {kind}")


def subtask_ignore(tau: Subtask):
    if tau.type == "pick":
        return frozenset((tau.params[0],))
    if tau.type == "place":
        return frozenset((tau.params[1],))
    return frozenset()


def subtask_eps(tau: Subtask, cfg: Config) -> float:
    # transit moves demand clearance; approach legs allow exact contact
    if tau.type in ("move_free", "move_hold"):
        return -cfg["rrt.safety_margin"]
    return cfg["world.eps_pen"]


# ---------------------------------------------------------------------------
# kinematic end-state prediction
# ---------------------------------------------------------------------------

def predict_end(tau: Subtask, chi_start: WorldState, chi_target: WorldState,
                cfg: Config) -> WorldState:
    """End state once the subtask completes: pick attaches and returns to its
    start pose; place releases, settles, and returns; moves just relocate the
    gripper (and its attachment)."""
    q_target = chi_target.gripper.position
    if tau.type in ("move_free", "move_hold"):
        return chi_start.with_gripper(
            GripperConfig(q_target, chi_start.gripper.width))
    if tau.type == "pick":
        body = chi_start.body(tau.params[0])
        width = 2.0 * body.half_extents.x
        offset = body.pose.sub(q_target)
        back = chi_start.gripper.position
        out = chi_start.with_attached((body.id, offset))
        return out.with_gripper(GripperConfig(back, width))
    if tau.type == "place":
        block_id = tau.params[0]
        placed = chi_target.bodies[block_id]
        out = chi_start.with_attached(None)
        out = out.with_body_pose(block_id, placed.pose)
        out = settle(out)
        back = chi_start.gripper.position
        return out.with_gripper(GripperConfig(back, cfg["exec.open_width"]))
    raise ValueError(tau.type)


# ---------------------------------------------------------------------------
# one-subtask planning and the whole-plan pass
# ---------------------------------------------------------------------------

class Meter:
    """Planning-work accounting in abstract units."""

    def __init__(self, budget=None):
        self.used = 0
        self.budget = budget

    def spend(self, units):
        self.used += units

    @property
    def exhausted(self):
        return self.budget is not None and self.used >= self.budget

    def remaining(self, cap):
        if self.budget is None:
            return cap
        return max(0, min(cap, self.budget - self.used))


@dataclass
class PlanPassResult:
    status: tuple      # ("ok",) | ("target", idx) | ("motion", idx)
    subtasks: list

    @property
    def all_feasible(self):
        return self.status[0] == "ok"


def _stream(pass_key: int, sid: int, phase: str) -> SplitMix64:
    return SplitMix64(stream_key(pass_key, sid, phase))


def plan_subtask(tau: Subtask, chi_start: WorldState, pass_key: int,
                 cfg: Config, meter: Meter, warm: bool, do_shortcut: bool):
    """Target + motion for one subtask from chi_start.  Returns
    ("ok"|"target"|"motion", chi_target).  Updates tau in place."""
    t_rng = _stream(pass_key, tau.id, "target")
    chi_target = sample_target(tau, chi_start, t_rng, cfg, meter)
    if chi_target is None:
        return "target", None
    q_start = chi_start.gripper.position
    q_goal = chi_target.gripper.position
    spec = CollisionSpec(chi_start, subtask_ignore(tau), subtask_eps(tau, cfg),
                         cfg["world.gripper_half"], cfg["rrt.delta"])

    traj = None
    if warm and tau.u_n is not None:
        for a, b in zip(tau.u_n.waypoints, tau.u_n.waypoints[1:]):
            meter.spend(spec.seg_units(a, b))
        if validate_warm(tau.u_n, chi_start, q_start, q_goal, spec,
                         cfg["world.eps_pen"]):
            traj = tau.u_n

    if traj is None:
        m_rng = _stream(pass_key, tau.id, "motion")
        zhi = cfg["world.z_max"]
        bounds = default_bounds(q_start, q_goal,
                                lo=(-0.45, -0.35, 0.03), hi=(0.45, 0.35, zhi))
        try:
            got = rrt_connect(q_start, q_goal, spec, m_rng,
                              max_iters=cfg["rrt.max_iters"], bounds=bounds,
                              step=cfg["rrt.step"], delta=cfg["rrt.delta"],
                              meter=meter)
        except InvalidEndpoint:
            return "target", None
        if got is None:
            return "motion", None
        retreat = tau.type in ("pick", "place")
        traj = _traj(list(got.waypoints), chi_start.gripper.width,
                     cfg["rrt.delta"], retreat)
        tau.attempt += 1

    if do_shortcut:
        s_rng = _stream(pass_key, tau.id, f"short{tau.shortcut_rounds}")
        tau.shortcut_rounds += 1
        traj = shortcut(traj, spec, s_rng, cfg["shortcut.iters"], meter)

    tau.u_n = traj
    tau.planned_len = traj.length
    tau.chi_end = predict_end(tau, chi_start, chi_target, cfg)
    return "ok", chi_target


def plan_pass(P_a, chi_curr: WorldState, rng: SplitMix64, budget=None,
              cfg: Config | None = None, warm: bool = True,
              do_shortcut: bool = True, parallel: bool = False):
    """Front-to-back feasibility pass over an actual plan (Alg.-2 style):
    chain predicted start states, sample targets, plan/validate motions.

    Stops at the first failure; budget exhaustion is reported as a motion
    failure at the current index.  With parallel=True the per-subtask motion
    planning fans out to threads; per-subtask RNG streams make the result
    identical to serial mode.
    """
    cfg = cfg or Config()
    subtasks = list(P_a)
    meter = Meter(budget)
    pass_key = rng.next_u64()

    if not parallel:
        chi = chi_curr
        for idx, tau in enumerate(subtasks):
            if meter.exhausted:
                return PlanPassResult(("motion", idx), subtasks)
            status, chi_target = plan_subtask(tau, chi, pass_key, cfg, meter,
                                              warm, do_shortcut)
            if status == "target":
                return PlanPassResult(("target", idx), subtasks)
            if status == "motion":
                return PlanPassResult(("motion", idx), subtasks)
            chi = tau.chi_end
        return PlanPassResult(("ok",), subtasks)

    # parallel mode: chain targets/end-states serially (cheap, deterministic),
    # then plan motions concurrently with order-independent streams.
    from concurrent.futures import ThreadPoolExecutor

    chains = []
    chi = chi_curr
    for idx, tau in enumerate(subtasks):
        t_rng = _stream(pass_key, tau.id, "target")
        chi_target = sample_target(tau, chi, t_rng, cfg, meter)
        if chi_target is None:
            return PlanPassResult(("target", idx), subtasks)
        chains.append((tau, chi, chi_target))
        chi = predict_end(tau, chi, chi_target, cfg)

    def job(item):
        tau, chi_start, chi_target = item
        sub_meter = Meter()
        status, _ = plan_subtask(tau, chi_start, pass_key, cfg, sub_meter,
                                 warm, do_shortcut)
        return status, sub_meter.used

    with ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(job, chains))
    for idx, (status, used) in enumerate(results):
        meter.spend(used)
        if status == "target":
            return PlanPassResult(("target", idx), subtasks)
        if status == "motion":
            return PlanPassResult(("motion", idx), subtasks)
    return PlanPassResult(("ok",), subtasks)
