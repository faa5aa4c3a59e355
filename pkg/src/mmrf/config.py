"""Runtime configuration.

Flat dotted keys so scenario files can override any of them via their
"overrides" section.  Values are plain floats/ints/strings; everything
that affects behavior lives here so episodes are reproducible from
(problem, scenario, variant, seed) alone.
"""

from __future__ import annotations

DEFAULTS = {
    # world geometry / contact
    "world.eps_pen": 1e-4,          # max tolerated box interpenetration (m)
    "world.eps_support": 1e-3,      # resting-contact tolerance (m)
    "world.support_overlap": 0.5,   # min footprint overlap fraction for support
    "world.gripper_half": 0.03,     # half extent of the cubic gripper body (m)
    "world.z_max": 0.35,            # workspace ceiling for planning (m)

    # state evaluation tolerances
    "eval.eps_width": 0.005,        # |gripper width - block width| bound
    "eval.eps_grasp": 0.010,        # gripper-to-block center distance bound
    "eval.eps_support": 1e-3,       # bottom-to-top residual for On/OnTable
    "eval.gripper_on_xy": 0.010,    # horizontal bound for GripperOn
    "eval.gripper_on_margin": 0.005,  # gripper must sit this far above the top face
    "eval.open_width": 0.075,       # min width for HandEmpty

    # scheduler
    "scheduler.mode": "delete_aware",   # or "verbatim"
    "scheduler.replan_after_ticks": 2000,

    # motion planning
    "rrt.step": 0.03,
    "rrt.delta": 0.01,
    "rrt.max_iters": 5000,
    "rrt.safety_margin": 0.004,     # transit clearance; approach legs use eps_pen
    "shortcut.iters": 30,
    "planner.iters_per_tick": 8,
    "planner.replan_after_ticks": 1000,
    "planner.target_samples": 20,
    "planner.hover_height": 0.12,
    "planner.parallel": 0,

    # solver
    "solver.bind_retries": 10,
    "solver.max_iterations": 50,
    "solver.ban_cost": 10,
    "solver.max_expansions": 200000,

    # executor
    "exec.v_max": 0.5,              # m/s
    "exec.sigma_track": 0.001,      # tracking noise std at full speed (m)
    "exec.noise_clip": 2.5,         # clip noise at this many sigmas
    "exec.eps_track": 0.002,        # waypoint switch distance (m)
    "exec.eps_final": 5e-5,         # settle-in tolerance at a leg's last waypoint
    "exec.grasp_lift": 0.008,       # grasp pose sits this far above block center
    "exec.open_width": 0.08,
    "exec.stall_ticks": 500,

    # harness
    "harness.tick_limit": 60000,
    "harness.tick_seconds": 0.01,   # one tick = 10 ms virtual time
}


class Config:
    """Immutable-by-convention view over DEFAULTS + overrides."""

    def __init__(self, overrides: dict | None = None):
        self._values = dict(DEFAULTS)
        if overrides:
            for key, value in overrides.items():
                if key not in DEFAULTS:
                    raise KeyError(f"unknown config key: {key}")
                self._values[key] = value

    def __getitem__(self, key: str):
        return self._values[key]

    def get(self, key: str, default=None):
        return self._values.get(key, default)

    def as_dict(self) -> dict:
        return dict(self._values)
