"""Pure-Python collision/RRT kernels.

Reference implementation of the hot loops; `_ckern.pyx` is the compiled twin.
Both operate on a flat geometry buffer (6 doubles per body: cx cy cz hx hy hz)
plus a skip bitmask, and must perform the exact same double-precision
operations in the same order so results are bit-identical across backends.
"""

from __future__ import annotations

import math

BACKEND = "python"

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

RRT_RUNNING = 0
RRT_DONE = 1
RRT_FAILED = 2


def box_hit(dx, dy, dz, sx, sy, sz, eps):
    """True if two boxes with center offset (dx,dy,dz) and summed half
    extents (sx,sy,sz) interpenetrate by more than eps on every axis.
    Negative eps turns the test into a clearance requirement."""
    if dx < 0.0:
        dx = -dx
    if dy < 0.0:
        dy = -dy
    if dz < 0.0:
        dz = -dz
    return dx < sx - eps and dy < sy - eps and dz < sz - eps


def point_valid(geom, n, mask, gx, gy, gz, ghx, ghy, ghz,
                ax, ay, az, ahx, ahy, ahz, has_att, eps):
    """Gripper box at (gx,gy,gz) plus optional attached box at offset
    (ax,ay,az) against all non-masked bodies."""
    for i in range(n):
        if (mask >> i) & 1:
            continue
        j = 6 * i
        cx = geom[j]
        cy = geom[j + 1]
        cz = geom[j + 2]
        hx = geom[j + 3]
        hy = geom[j + 4]
        hz = geom[j + 5]
        if box_hit(gx - cx, gy - cy, gz - cz, ghx + hx, ghy + hy, ghz + hz, eps):
            return False
        if has_att and box_hit(gx + ax - cx, gy + ay - cy, gz + az - cz,
                               ahx + hx, ahy + hy, ahz + hz, eps):
            return False
    return True


def seg_points(x0, y0, z0, x1, y1, z1, delta):
    """Number of interpolation intervals for a segment at resolution delta."""
    dx = x1 - x0
    dy = y1 - y0
    dz = z1 - z0
    d2 = dx * dx
    d2 += dy * dy
    d2 += dz * dz
    dist = math.sqrt(d2)
    if dist <= 0.0:
        return 1
    return int(math.ceil(dist / delta))


def segment_valid(geom, n, mask, x0, y0, z0, x1, y1, z1,
                  ghx, ghy, ghz, ax, ay, az, ahx, ahy, ahz, has_att,
                  eps, delta):
    """Sweep a straight gripper move at resolution delta (both endpoints
    included)."""
    m = seg_points(x0, y0, z0, x1, y1, z1, delta)
    mf = float(m)
    dx = x1 - x0
    dy = y1 - y0
    dz = z1 - z0
    for k in range(m + 1):
        t = k / mf
        px = x0 + dx * t
        py = y0 + dy * t
        pz = z0 + dz * t
        if not point_valid(geom, n, mask, px, py, pz, ghx, ghy, ghz,
                           ax, ay, az, ahx, ahy, ahz, has_att, eps):
            return False
    return True


class RrtBackend:
    """Resumable RRT-Connect over gripper positions.

    run(budget) advances the search by at most `budget` extend operations and
    can be called repeatedly; the executive uses this to meter planning work
    in virtual time.  All arithmetic and RNG draws mirror the compiled twin.
    """

    def __init__(self, geom, n, mask, ghx, ghy, ghz,
                 ax, ay, az, ahx, ahy, ahz, has_att, eps,
                 bounds, step, delta, rng_state, qs, qg, max_iters):
        self.geom = geom
        self.n = n
        self.mask = mask
        self.gh = (ghx, ghy, ghz)
        self.att = (ax, ay, az, ahx, ahy, ahz, has_att)
        self.eps = eps
        self.bounds = bounds  # (xlo, xhi, ylo, yhi, zlo, zhi)
        self.step = step
        self.delta = delta
        self.state = rng_state & _MASK
        self.max_iters = max_iters
        # hard tree-size cap, mirrored by the compiled twin's preallocation
        self.cap = 2 * (max_iters + 4)
        self.pts_a = [qs]
        self.par_a = [-1]
        self.pts_b = [qg]
        self.par_b = [-1]
        self.a_is_start = True
        self.iters = 0
        self.status = RRT_RUNNING
        self._path = None

    # -- rng (SplitMix64, identical to mmrf.rng) --
    def _uniform(self):
        self.state = (self.state + _GAMMA) & _MASK
        z = self.state
        z = (z ^ (z >> 30)) * _MIX1 & _MASK
        z = (z ^ (z >> 27)) * _MIX2 & _MASK
        z ^= z >> 31
        return (z >> 11) * 2.0**-53

    def _seg_ok(self, p, q):
        ax, ay, az, ahx, ahy, ahz, has_att = self.att
        ghx, ghy, ghz = self.gh
        return segment_valid(self.geom, self.n, self.mask,
                             p[0], p[1], p[2], q[0], q[1], q[2],
                             ghx, ghy, ghz, ax, ay, az, ahx, ahy, ahz,
                             has_att, self.eps, self.delta)

    @staticmethod
    def _nearest(pts, q):
        best = 0
        qx, qy, qz = q
        px, py, pz = pts[0]
        dx = px - qx
        dy = py - qy
        dz = pz - qz
        bd = dx * dx
        bd += dy * dy
        bd += dz * dz
        for i in range(1, len(pts)):
            px, py, pz = pts[i]
            dx = px - qx
            dy = py - qy
            dz = pz - qz
            d = dx * dx
            d += dy * dy
            d += dz * dz
            if d < bd:
                bd = d
                best = i
        return best

    def _extend(self, pts, par, near, target):
        # returns (0 trapped | 1 advanced | 2 reached, new node index)
        if len(pts) >= self.cap:
            return 0, -1
        nx, ny, nz = pts[near]
        tx, ty, tz = target
        dx = tx - nx
        dy = ty - ny
        dz = tz - nz
        d2 = dx * dx
        d2 += dy * dy
        d2 += dz * dz
        dist = math.sqrt(d2)
        if dist <= self.step:
            qn = target
            reached = True
        else:
            s = self.step / dist
            qn = (nx + dx * s, ny + dy * s, nz + dz * s)
            reached = False
        if self._seg_ok(pts[near], qn):
            pts.append(qn)
            par.append(near)
            return (2 if reached else 1), len(pts) - 1
        return 0, -1

    def run(self, budget):
        """Advance by at most `budget` extend units; returns (status, used)."""
        used = 0
        xlo, xhi, ylo, yhi, zlo, zhi = self.bounds
        while used < budget and self.status == RRT_RUNNING:
            if self.iters >= self.max_iters:
                self.status = RRT_FAILED
                break
            self.iters += 1
            qr = (xlo + (xhi - xlo) * self._uniform(),
                  ylo + (yhi - ylo) * self._uniform(),
                  zlo + (zhi - zlo) * self._uniform())
            used += 1
            code, idx = self._extend(self.pts_a, self.par_a,
                                     self._nearest(self.pts_a, qr), qr)
            if code != 0:
                target = self.pts_a[idx]
                nb = self._nearest(self.pts_b, target)
                while True:
                    used += 1
                    code2, idx2 = self._extend(self.pts_b, self.par_b, nb, target)
                    if code2 == 0:
                        break
                    nb = idx2
                    if code2 == 2:
                        self._join(idx, idx2)
                        self.status = RRT_DONE
                        break
            if self.status == RRT_RUNNING:
                self.pts_a, self.pts_b = self.pts_b, self.pts_a
                self.par_a, self.par_b = self.par_b, self.par_a
                self.a_is_start = not self.a_is_start
        return self.status, used

    @staticmethod
    def _chain(pts, par, idx):
        out = []
        while idx >= 0:
            out.append(pts[idx])
            idx = par[idx]
        return out  # node -> root

    def _join(self, ia, ib):
        ca = self._chain(self.pts_a, self.par_a, ia)
        cb = self._chain(self.pts_b, self.par_b, ib)
        if self.a_is_start:
            path = ca[::-1] + cb[1:]
        else:
            path = cb[::-1] + ca[1:]
        self._path = path

    def path(self):
        return self._path
