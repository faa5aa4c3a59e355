# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=False
"""Compiled collision/RRT kernels; bit-identical twin of _pykern.py."""

from libc.math cimport ceil, sqrt
from libc.stdlib cimport free, malloc

BACKEND = "c"

RRT_RUNNING = 0
RRT_DONE = 1
RRT_FAILED = 2

ctypedef unsigned long long u64

cdef u64 _GAMMA = 0x9E3779B97F4A7C15ULL
cdef u64 _MIX1 = 0xBF58476D1CE4E5B9ULL
cdef u64 _MIX2 = 0x94D049BB133111EBULL


cdef inline double _sm_next(u64 *state) nogil:
    cdef u64 z
    state[0] = state[0] + _GAMMA
    z = state[0]
    z = (z ^ (z >> 30)) * _MIX1
    z = (z ^ (z >> 27)) * _MIX2
    z = z ^ (z >> 31)
    return <double> (z >> 11) * (2.0 ** -53)


cdef inline bint _box_hit(double dx, double dy, double dz,
                          double sx, double sy, double sz, double eps) nogil:
    if dx < 0.0:
        dx = -dx
    if dy < 0.0:
        dy = -dy
    if dz < 0.0:
        dz = -dz
    return dx < sx - eps and dy < sy - eps and dz < sz - eps


cdef inline bint _point_valid(const double *geom, int n, u64 mask,
                              double gx, double gy, double gz,
                              double ghx, double ghy, double ghz,
                              double ax, double ay, double az,
                              double ahx, double ahy, double ahz,
                              bint has_att, double eps) nogil:
    cdef int i, j
    cdef double cx, cy, cz, hx, hy, hz
    for i in range(n):
        if (mask >> i) & 1ULL:
            continue
        j = 6 * i
        cx = geom[j]
        cy = geom[j + 1]
        cz = geom[j + 2]
        hx = geom[j + 3]
        hy = geom[j + 4]
        hz = geom[j + 5]
        if _box_hit(gx - cx, gy - cy, gz - cz, ghx + hx, ghy + hy, ghz + hz, eps):
            return False
        if has_att and _box_hit(gx + ax - cx, gy + ay - cy, gz + az - cz,
                                ahx + hx, ahy + hy, ahz + hz, eps):
            return False
    return True


cdef inline int _seg_points(double x0, double y0, double z0,
                            double x1, double y1, double z1, double delta) nogil:
    cdef double dx = x1 - x0
    cdef double dy = y1 - y0
    cdef double dz = z1 - z0
    cdef double d2 = dx * dx
    d2 += dy * dy
    d2 += dz * dz
    cdef double dist = sqrt(d2)
    if dist <= 0.0:
        return 1
    return <int> ceil(dist / delta)


cdef inline bint _segment_valid(const double *geom, int n, u64 mask,
                                double x0, double y0, double z0,
                                double x1, double y1, double z1,
                                double ghx, double ghy, double ghz,
                                double ax, double ay, double az,
                                double ahx, double ahy, double ahz,
                                bint has_att, double eps, double delta) nogil:
    cdef int m = _seg_points(x0, y0, z0, x1, y1, z1, delta)
    cdef double mf = <double> m
    cdef double dx = x1 - x0
    cdef double dy = y1 - y0
    cdef double dz = z1 - z0
    cdef int k
    cdef double t, px, py, pz
    for k in range(m + 1):
        t = k / mf
        px = x0 + dx * t
        py = y0 + dy * t
        pz = z0 + dz * t
        if not _point_valid(geom, n, mask, px, py, pz, ghx, ghy, ghz,
                            ax, ay, az, ahx, ahy, ahz, has_att, eps):
            return False
    return True


def box_hit(double dx, double dy, double dz,
            double sx, double sy, double sz, double eps):
    return bool(_box_hit(dx, dy, dz, sx, sy, sz, eps))


def point_valid(geom, int n, mask, double gx, double gy, double gz,
                double ghx, double ghy, double ghz,
                double ax, double ay, double az,
                double ahx, double ahy, double ahz, has_att, double eps):
    cdef double[::1] g = geom
    cdef u64 m = <u64> mask
    cdef bint att = 1 if has_att else 0
    return bool(_point_valid(&g[0], n, m, gx, gy, gz, ghx, ghy, ghz,
                             ax, ay, az, ahx, ahy, ahz, att, eps))


def seg_points(double x0, double y0, double z0,
               double x1, double y1, double z1, double delta):
    return _seg_points(x0, y0, z0, x1, y1, z1, delta)


def segment_valid(geom, int n, mask, double x0, double y0, double z0,
                  double x1, double y1, double z1,
                  double ghx, double ghy, double ghz,
                  double ax, double ay, double az,
                  double ahx, double ahy, double ahz, has_att,
                  double eps, double delta):
    cdef double[::1] g = geom
    cdef u64 m = <u64> mask
    cdef bint att = 1 if has_att else 0
    return bool(_segment_valid(&g[0], n, m, x0, y0, z0, x1, y1, z1,
                               ghx, ghy, ghz, ax, ay, az, ahx, ahy, ahz,
                               att, eps, delta))


cdef class RrtBackend:
    """Resumable RRT-Connect; see _pykern.RrtBackend for the contract."""

    cdef double *geom
    cdef int n
    cdef u64 mask
    cdef double ghx, ghy, ghz
    cdef double ax, ay, az, ahx, ahy, ahz
    cdef bint has_att
    cdef double eps, step, delta
    cdef double xlo, xhi, ylo, yhi, zlo, zhi
    cdef u64 state
    cdef long max_iters, iters
    cdef int cap
    cdef public int status
    cdef double *pts_a
    cdef int *par_a
    cdef int len_a
    cdef double *pts_b
    cdef int *par_b
    cdef int len_b
    cdef bint a_is_start
    cdef list _path

    def __cinit__(self, geom, int n, mask, double ghx, double ghy, double ghz,
                  double ax, double ay, double az,
                  double ahx, double ahy, double ahz, has_att, double eps,
                  bounds, double step, double delta, rng_state, qs, qg,
                  long max_iters):
        cdef double[::1] g = geom
        cdef int cap = <int> max_iters + 4
        self.geom = <double *> malloc(6 * n * sizeof(double))
        cdef int i
        for i in range(6 * n):
            self.geom[i] = g[i]
        self.n = n
        self.mask = <u64> mask
        self.ghx = ghx
        self.ghy = ghy
        self.ghz = ghz
        self.ax = ax
        self.ay = ay
        self.az = az
        self.ahx = ahx
        self.ahy = ahy
        self.ahz = ahz
        self.has_att = 1 if has_att else 0
        self.eps = eps
        self.xlo = bounds[0]
        self.xhi = bounds[1]
        self.ylo = bounds[2]
        self.yhi = bounds[3]
        self.zlo = bounds[4]
        self.zhi = bounds[5]
        self.step = step
        self.delta = delta
        self.state = <u64> rng_state
        self.max_iters = max_iters
        self.iters = 0
        self.status = RRT_RUNNING
        self._path = None
        # hard tree-size cap, enforced in _extend on both backends
        self.cap = 2 * cap
        self.pts_a = <double *> malloc(3 * self.cap * sizeof(double))
        self.par_a = <int *> malloc(self.cap * sizeof(int))
        self.pts_b = <double *> malloc(3 * self.cap * sizeof(double))
        self.par_b = <int *> malloc(self.cap * sizeof(int))
        self.pts_a[0] = qs[0]
        self.pts_a[1] = qs[1]
        self.pts_a[2] = qs[2]
        self.par_a[0] = -1
        self.len_a = 1
        self.pts_b[0] = qg[0]
        self.pts_b[1] = qg[1]
        self.pts_b[2] = qg[2]
        self.par_b[0] = -1
        self.len_b = 1
        self.a_is_start = True

    def __dealloc__(self):
        if self.geom != NULL:
            free(self.geom)
        if self.pts_a != NULL:
            free(self.pts_a)
        if self.par_a != NULL:
            free(self.par_a)
        if self.pts_b != NULL:
            free(self.pts_b)
        if self.par_b != NULL:
            free(self.par_b)

    cdef int _nearest(self, double *pts, int length, double qx, double qy, double qz) nogil:
        cdef int best = 0
        cdef int i
        cdef double dx = pts[0] - qx
        cdef double dy = pts[1] - qy
        cdef double dz = pts[2] - qz
        cdef double bd = dx * dx
        bd += dy * dy
        bd += dz * dz
        cdef double d
        for i in range(1, length):
            dx = pts[3 * i] - qx
            dy = pts[3 * i + 1] - qy
            dz = pts[3 * i + 2] - qz
            d = dx * dx
            d += dy * dy
            d += dz * dz
            if d < bd:
                bd = d
                best = i
        return best

    cdef int _extend(self, bint on_a, int near, double tx, double ty, double tz,
                     int *new_idx) nogil:
        cdef double *pts = self.pts_a if on_a else self.pts_b
        cdef int *par = self.par_a if on_a else self.par_b
        cdef int length = self.len_a if on_a else self.len_b
        if length >= self.cap:
            new_idx[0] = -1
            return 0
        cdef double nx = pts[3 * near]
        cdef double ny = pts[3 * near + 1]
        cdef double nz = pts[3 * near + 2]
        cdef double dx = tx - nx
        cdef double dy = ty - ny
        cdef double dz = tz - nz
        cdef double d2 = dx * dx
        d2 += dy * dy
        d2 += dz * dz
        cdef double dist = sqrt(d2)
        cdef double qx, qy, qz, s
        cdef bint reached
        if dist <= self.step:
            qx = tx
            qy = ty
            qz = tz
            reached = True
        else:
            s = self.step / dist
            qx = nx + dx * s
            qy = ny + dy * s
            qz = nz + dz * s
            reached = False
        if _segment_valid(self.geom, self.n, self.mask, nx, ny, nz, qx, qy, qz,
                          self.ghx, self.ghy, self.ghz,
                          self.ax, self.ay, self.az,
                          self.ahx, self.ahy, self.ahz,
                          self.has_att, self.eps, self.delta):
            pts[3 * length] = qx
            pts[3 * length + 1] = qy
            pts[3 * length + 2] = qz
            par[length] = near
            if on_a:
                self.len_a = length + 1
            else:
                self.len_b = length + 1
            new_idx[0] = length
            return 2 if reached else 1
        new_idx[0] = -1
        return 0

    def run(self, long budget):
        cdef long used = 0
        cdef double qx, qy, qz, tx, ty, tz
        cdef int code, code2, idx, idx2, nb
        cdef double *tmp_pts
        cdef int *tmp_par
        cdef int tmp_len
        while used < budget and self.status == RRT_RUNNING:
            if self.iters >= self.max_iters:
                self.status = RRT_FAILED
                break
            self.iters += 1
            qx = self.xlo + (self.xhi - self.xlo) * _sm_next(&self.state)
            qy = self.ylo + (self.yhi - self.ylo) * _sm_next(&self.state)
            qz = self.zlo + (self.zhi - self.zlo) * _sm_next(&self.state)
            used += 1
            code = self._extend(True, self._nearest(self.pts_a, self.len_a, qx, qy, qz),
                                qx, qy, qz, &idx)
            if code != 0:
                tx = self.pts_a[3 * idx]
                ty = self.pts_a[3 * idx + 1]
                tz = self.pts_a[3 * idx + 2]
                nb = self._nearest(self.pts_b, self.len_b, tx, ty, tz)
                while True:
                    used += 1
                    code2 = self._extend(False, nb, tx, ty, tz, &idx2)
                    if code2 == 0:
                        break
                    nb = idx2
                    if code2 == 2:
                        self._join(idx, idx2)
                        self.status = RRT_DONE
                        break
            if self.status == RRT_RUNNING:
                tmp_pts = self.pts_a
                self.pts_a = self.pts_b
                self.pts_b = tmp_pts
                tmp_par = self.par_a
                self.par_a = self.par_b
                self.par_b = tmp_par
                tmp_len = self.len_a
                self.len_a = self.len_b
                self.len_b = tmp_len
                self.a_is_start = not self.a_is_start
        return self.status, used

    cdef _chain(self, double *pts, int *par, int idx):
        out = []
        while idx >= 0:
            out.append((pts[3 * idx], pts[3 * idx + 1], pts[3 * idx + 2]))
            idx = par[idx]
        return out

    cdef _join(self, int ia, int ib):
        ca = self._chain(self.pts_a, self.par_a, ia)
        cb = self._chain(self.pts_b, self.par_b, ib)
        if self.a_is_start:
            self._path = ca[::-1] + cb[1:]
        else:
            self._path = cb[::-1] + ca[1:]

    def path(self):
        return self._path
