# cython: language_level=3
"""Compiled geometry kernel; exact-integer mirror of flashquad.geometry._pure.

Coordinates scaled by 9**level stay below 2**48, so cross products fit in
a signed 128-bit integer; every predicate here is exact, never floating
point.  Point-on-boundary counts as inside.
"""

from libc.stdlib cimport free, malloc

cdef extern from *:
    ctypedef long long i128 "__int128"

ctypedef long long i64

cdef i64 WORLD = 2000000
cdef i64 *POW9 = [1, 9, 81, 729, 6561, 59049]

OUTSIDE = 0
INSIDE = 1
EDGE = 2

DEF STACK_VERTS = 64


cdef inline i64 _imin(i64 a, i64 b):
    return a if a < b else b


cdef inline i64 _imax(i64 a, i64 b):
    return a if a > b else b


def cell_locate(px, py, int level, sx, sy):
    """Index 9*i + j of the subcell holding (px, py), or -1 if outside the cell."""
    if level < 0 or level > 5:
        raise ValueError("level out of range")
    cdef i64 scale = POW9[level]
    cdef i64 rx = <i64> px * scale - <i64> sx
    cdef i64 ry = <i64> py * scale - <i64> sy
    if rx < 0 or rx >= WORLD or ry < 0 or ry >= WORLD:
        return -1
    return int(9 * ((ry * 9) // WORLD) + (rx * 9) // WORLD)


def dist2(ax, ay, bx, by):
    cdef i64 dx = <i64> ax - <i64> bx
    cdef i64 dy = <i64> ay - <i64> by
    cdef i128 d = <i128> dx * dx + <i128> dy * dy
    return int(<long long> (d >> 64)) * (2 ** 64) + int(<unsigned long long> d)


cdef bint _pip(i64 px, i64 py, i64 *xs, i64 *ys, Py_ssize_t n):
    cdef bint inside = False
    cdef Py_ssize_t k
    cdef i64 x1 = xs[n - 1], y1 = ys[n - 1], x2, y2
    cdef i128 cross
    for k in range(n):
        x2 = xs[k]
        y2 = ys[k]
        if _imin(x1, x2) <= px <= _imax(x1, x2) and _imin(y1, y2) <= py <= _imax(y1, y2):
            cross = <i128> (x2 - x1) * (py - y1) - <i128> (px - x1) * (y2 - y1)
            if cross == 0:
                return True
        if (y1 > py) != (y2 > py):
            cross = <i128> (x2 - x1) * (py - y1) - <i128> (px - x1) * (y2 - y1)
            if (cross > 0) == (y2 > y1):
                inside = not inside
        x1 = x2
        y1 = y2
    return inside


cdef inline int _orient(i64 ax, i64 ay, i64 bx, i64 by, i64 cx, i64 cy):
    cdef i128 v = <i128> (bx - ax) * (cy - ay) - <i128> (by - ay) * (cx - ax)
    if v > 0:
        return 1
    if v < 0:
        return -1
    return 0


cdef inline bint _bbox_overlap(i64 ax, i64 ay, i64 bx, i64 by, i64 px, i64 py):
    return (_imin(ax, bx) <= px <= _imax(ax, bx)
            and _imin(ay, by) <= py <= _imax(ay, by))


cdef bint _segments_intersect(i64 p1x, i64 p1y, i64 p2x, i64 p2y,
                              i64 q1x, i64 q1y, i64 q2x, i64 q2y):
    cdef int d1 = _orient(q1x, q1y, q2x, q2y, p1x, p1y)
    cdef int d2 = _orient(q1x, q1y, q2x, q2y, p2x, p2y)
    cdef int d3 = _orient(p1x, p1y, p2x, p2y, q1x, q1y)
    cdef int d4 = _orient(p1x, p1y, p2x, p2y, q2x, q2y)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and \
       ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _bbox_overlap(q1x, q1y, q2x, q2y, p1x, p1y):
        return True
    if d2 == 0 and _bbox_overlap(q1x, q1y, q2x, q2y, p2x, p2y):
        return True
    if d3 == 0 and _bbox_overlap(p1x, p1y, p2x, p2y, q1x, q1y):
        return True
    if d4 == 0 and _bbox_overlap(p1x, p1y, p2x, p2y, q2x, q2y):
        return True
    return False


cdef bint _seg_intersects_box(i64 x1, i64 y1, i64 x2, i64 y2,
                              i64 bx0, i64 by0, i64 bx1, i64 by1):
    if (x1 < bx0 and x2 < bx0) or (x1 > bx1 and x2 > bx1):
        return False
    if (y1 < by0 and y2 < by0) or (y1 > by1 and y2 > by1):
        return False
    if bx0 <= x1 <= bx1 and by0 <= y1 <= by1:
        return True
    if bx0 <= x2 <= bx1 and by0 <= y2 <= by1:
        return True
    if _segments_intersect(x1, y1, x2, y2, bx0, by0, bx1, by0):
        return True
    if _segments_intersect(x1, y1, x2, y2, bx1, by0, bx1, by1):
        return True
    if _segments_intersect(x1, y1, x2, y2, bx1, by1, bx0, by1):
        return True
    if _segments_intersect(x1, y1, x2, y2, bx0, by1, bx0, by0):
        return True
    return False


cdef class _VertBuf:
    """Scaled copy of a vertex list in C arrays."""

    cdef i64 *xs
    cdef i64 *ys
    cdef i64 xbuf[STACK_VERTS]
    cdef i64 ybuf[STACK_VERTS]
    cdef Py_ssize_t n
    cdef bint heap

    def __cinit__(self):
        self.heap = False
        self.n = 0

    cdef int load(self, object verts, i64 scale) except -1:
        cdef Py_ssize_t n = len(verts)
        if n < 1:
            raise ValueError("empty polygon")
        self.n = n
        if n <= STACK_VERTS:
            self.xs = self.xbuf
            self.ys = self.ybuf
        else:
            self.xs = <i64 *> malloc(n * sizeof(i64))
            self.ys = <i64 *> malloc(n * sizeof(i64))
            if self.xs == NULL or self.ys == NULL:
                raise MemoryError()
            self.heap = True
        cdef Py_ssize_t k
        for k in range(n):
            v = verts[k]
            self.xs[k] = <i64> (v[0]) * scale
            self.ys[k] = <i64> (v[1]) * scale
        return 0

    def __dealloc__(self):
        if self.heap:
            if self.xs != NULL:
                free(self.xs)
            if self.ys != NULL:
                free(self.ys)


def point_in_polygon(px, py, verts):
    cdef _VertBuf buf = _VertBuf()
    buf.load(verts, 1)
    return bool(_pip(<i64> px, <i64> py, buf.xs, buf.ys, buf.n))


def classify_cell(int level, sx, sy, verts):
    """0 = cell disjoint from polygon, 1 = cell wholly inside, 2 = boundary contact."""
    if level < 0 or level > 5:
        raise ValueError("level out of range")
    cdef i64 scale = POW9[level]
    cdef i64 bx0 = <i64> sx
    cdef i64 by0 = <i64> sy
    cdef i64 bx1 = bx0 + WORLD
    cdef i64 by1 = by0 + WORLD
    cdef _VertBuf buf = _VertBuf()
    buf.load(verts, scale)
    cdef Py_ssize_t n = buf.n, k
    cdef i64 x1 = buf.xs[n - 1], y1 = buf.ys[n - 1], x2, y2
    for k in range(n):
        x2 = buf.xs[k]
        y2 = buf.ys[k]
        if _seg_intersects_box(x1, y1, x2, y2, bx0, by0, bx1, by1):
            return EDGE
        x1 = x2
        y1 = y2
    if _pip(bx0, by0, buf.xs, buf.ys, n):
        return INSIDE
    return OUTSIDE


def cell_intersects_disc(int level, sx, sy, cx, cy, radius):
    """True when the closed cell box meets the closed disc around (cx, cy)."""
    if level < 0 or level > 5:
        raise ValueError("level out of range")
    cdef i64 scale = POW9[level]
    cdef i64 x = <i64> cx * scale
    cdef i64 y = <i64> cy * scale
    cdef i64 lo_x = <i64> sx
    cdef i64 lo_y = <i64> sy
    cdef i64 hi_x = lo_x + WORLD
    cdef i64 hi_y = lo_y + WORLD
    cdef i64 dx = lo_x - x if x < lo_x else (x - hi_x if x > hi_x else 0)
    cdef i64 dy = lo_y - y if y < lo_y else (y - hi_y if y > hi_y else 0)
    cdef i64 r = <i64> radius * scale
    return bool(<i128> dx * dx + <i128> dy * dy <= <i128> r * r)


def segments_intersect(p1x, p1y, p2x, p2y, q1x, q1y, q2x, q2y):
    return bool(_segments_intersect(<i64> p1x, <i64> p1y, <i64> p2x, <i64> p2y,
                                    <i64> q1x, <i64> q1y, <i64> q2x, <i64> q2y))


def polygon_is_simple(verts):
    """No repeated vertices, no zero-length edges, no improper edge crossings."""
    cdef Py_ssize_t n = len(verts)
    if n < 3:
        return False
    if len({(v[0], v[1]) for v in verts}) != n:
        return False
    cdef _VertBuf buf = _VertBuf()
    buf.load(verts, 1)
    cdef Py_ssize_t k, m, k2, k3, m2
    cdef i64 ax, ay, bx, by, cx, cy
    cdef i128 dot
    for k in range(n):
        k2 = (k + 1) % n
        k3 = (k + 2) % n
        ax = buf.xs[k]
        ay = buf.ys[k]
        bx = buf.xs[k2]
        by = buf.ys[k2]
        cx = buf.xs[k3]
        cy = buf.ys[k3]
        if _orient(ax, ay, bx, by, cx, cy) == 0:
            dot = <i128> (ax - bx) * (cx - bx) + <i128> (ay - by) * (cy - by)
            if dot > 0:
                return False
    for k in range(n):
        k2 = (k + 1) % n
        for m in range(k + 1, n):
            m2 = (m + 1) % n
            if m == k or m2 == k or k2 == m:
                continue
            if _segments_intersect(buf.xs[k], buf.ys[k], buf.xs[k2], buf.ys[k2],
                                   buf.xs[m], buf.ys[m], buf.xs[m2], buf.ys[m2]):
                return False
    return True


def classify_children(int level, sx, sy, verts):
    """Classes of all 81 subcells of the given cell, row-major, one byte each."""
    if level < 0 or level >= 5:
        raise ValueError("cell cannot be subdivided")
    cdef _VertBuf buf = _VertBuf()
    buf.load(verts, POW9[level + 1])
    cdef i64 psx = <i64> sx * 9
    cdef i64 psy = <i64> sy * 9
    out = bytearray(81)
    cdef Py_ssize_t n = buf.n, k
    cdef int i, j
    cdef i64 bx0, by0, x1, y1, x2, y2
    cdef bint edge
    for i in range(9):
        by0 = psy + i * WORLD
        for j in range(9):
            bx0 = psx + j * WORLD
            edge = False
            x1 = buf.xs[n - 1]
            y1 = buf.ys[n - 1]
            for k in range(n):
                x2 = buf.xs[k]
                y2 = buf.ys[k]
                if _seg_intersects_box(x1, y1, x2, y2, bx0, by0, bx0 + WORLD, by0 + WORLD):
                    edge = True
                    break
                x1 = x2
                y1 = y2
            if edge:
                out[9 * i + j] = EDGE
            elif _pip(bx0, by0, buf.xs, buf.ys, n):
                out[9 * i + j] = INSIDE
    return bytes(out)


def disc_mask(int level, sx, sy, cx, cy, radius):
    """81-bit mask of subcells whose closed box meets the closed disc."""
    if level < 0 or level >= 5:
        raise ValueError("cell cannot be subdivided")
    cdef i64 scale = POW9[level + 1]
    cdef i64 x = <i64> cx * scale
    cdef i64 y = <i64> cy * scale
    cdef i64 r = <i64> radius * scale
    cdef i128 r2 = <i128> r * r
    cdef i64 psx = <i64> sx * 9
    cdef i64 psy = <i64> sy * 9
    cdef unsigned long long lo = 0
    cdef unsigned long long hi = 0
    cdef int i, j, idx
    cdef i64 lo_x, lo_y, hi_x, hi_y, dx, dy
    for i in range(9):
        lo_y = psy + i * WORLD
        hi_y = lo_y + WORLD
        dy = lo_y - y if y < lo_y else (y - hi_y if y > hi_y else 0)
        for j in range(9):
            lo_x = psx + j * WORLD
            hi_x = lo_x + WORLD
            dx = lo_x - x if x < lo_x else (x - hi_x if x > hi_x else 0)
            if <i128> dx * dx + <i128> dy * dy <= r2:
                idx = 9 * i + j
                if idx < 64:
                    lo |= 1ULL << idx
                else:
                    hi |= 1ULL << (idx - 64)
    return (int(hi) << 64) | int(lo)
