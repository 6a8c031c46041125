"""Pure-Python geometry kernel: exact integer predicates on cells and polygons.

Cells are squares from the 9 x 9 recursive subdivision of the 2 000 000 m
world.  A cell at ``level`` has the exact rational origin (sx, sy) / 9**level
and side 2 000 000 / 9**level; working in coordinates scaled by 9**level makes
every cell an integer box of side exactly 2 000 000, so all predicates reduce
to integer sign tests.  Python's arbitrary-precision ints keep the cross
products exact.

flashquad.geometry._kernel is the compiled mirror of this module; both must
implement identical semantics.  Point-on-boundary counts as inside.
"""

WORLD = 2_000_000
POW9 = (1, 9, 81, 729, 6561, 59049)

OUTSIDE = 0
INSIDE = 1
EDGE = 2


def cell_locate(px: int, py: int, level: int, sx: int, sy: int) -> int:
    """Index 9*i + j of the subcell holding (px, py), or -1 if outside the cell.

    Row i follows y, column j follows x; subcells are half-open boxes.
    """
    scale = POW9[level]
    rx = px * scale - sx
    ry = py * scale - sy
    if rx < 0 or rx >= WORLD or ry < 0 or ry >= WORLD:
        return -1
    return 9 * (ry * 9 // WORLD) + rx * 9 // WORLD


def dist2(ax: int, ay: int, bx: int, by: int) -> int:
    dx = ax - bx
    dy = ay - by
    return dx * dx + dy * dy


def _pip_scaled(px: int, py: int, scale: int, verts) -> bool:
    """Even-odd point-in-polygon test; the polygon is scaled on the fly."""
    n = len(verts)
    inside = False
    x1 = verts[n - 1][0] * scale
    y1 = verts[n - 1][1] * scale
    for k in range(n):
        x2 = verts[k][0] * scale
        y2 = verts[k][1] * scale
        # boundary counts as inside
        if (x1 if x1 < x2 else x2) <= px <= (x1 if x1 > x2 else x2) and (
            y1 if y1 < y2 else y2
        ) <= py <= (y1 if y1 > y2 else y2):
            if (x2 - x1) * (py - y1) == (px - x1) * (y2 - y1):
                return True
        if (y1 > py) != (y2 > py):
            cross = (x2 - x1) * (py - y1) - (px - x1) * (y2 - y1)
            if (cross > 0) == (y2 > y1):
                inside = not inside
        x1, y1 = x2, y2
    return inside


def point_in_polygon(px: int, py: int, verts) -> bool:
    return _pip_scaled(px, py, 1, verts)


def _orient(ax, ay, bx, by, cx, cy) -> int:
    v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (v > 0) - (v < 0)


def _bbox_overlap(ax, ay, bx, by, px, py) -> bool:
    return (
        (ax if ax < bx else bx) <= px <= (ax if ax > bx else bx)
        and (ay if ay < by else by) <= py <= (ay if ay > by else by)
    )


def segments_intersect(p1x, p1y, p2x, p2y, q1x, q1y, q2x, q2y) -> bool:
    """Closed-segment intersection (shared endpoints and collinear touch count)."""
    d1 = _orient(q1x, q1y, q2x, q2y, p1x, p1y)
    d2 = _orient(q1x, q1y, q2x, q2y, p2x, p2y)
    d3 = _orient(p1x, p1y, p2x, p2y, q1x, q1y)
    d4 = _orient(p1x, p1y, p2x, p2y, q2x, q2y)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
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


def _seg_intersects_box(x1, y1, x2, y2, bx0, by0, bx1, by1) -> bool:
    """Closed segment against closed axis-aligned box (touching counts)."""
    if (x1 < bx0 and x2 < bx0) or (x1 > bx1 and x2 > bx1):
        return False
    if (y1 < by0 and y2 < by0) or (y1 > by1 and y2 > by1):
        return False
    if bx0 <= x1 <= bx1 and by0 <= y1 <= by1:
        return True
    if bx0 <= x2 <= bx1 and by0 <= y2 <= by1:
        return True
    if segments_intersect(x1, y1, x2, y2, bx0, by0, bx1, by0):
        return True
    if segments_intersect(x1, y1, x2, y2, bx1, by0, bx1, by1):
        return True
    if segments_intersect(x1, y1, x2, y2, bx1, by1, bx0, by1):
        return True
    if segments_intersect(x1, y1, x2, y2, bx0, by1, bx0, by0):
        return True
    return False


def classify_cell(level: int, sx: int, sy: int, verts) -> int:
    """0 = cell disjoint from polygon, 1 = cell wholly inside, 2 = boundary contact.

    A polygon edge meeting the closed cell (even only at the boundary) makes
    the cell Edge.  With no boundary contact the connected cell lies entirely
    on one side, so a single corner test decides Inside vs Outside.
    """
    scale = POW9[level]
    bx1 = sx + WORLD
    by1 = sy + WORLD
    n = len(verts)
    x1 = verts[n - 1][0] * scale
    y1 = verts[n - 1][1] * scale
    for k in range(n):
        x2 = verts[k][0] * scale
        y2 = verts[k][1] * scale
        if _seg_intersects_box(x1, y1, x2, y2, sx, sy, bx1, by1):
            return EDGE
        x1, y1 = x2, y2
    return INSIDE if _pip_scaled(sx, sy, scale, verts) else OUTSIDE


def cell_intersects_disc(level: int, sx: int, sy: int, cx: int, cy: int, radius: int) -> bool:
    """True when the closed cell box meets the closed disc around (cx, cy)."""
    scale = POW9[level]
    x = cx * scale
    y = cy * scale
    hi_x = sx + WORLD
    hi_y = sy + WORLD
    dx = sx - x if x < sx else (x - hi_x if x > hi_x else 0)
    dy = sy - y if y < sy else (y - hi_y if y > hi_y else 0)
    r = radius * scale
    return dx * dx + dy * dy <= r * r


def polygon_is_simple(verts) -> bool:
    """No repeated vertices, no zero-length edges, no improper edge crossings."""
    n = len(verts)
    if n < 3:
        return False
    if len({(x, y) for x, y in verts}) != n:
        return False
    for k in range(n):
        ax, ay = verts[k]
        bx, by = verts[(k + 1) % n]
        cx, cy = verts[(k + 2) % n]
        # a spike doubles back along the incoming edge
        if _orient(ax, ay, bx, by, cx, cy) == 0 and (ax - bx) * (cx - bx) + (ay - by) * (cy - by) > 0:
            return False
    for k in range(n):
        p1 = verts[k]
        p2 = verts[(k + 1) % n]
        for m in range(k + 1, n):
            if m == k or (m + 1) % n == k or (k + 1) % n == m:
                continue  # adjacent edges share a vertex by construction
            q1 = verts[m]
            q2 = verts[(m + 1) % n]
            if segments_intersect(p1[0], p1[1], p2[0], p2[1], q1[0], q1[1], q2[0], q2[1]):
                return False
    return True


def classify_children(level: int, sx: int, sy: int, verts) -> bytes:
    """Classes of all 81 subcells of the given cell, row-major, one byte each."""
    if not 0 <= level < 5:
        raise ValueError("cell cannot be subdivided")
    psx = sx * 9
    psy = sy * 9
    out = bytearray(81)
    for idx in range(81):
        i, j = divmod(idx, 9)
        out[idx] = classify_cell(level + 1, psx + j * WORLD, psy + i * WORLD, verts)
    return bytes(out)


def disc_mask(level: int, sx: int, sy: int, cx: int, cy: int, radius: int) -> int:
    """81-bit mask of subcells whose closed box meets the closed disc."""
    if not 0 <= level < 5:
        raise ValueError("cell cannot be subdivided")
    psx = sx * 9
    psy = sy * 9
    mask = 0
    for idx in range(81):
        i, j = divmod(idx, 9)
        if cell_intersects_disc(level + 1, psx + j * WORLD, psy + i * WORLD, cx, cy, radius):
            mask |= 1 << idx
    return mask
