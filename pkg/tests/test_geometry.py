"""Exact-integer grid predicates, checked against independent oracles.

The numpy point-in-polygon oracle in helpers.py shares no code with the
package kernels; classification is additionally checked by sampling, and
the compiled and pure kernels are cross-checked on random inputs.
"""

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flashquad.errors import DomainError
from flashquad.geometry import (
    MAX_LEVEL,
    TOP_CELL,
    WORLD_SIZE,
    Cell,
    CellClass,
    cell_contains,
    cell_index,
    cell_intersects_disc,
    classify_cell,
    classify_children,
    disc_mask,
    dist2,
    in_world,
    point_in_polygon,
    subcell,
    validate_polygon,
)
from flashquad.geometry import _pure

from helpers import pip_oracle, random_simple_polygon

try:
    from flashquad.geometry import _kernel
except ImportError:
    _kernel = None

needs_kernel = pytest.mark.skipif(_kernel is None, reason="compiled kernel not built")

W = WORLD_SIZE


# -- grid basics ---------------------------------------------------------------


def test_world_bounds_are_half_open():
    assert in_world(0, 0)
    assert in_world(W - 1, W - 1)
    assert not in_world(W, 0)
    assert not in_world(0, W)
    assert not in_world(-1, 5)


def test_cell_index_covers_world():
    assert cell_index(TOP_CELL, 0, 0) == 0
    assert cell_index(TOP_CELL, W - 1, W - 1) == 80
    # column boundaries fall at W/9 = 222222.2 m, so 222222 is still column 0
    assert cell_index(TOP_CELL, W // 9, 0) == 0
    assert cell_index(TOP_CELL, -(-W // 9), 0) == 1
    assert cell_index(TOP_CELL, 0, -(-W // 9)) == 9
    with pytest.raises(DomainError):
        cell_index(TOP_CELL, W, 0)


def test_subcell_scaled_origins():
    c = subcell(TOP_CELL, 0)
    assert c == Cell(1, 0, 0)
    c = subcell(TOP_CELL, 80)
    assert c == Cell(1, 8 * W, 8 * W)
    cc = subcell(c, 40)  # middle subcell
    assert cc.level == 2
    assert cc.sx == 9 * (8 * W) + 4 * W
    with pytest.raises(DomainError):
        subcell(Cell(MAX_LEVEL, 0, 0), 0)
    with pytest.raises(DomainError):
        subcell(TOP_CELL, 81)


@given(st.integers(0, W - 1), st.integers(0, W - 1), st.integers(0, MAX_LEVEL - 1))
@settings(max_examples=100, deadline=None)
def test_descent_always_contains_point(x, y, depth):
    cell = TOP_CELL
    for _ in range(depth + 1):
        assert cell_contains(cell, x, y)
        cell = subcell(cell, cell_index(cell, x, y))
    assert cell_contains(cell, x, y)


def test_cell_size_shrinks_ninefold():
    sizes = [float(Cell(lv, 0, 0).size) for lv in range(6)]
    for a, b in zip(sizes, sizes[1:]):
        assert a == pytest.approx(9 * b)
    assert sizes[0] == 2_000_000


# -- point in polygon -----------------------------------------------------------


TRIANGLE = ((0, 0), (10, 0), (0, 10))


def test_pip_boundary_counts_as_inside():
    assert point_in_polygon(5, 0, TRIANGLE)  # on an edge
    assert point_in_polygon(5, 5, TRIANGLE)  # on the hypotenuse
    assert point_in_polygon(0, 0, TRIANGLE)  # on a vertex
    assert point_in_polygon(3, 3, TRIANGLE)
    assert not point_in_polygon(6, 6, TRIANGLE)
    assert not point_in_polygon(-1, 0, TRIANGLE)


def test_pip_concave():
    # U-shape: the notch between the prongs is outside
    u = ((0, 0), (30, 0), (30, 30), (20, 30), (20, 10), (10, 10), (10, 30), (0, 30))
    assert point_in_polygon(5, 20, u)
    assert point_in_polygon(25, 20, u)
    assert not point_in_polygon(15, 20, u)
    assert point_in_polygon(15, 5, u)


@given(st.integers(0, 2**32), st.integers(2, 200))
@settings(max_examples=60, deadline=None)
def test_pip_matches_oracle(seed, npts):
    rng = random.Random(seed)
    verts = random_simple_polygon(rng)
    xs = np.array([rng.randrange(-300_000, W + 300_000) for _ in range(npts)])
    ys = np.array([rng.randrange(-300_000, W + 300_000) for _ in range(npts)])
    want = pip_oracle(xs, ys, verts)
    got = np.array([point_in_polygon(int(x), int(y), verts) for x, y in zip(xs, ys)])
    assert (got == want).all()


def test_pip_on_oracle_boundary_samples():
    """Probe points ON polygon edges (midpoints of even-length edges)."""
    rng = random.Random(404)
    for _ in range(50):
        verts = random_simple_polygon(rng)
        for k in range(len(verts)):
            x1, y1 = verts[k]
            x2, y2 = verts[(k + 1) % len(verts)]
            if (x1 + x2) % 2 or (y1 + y2) % 2:
                continue
            mx, my = (x1 + x2) // 2, (y1 + y2) // 2
            assert point_in_polygon(mx, my, verts)


# -- cell classification -----------------------------------------------------------


def test_classify_world_sized_shapes():
    hug = ((0, 0), (W, 0), (W, W), (0, W))  # rides exactly on the cell boundary
    assert classify_cell(TOP_CELL, hug) == CellClass.EDGE
    over = ((-10, -10), (W + 10, -10), (W + 10, W + 10), (-10, W + 10))
    assert classify_cell(TOP_CELL, over) == CellClass.INSIDE
    far = ((-100, -100), (-50, -100), (-50, -50), (-100, -50))
    assert classify_cell(TOP_CELL, far) == CellClass.OUTSIDE


def test_classify_corner_touch_is_edge():
    # polygon touches the top cell only at its (0, 0) corner
    tri = ((0, 0), (-100, -20), (-20, -100))
    assert classify_cell(TOP_CELL, tri) == CellClass.EDGE


def test_classify_matches_sampling():
    """INSIDE means every sampled cell point is in; OUTSIDE means none is."""
    rng = random.Random(777)
    for _ in range(150):
        verts = random_simple_polygon(rng)
        lvl = rng.randint(0, 4)
        cell = TOP_CELL
        for _ in range(lvl):
            cell = subcell(cell, rng.randrange(81))
        cls = classify_cell(cell, verts)
        scale = 9**cell.level
        # integer points within the closed scaled box
        x_lo, x_hi = -(-cell.sx // scale), (cell.sx + W) // scale
        y_lo, y_hi = -(-cell.sy // scale), (cell.sy + W) // scale
        samples = [
            (rng.randint(x_lo, x_hi), rng.randint(y_lo, y_hi)) for _ in range(12)
        ]
        samples += [(x_lo, y_lo), (x_hi, y_hi), (x_lo, y_hi), (x_hi, y_lo)]
        flags = [point_in_polygon(x, y, verts) for x, y in samples]
        if cls == CellClass.INSIDE:
            assert all(flags)
        elif cls == CellClass.OUTSIDE:
            assert not any(flags)
        if any(flags) != all(flags):
            assert cls == CellClass.EDGE  # mixed samples force a boundary crossing


def test_classify_children_matches_per_cell():
    rng = random.Random(31)
    for _ in range(80):
        verts = random_simple_polygon(rng)
        lvl = rng.randint(0, 3)
        cell = TOP_CELL
        for _ in range(lvl):
            cell = subcell(cell, rng.randrange(81))
        batch = classify_children(cell, verts)
        assert len(batch) == 81
        for idx in range(81):
            assert batch[idx] == classify_cell(subcell(cell, idx), verts)
    with pytest.raises(DomainError):
        classify_children(Cell(MAX_LEVEL, 0, 0), TRIANGLE)


# -- disc predicates -----------------------------------------------------------------


def test_dist2_exact():
    assert dist2(0, 0, 3, 4) == 25
    assert dist2(-(10**9), 0, 10**9, 0) == 4 * 10**18


def test_disc_touches_cell_boundary():
    # the first subcell's left edge sits at x = 0 exactly
    cell = subcell(TOP_CELL, 0)
    assert cell_intersects_disc(cell, -1000, 500, 1000)  # tangent to the edge
    assert not cell_intersects_disc(cell, -1000, 500, 999)
    assert cell_intersects_disc(cell, 5, 5, 0)  # zero radius inside the box
    with pytest.raises(DomainError):
        cell_intersects_disc(cell, 0, 0, -1)


def test_disc_corner_tangency_is_closed():
    # distance from (-3, -4) to the (0, 0) corner is exactly 5
    cell = subcell(TOP_CELL, 0)
    assert cell_intersects_disc(cell, -3, -4, 5)
    assert not cell_intersects_disc(cell, -3, -4, 4)


def test_disc_sees_fractional_cell_edges():
    """Sub-metre separation across a non-integer cell boundary is exact."""
    cell = subcell(TOP_CELL, 0)  # right edge at 2000000/9 m, between 222222 and 222223
    assert cell_intersects_disc(cell, 222_222, 5, 0)  # just inside
    assert not cell_intersects_disc(cell, 222_223, 5, 0)  # 7/9 m outside
    assert cell_intersects_disc(cell, 222_223, 5, 1)  # 1 m reaches across


def test_disc_mask_matches_per_cell():
    rng = random.Random(92)
    for _ in range(200):
        lvl = rng.randint(0, 3)
        cell = TOP_CELL
        for _ in range(lvl):
            cell = subcell(cell, rng.randrange(81))
        cx = rng.randint(-W, 2 * W)
        cy = rng.randint(-W, 2 * W)
        r = rng.choice([0, 1, rng.randint(1, 40_000), rng.randint(1, 2 * W)])
        mask = disc_mask(cell, cx, cy, r)
        for idx in range(81):
            assert bool(mask >> idx & 1) == cell_intersects_disc(subcell(cell, idx), cx, cy, r)
    assert disc_mask(TOP_CELL, W // 2, W // 2, 10 * W) == (1 << 81) - 1
    with pytest.raises(DomainError):
        disc_mask(TOP_CELL, 0, 0, -5)
    with pytest.raises(DomainError):
        disc_mask(Cell(MAX_LEVEL, 0, 0), 0, 0, 5)


# -- polygon validation -----------------------------------------------------------


def test_validate_polygon_rejects_junk():
    validate_polygon(TRIANGLE)
    with pytest.raises(DomainError):
        validate_polygon(((0, 0), (1, 1)))  # too few
    with pytest.raises(DomainError):
        validate_polygon(((0, 0), (10, 0), (10, 0), (0, 10)))  # repeated vertex
    with pytest.raises(DomainError):
        validate_polygon(((0, 0), (10, 0), (20, 0)))  # zero area
    with pytest.raises(DomainError):
        validate_polygon(((0, 0), (10, 10), (10, 0), (0, 10)))  # bowtie
    with pytest.raises(DomainError):
        validate_polygon(((0, 0), (1 << 31, 0), (0, 10)))  # out of i32


# -- compiled vs pure ---------------------------------------------------------------


@needs_kernel
def test_kernels_agree():
    rng = random.Random(555)
    for _ in range(300):
        verts = random_simple_polygon(rng)
        x = rng.randint(-W, 2 * W)
        y = rng.randint(-W, 2 * W)
        assert bool(_kernel.point_in_polygon(x, y, verts)) == bool(
            _pure.point_in_polygon(x, y, verts)
        )
        lvl = rng.randint(0, 4)
        cell = TOP_CELL
        for _ in range(lvl):
            cell = subcell(cell, rng.randrange(81))
        args = (cell.level, cell.sx, cell.sy)
        assert _kernel.classify_cell(*args, verts) == _pure.classify_cell(*args, verts)
        r = rng.randint(0, W)
        assert _kernel.cell_intersects_disc(*args, x, y, r) == _pure.cell_intersects_disc(
            *args, x, y, r
        )
        if cell.level < MAX_LEVEL:
            assert bytes(_kernel.classify_children(*args, verts)) == bytes(
                _pure.classify_children(*args, verts)
            )
            assert int(_kernel.disc_mask(*args, x, y, r)) == int(_pure.disc_mask(*args, x, y, r))


@needs_kernel
def test_kernels_agree_on_locate():
    rng = random.Random(556)
    for _ in range(500):
        lvl = rng.randint(0, MAX_LEVEL - 1)
        cell = TOP_CELL
        for _ in range(lvl):
            cell = subcell(cell, rng.randrange(81))
        x = rng.randint(-10, W + 10)
        y = rng.randint(-10, W + 10)
        args = (x, y, cell.level, cell.sx, cell.sy)
        assert _kernel.cell_locate(*args) == _pure.cell_locate(*args)
