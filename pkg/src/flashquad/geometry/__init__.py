"""Exact-integer geometry for the 9x9 recursive grid.

The world is the half-open square [0, 2_000_000) ** 2 in signed 32-bit
metres.  A cell at depth L is addressed by its scaled origin (sx, sy):
the cell covers [sx, sx + 2_000_000) x [sy, sy + 2_000_000) after all
point coordinates are multiplied by 9**L, which keeps every boundary an
integer and every predicate exact.

Two interchangeable kernels provide the hot predicates: a compiled one
(``_kernel``, built from Cython) and a pure-Python one (``_pure``).  The
compiled kernel is preferred when present; set FLASHQUAD_PURE=1 to force
the fallback.
"""

import os
from enum import IntEnum
from fractions import Fraction
from typing import NamedTuple, Sequence, Tuple

from ..errors import DomainError

if os.environ.get("FLASHQUAD_PURE"):
    from . import _pure as _impl
else:
    try:
        from . import _kernel as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _pure as _impl

WORLD_SIZE = 2_000_000
MAX_LEVEL = 5
FANOUT_SIDE = 9

COORD_MIN = -(2**31)
COORD_MAX = 2**31 - 1

Point = Tuple[int, int]


def kernel_name() -> str:
    """'compiled' or 'pure', whichever is actually serving the predicates."""
    return "compiled" if _impl.__name__.endswith("_kernel") else "pure"


class CellClass(IntEnum):
    OUTSIDE = 0
    INSIDE = 1
    EDGE = 2


class Cell(NamedTuple):
    """A grid cell: depth plus scaled origin (origin * 9**level)."""

    level: int
    sx: int
    sy: int

    @property
    def size(self) -> Fraction:
        """Side length in metres (exact; not an integer above level 0)."""
        return Fraction(WORLD_SIZE, 9**self.level)

    @property
    def origin(self) -> Tuple[Fraction, Fraction]:
        scale = 9**self.level
        return Fraction(self.sx, scale), Fraction(self.sy, scale)


TOP_CELL = Cell(0, 0, 0)


def _check_point(x: int, y: int) -> None:
    if not (COORD_MIN <= x <= COORD_MAX and COORD_MIN <= y <= COORD_MAX):
        raise DomainError(f"coordinate ({x}, {y}) outside signed 32-bit range")


def in_world(x: int, y: int) -> bool:
    return 0 <= x < WORLD_SIZE and 0 <= y < WORLD_SIZE


def cell_index(cell: Cell, x: int, y: int) -> int:
    """Index 9*i + j of the subcell of *cell* containing (x, y).

    Raises DomainError when the point is not inside the cell, which for
    TOP_CELL means outside the world square.
    """
    _check_point(x, y)
    idx = _impl.cell_locate(x, y, cell.level, cell.sx, cell.sy)
    if idx < 0:
        raise DomainError(f"point ({x}, {y}) outside cell {cell}")
    return idx


def subcell(cell: Cell, index: int) -> Cell:
    """Child cell at slot ``index`` (row i = index // 9, column j = index % 9)."""
    if cell.level >= MAX_LEVEL:
        raise DomainError(f"cell at level {cell.level} cannot be subdivided")
    if not 0 <= index < 81:
        raise DomainError(f"subcell index {index} out of range")
    i, j = divmod(index, 9)
    return Cell(cell.level + 1, 9 * cell.sx + j * WORLD_SIZE, 9 * cell.sy + i * WORLD_SIZE)


def cell_contains(cell: Cell, x: int, y: int) -> bool:
    scale = 9**cell.level
    rx = x * scale - cell.sx
    ry = y * scale - cell.sy
    return 0 <= rx < WORLD_SIZE and 0 <= ry < WORLD_SIZE


def point_in_polygon(x: int, y: int, verts: Sequence[Point]) -> bool:
    """Even-odd containment test; points on the boundary count as inside."""
    return bool(_impl.point_in_polygon(x, y, verts))


def classify_cell(cell: Cell, verts: Sequence[Point]) -> CellClass:
    """Relation of the closed cell box to the polygon.

    EDGE when any polygon edge touches the box; otherwise INSIDE or
    OUTSIDE by containment of the box (decided via one corner, which is
    sufficient once no edge crosses the box).
    """
    return CellClass(_impl.classify_cell(cell.level, cell.sx, cell.sy, verts))


def classify_children(cell: Cell, verts: Sequence[Point]) -> bytes:
    """Classes of all 81 subcells of *cell*, row-major (index 9*i + j).

    Equivalent to ``classify_cell(subcell(cell, k), verts)`` for each k,
    but the polygon is loaded once for the whole batch.
    """
    if cell.level >= MAX_LEVEL:
        raise DomainError(f"cell at level {cell.level} cannot be subdivided")
    return bytes(_impl.classify_children(cell.level, cell.sx, cell.sy, verts))


def dist2(ax: int, ay: int, bx: int, by: int) -> int:
    return int(_impl.dist2(ax, ay, bx, by))


def cell_intersects_disc(cell: Cell, cx: int, cy: int, radius: int) -> bool:
    """True when the closed cell box meets the closed disc (exact integer test)."""
    if radius < 0:
        raise DomainError("radius must be non-negative")
    return bool(_impl.cell_intersects_disc(cell.level, cell.sx, cell.sy, cx, cy, radius))


def disc_mask(cell: Cell, cx: int, cy: int, radius: int) -> int:
    """Bitmask over the 81 subcells of *cell* that meet the closed disc.

    Bit ``9*i + j`` is set when subcell (i, j) intersects; one call
    replaces 81 ``cell_intersects_disc`` tests during query descent.
    """
    if radius < 0:
        raise DomainError("radius must be non-negative")
    if cell.level >= MAX_LEVEL:
        raise DomainError(f"cell at level {cell.level} cannot be subdivided")
    return int(_impl.disc_mask(cell.level, cell.sx, cell.sy, cx, cy, radius))


def validate_polygon(verts: Sequence[Point]) -> None:
    """Reject polygons the zone machinery cannot handle.

    Requirements: at least 3 vertices, all within signed 32-bit range,
    no repeated vertices, no zero-area spikes, no self-intersection.
    Vertices may lie outside the world square; only the zone's overlap
    with the world is ever recorded.
    """
    if len(verts) < 3:
        raise DomainError("polygon needs at least 3 vertices")
    for x, y in verts:
        _check_point(x, y)
    if not _impl.polygon_is_simple(verts):
        raise DomainError("polygon must be simple (no repeats, spikes, or crossings)")
