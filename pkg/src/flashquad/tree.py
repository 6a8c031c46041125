"""Copy-on-write tree operations over flash pages.

The index is an 81-way region tree: every node partitions its cell into a
9x9 grid, and each of the 81 entries is Empty, a child node, or a leaf
list holding object records.  Updates never touch existing pages; they
write new leaf/node pages bottom-up and finish with a new root, so every
previously committed root keeps describing a complete, readable tree.

Three record kinds live in leaf lists: point records for gantries, and
inside/edge records for zones.  A zone is decomposed from the top cell:
cells wholly inside get an inside record at the level where that is
detected, boundary cells get edge records once ``zone_max_depth`` is
reached.  The root cell itself cannot be a leaf entry (the root is always
a node page), so records attaching to it go into the root's self_list
slot.

Structural rules when a cell has to change shape:

* a leaf list whose point count would exceed ``leaf_split_threshold``
  splits into a node, points redistributed by subcell (repeatedly, until
  they separate or ``max_depth`` stops it);
* zone records on a splitting cell are pushed into all children they
  re-classify into at the child level;
* a zone that must be decomposed below a list-holding cell forces the
  same split.

This module does not know about versions or allocation policy; it reads
and writes through a small page-IO object (the store) that provides
``read_page``, ``alloc_page``, ``program_page`` and ``write_page``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from . import codec
from .codec import (
    ENTRY_EMPTY,
    KIND_POINT,
    KIND_ZONE_EDGE,
    KIND_ZONE_INSIDE,
    LEAF_CAPACITY,
    NO_PAGE,
    NODE_FANOUT,
    GantryObject,
    LeafListPage,
    LeafRecord,
    NodePage,
    ZoneObject,
    decode_leaf_list,
    decode_node,
    decode_object_page,
    encode_gantry,
    encode_leaf_list,
    encode_node,
    encode_zone,
    entry_addr,
    entry_is_child,
    entry_is_empty,
    entry_is_leaf,
    make_child,
    make_leaf,
    node_entry_word,
    node_with_entry,
    validate_node,
    zone_page_count,
)
from .errors import (
    ConflictError,
    DomainError,
    FormatError,
    IntegrityError,
    NotFoundError,
)
from .geometry import (
    MAX_LEVEL,
    TOP_CELL,
    Cell,
    CellClass,
    cell_index,
    classify_cell,
    classify_children,
    disc_mask,
    dist2,
    in_world,
    point_in_polygon,
    subcell,
    validate_polygon,
)

PAGE_SIZE = codec.PAGE_SIZE
_MIB = 1024 * 1024

# zone placement modes
_INSIDE = 1  # attach an inside record at this cell
_EDGE = 2  # attach an edge record at this cell
_DESCEND = 3  # boundary cell above zone_max_depth: place records deeper


@dataclass(frozen=True)
class BuildParams:
    """Tunables for tree construction."""

    leaf_split_threshold: int = 8
    max_depth: int = 5
    zone_max_depth: int = 3
    dedup: bool = True

    def __post_init__(self) -> None:
        if not 0 <= self.max_depth <= MAX_LEVEL:
            raise DomainError(f"max_depth must be 0..{MAX_LEVEL}, got {self.max_depth}")
        if not 0 <= self.zone_max_depth <= self.max_depth:
            raise DomainError("zone_max_depth must be between 0 and max_depth")
        if self.leaf_split_threshold < 0:
            raise DomainError("leaf_split_threshold must be non-negative")


@dataclass(frozen=True)
class QueryHit:
    object_id: int
    kind: str  # "gantry" | "zone"
    basis: str  # "inside-entry" | "edge-test" | "distance"
    position: Optional[tuple[int, int]] = None  # gantry location


@dataclass(frozen=True)
class QueryResult:
    hits: tuple[QueryHit, ...]
    pages_read: int  # actual device reads (cache misses)
    cache_hits: int
    node_reads: int  # page requests by kind, hits included
    list_reads: int
    object_reads: int

    @property
    def ids(self) -> frozenset[int]:
        return frozenset(h.object_id for h in self.hits)


_STAT_ROWS = (
    ("a", "objects", "Number of objects in database"),
    ("b", "total_pages", "Flash pages for index and data"),
    ("c", "total_mib", "Size (MiB)"),
    ("d", "index_pages", "Flash pages for index"),
    ("e", "leaf_refs", "Objects referenced by leafs"),
    ("f", "refs_per_object", "Leaf nodes per object"),
    ("g", "empty_entries", "Leaf entries not used, empty"),
    ("h", "used_entries", "Leaf entries set"),
    ("i", "max_depth", "Max index tree depth"),
    ("j", "zone_inside", "Zone inside entries"),
    ("k", "zone_edge", "Zone edge entries"),
    ("l", "distinct_leaf_pages", "Distinct leaf pages"),
    ("m", "leaf_pages", "Total leaf pages"),
    ("n", "duplicate_leaf_pages", "Duplicate leaf pages"),
    ("o", "pages_deduped", "Flash pages, dups removed"),
    ("p", "mib_deduped", "Size, dups removed (MiB)"),
    ("q", "index_pages_deduped", "Index pages, dups removed"),
    ("r", "index_mib_deduped", "Size of index, dups removed (MiB)"),
)


@dataclass(frozen=True)
class StatsReport:
    """Structure accounting for one version (rows a..r of `rows()`).

    "Index" covers node and leaf-list pages; object pages are data.  Leaf
    pages are counted per reference (a page shared by several entries
    counts once per entry), so ``leaf_pages`` minus ``distinct_leaf_pages``
    is the number of pages content sharing saves.  ``max_depth`` is the
    level of the deepest cell holding records, counting the top cell as
    level 0.
    """

    objects: int
    total_pages: int
    total_mib: float
    index_pages: int
    leaf_refs: int
    refs_per_object: float
    empty_entries: int
    used_entries: int
    max_depth: int
    zone_inside: int
    zone_edge: int
    distinct_leaf_pages: int
    leaf_pages: int
    duplicate_leaf_pages: int
    pages_deduped: int
    mib_deduped: float
    index_pages_deduped: int
    index_mib_deduped: float

    def rows(self) -> list[tuple[str, str, object]]:
        return [(letter, desc, getattr(self, name)) for letter, name, desc in _STAT_ROWS]


# ---------------------------------------------------------------------------
# reachability walk


@dataclass
class WalkReport:
    """Everything one full traversal of a version can tell us."""

    root: int
    nodes: dict[int, int] = field(default_factory=dict)  # addr -> level
    leaf_pages: dict[int, LeafListPage] = field(default_factory=dict)
    leaf_visits: int = 0
    distinct_leaf_hashes: set[bytes] = field(default_factory=set)
    leaf_refs: int = 0
    point_refs: int = 0
    zone_inside: int = 0
    zone_edge: int = 0
    objects: dict[int, tuple[str, int]] = field(default_factory=dict)  # head -> (kind, id)
    object_pages: set[int] = field(default_factory=set)
    empty_entries: int = 0
    used_entries: int = 0
    max_attach_level: int = 0
    problems: list[str] = field(default_factory=list)

    @property
    def reachable(self) -> frozenset[int]:
        return frozenset(self.nodes) | frozenset(self.leaf_pages) | frozenset(self.object_pages)


def walk_version(
    read: Callable[[int], bytes], root_page: int, total_pages: Optional[int] = None
) -> WalkReport:
    """Traverse every page reachable from ``root_page``.

    Collects structure counts and integrity problems instead of raising,
    so verification can report everything it finds; descent is pruned at
    the first undecodable page on a branch.
    """
    rep = WalkReport(root=root_page)
    leaf_hash: dict[int, bytes] = {}
    obj_expect: dict[int, str] = {}

    def load_object(head: int, expect: str) -> None:
        prior = obj_expect.get(head)
        if prior is not None:
            if prior != expect:
                rep.problems.append(f"object page {head} referenced as both {prior} and {expect}")
            return
        obj_expect[head] = expect
        try:
            obj = decode_object_page(read(head), addr=head)
        except (FormatError, IntegrityError) as e:
            rep.problems.append(str(e))
            return
        if obj["kind"] != expect:
            rep.problems.append(f"object page {head} is a {obj['kind']}, expected {expect}")
            return
        rep.object_pages.add(head)
        rep.objects[head] = (obj["kind"], obj["object_id"])
        if obj["kind"] == "zone":
            total = obj["vertex_count"]
            got = len(obj["vertices"])
            nxt = obj["next"]
            seen = {head}
            while nxt != NO_PAGE:
                if nxt in seen:
                    rep.problems.append(f"zone {obj['object_id']} page chain loops at {nxt}")
                    return
                seen.add(nxt)
                try:
                    cont = decode_object_page(read(nxt), addr=nxt)
                except (FormatError, IntegrityError) as e:
                    rep.problems.append(str(e))
                    return
                if cont["kind"] != "zone_cont" or cont["object_id"] != obj["object_id"]:
                    rep.problems.append(f"zone {obj['object_id']} has a bad continuation at {nxt}")
                    return
                rep.object_pages.add(nxt)
                got += len(cont["vertices"])
                nxt = cont["next"]
            if got != total:
                rep.problems.append(
                    f"zone {obj['object_id']} stores {got} vertices, header says {total}"
                )

    def visit_chain(head: int, attach_level: int) -> None:
        rep.max_attach_level = max(rep.max_attach_level, attach_level)
        addr = head
        seen: set[int] = set()
        while addr != NO_PAGE:
            if addr in seen:
                rep.problems.append(f"leaf chain loops at page {addr}")
                return
            seen.add(addr)
            page = rep.leaf_pages.get(addr)
            if page is None:
                raw = read(addr)
                try:
                    page = decode_leaf_list(raw, total_pages, addr=addr)
                except (FormatError, IntegrityError) as e:
                    rep.problems.append(str(e))
                    return
                rep.leaf_pages[addr] = page
                leaf_hash[addr] = hashlib.sha256(raw).digest()
            rep.leaf_visits += 1
            rep.distinct_leaf_hashes.add(leaf_hash[addr])
            for rec in page.records:
                rep.leaf_refs += 1
                if rec.kind == KIND_POINT:
                    rep.point_refs += 1
                    load_object(rec.object_page, "gantry")
                else:
                    if rec.kind == KIND_ZONE_INSIDE:
                        rep.zone_inside += 1
                    else:
                        rep.zone_edge += 1
                    load_object(rec.object_page, "zone")
            addr = page.next

    def visit_node(addr: int, level: int) -> None:
        if addr in rep.nodes:
            rep.problems.append(f"node page {addr} reachable twice")
            return
        try:
            node = decode_node(read(addr), total_pages, addr=addr)
        except (FormatError, IntegrityError) as e:
            rep.problems.append(str(e))
            return
        if node.level != level:
            rep.problems.append(f"node {addr} has level {node.level}, expected {level}")
        rep.nodes[addr] = node.level
        if node.self_list != ENTRY_EMPTY:
            visit_chain(entry_addr(node.self_list), level)
        for word in node.entries:
            if entry_is_empty(word):
                rep.empty_entries += 1
                continue
            rep.used_entries += 1
            if entry_is_child(word):
                if level >= MAX_LEVEL:
                    rep.problems.append(f"node {addr} at level {level} has a child entry")
                    continue
                visit_node(entry_addr(word), level + 1)
            else:
                visit_chain(entry_addr(word), level + 1)

    visit_node(root_page, 0)
    return rep


def stats_from_walk(rep: WalkReport) -> StatsReport:
    if rep.problems:
        raise IntegrityError("; ".join(rep.problems[:8]))
    node_count = len(rep.nodes)
    m = rep.leaf_visits
    l = len(rep.distinct_leaf_hashes)
    n = m - l
    obj_pages = len(rep.object_pages)
    a = len(rep.objects)
    b = node_count + m + obj_pages
    d = node_count + m
    return StatsReport(
        objects=a,
        total_pages=b,
        total_mib=b * PAGE_SIZE / _MIB,
        index_pages=d,
        leaf_refs=rep.leaf_refs,
        refs_per_object=(rep.leaf_refs / a) if a else 0.0,
        empty_entries=rep.empty_entries,
        used_entries=rep.used_entries,
        max_depth=rep.max_attach_level,
        zone_inside=rep.zone_inside,
        zone_edge=rep.zone_edge,
        distinct_leaf_pages=l,
        leaf_pages=m,
        duplicate_leaf_pages=n,
        pages_deduped=b - n,
        mib_deduped=(b - n) * PAGE_SIZE / _MIB,
        index_pages_deduped=d - n,
        index_mib_deduped=(d - n) * PAGE_SIZE / _MIB,
    )


# ---------------------------------------------------------------------------
# read-only handle


class Handle:
    """Read-only view of one version's tree.

    All page access goes through the store's cache; per-query read counts
    come from the store's counters, so a warm cache shows up as cache
    hits, not reads.
    """

    def __init__(self, io, root_page: int, version_no: int):
        self._io = io
        self.root_page = root_page
        self.version_no = version_no

    def __repr__(self) -> str:  # pragma: no cover
        return f"Handle(version={self.version_no}, root={self.root_page})"

    # -- object loading (shared by both queries) --

    def _load_object(self, addr: int, memo: dict, tally: list[int]) -> dict:
        obj = memo.get(addr)
        if obj is not None:
            return obj
        tally[2] += 1
        obj = decode_object_page(self._io.read_page(addr), addr=addr)
        if obj["kind"] == "zone":
            verts = list(obj["vertices"])
            nxt = obj["next"]
            while nxt != NO_PAGE:
                tally[2] += 1
                cont = decode_object_page(self._io.read_page(nxt), addr=nxt)
                verts.extend(cont["vertices"])
                nxt = cont["next"]
            obj = {**obj, "vertices": tuple(verts)}
        memo[addr] = obj
        return obj

    def _chain_pages(self, head: int, tally: list[int]) -> Iterable[LeafListPage]:
        addr = head
        while addr != NO_PAGE:
            tally[1] += 1
            page = decode_leaf_list(self._io.read_page(addr), addr=addr)
            yield page
            addr = page.next

    def query_zones_at(self, x: int, y: int) -> QueryResult:
        """Zones containing the point, from the single descent path for it."""
        if not in_world(x, y):
            raise DomainError(f"point ({x}, {y}) outside the world square")
        reads0, hits0 = self._io.read_counters()
        tally = [0, 0, 0]  # node, list, object requests
        memo: dict[int, dict] = {}
        found: dict[int, QueryHit] = {}

        def collect(head: int) -> None:
            for page in self._chain_pages(head, tally):
                for rec in page.records:
                    if rec.kind == KIND_POINT:
                        continue
                    obj = self._load_object(rec.object_page, memo, tally)
                    zid = obj["object_id"]
                    if rec.kind == KIND_ZONE_INSIDE:
                        found[zid] = QueryHit(zid, "zone", "inside-entry")
                    elif zid not in found and point_in_polygon(x, y, obj["vertices"]):
                        found[zid] = QueryHit(zid, "zone", "edge-test")

        cell = TOP_CELL
        addr = self.root_page
        while True:
            tally[0] += 1
            page = self._io.read_page(addr)
            validate_node(page, addr)
            self_list = int.from_bytes(page[codec.NODE_SELF_LIST_OFF : codec.NODE_SELF_LIST_OFF + 3], "big")
            if self_list != ENTRY_EMPTY:
                collect(entry_addr(self_list))
            idx = cell_index(cell, x, y)
            word = node_entry_word(page, idx // 9, idx % 9)
            if entry_is_empty(word):
                break
            if entry_is_leaf(word):
                collect(entry_addr(word))
                break
            cell = subcell(cell, idx)
            addr = entry_addr(word)

        reads1, hits1 = self._io.read_counters()
        hits = tuple(sorted(found.values(), key=lambda h: h.object_id))
        return QueryResult(hits, reads1 - reads0, hits1 - hits0, tally[0], tally[1], tally[2])

    def query_gantries_within(self, x: int, y: int, radius: int) -> QueryResult:
        """Gantries within ``radius`` metres of (x, y), exact integer test."""
        if radius < 0:
            raise DomainError("radius must be non-negative")
        reads0, hits0 = self._io.read_counters()
        tally = [0, 0, 0]
        memo: dict[int, dict] = {}
        found: dict[int, QueryHit] = {}
        r2 = radius * radius

        stack: list[tuple[Cell, int]] = [(TOP_CELL, self.root_page)]
        while stack:
            cell, addr = stack.pop()
            tally[0] += 1
            page = self._io.read_page(addr)
            validate_node(page, addr)
            mask = disc_mask(cell, x, y, radius)
            off = codec.NODE_ENTRIES_OFF
            for idx in range(NODE_FANOUT):
                word = int.from_bytes(page[off : off + 3], "big")
                off += 3
                if word == ENTRY_EMPTY or not (mask >> idx) & 1:
                    continue
                if entry_is_child(word):
                    stack.append((subcell(cell, idx), entry_addr(word)))
                    continue
                for lpage in self._chain_pages(entry_addr(word), tally):
                    for rec in lpage.records:
                        if rec.kind != KIND_POINT:
                            continue
                        obj = self._load_object(rec.object_page, memo, tally)
                        if dist2(obj["x"], obj["y"], x, y) <= r2:
                            gid = obj["object_id"]
                            found[gid] = QueryHit(gid, "gantry", "distance", (obj["x"], obj["y"]))

        reads1, hits1 = self._io.read_counters()
        hits = tuple(sorted(found.values(), key=lambda h: h.object_id))
        return QueryResult(hits, reads1 - reads0, hits1 - hits0, tally[0], tally[1], tally[2])

    def walk(self) -> WalkReport:
        return walk_version(self._io.read_page, self.root_page, self._io.total_pages)

    def stats(self) -> StatsReport:
        return stats_from_walk(self.walk())

    def reachable_pages(self) -> frozenset[int]:
        rep = self.walk()
        if rep.problems:
            raise IntegrityError("; ".join(rep.problems[:8]))
        return rep.reachable


# ---------------------------------------------------------------------------
# copy-on-write editor


def write_empty_root(io) -> int:
    """Program a fresh all-empty level-0 node; returns its page address."""
    return io.write_page(encode_node(NodePage(0)))


class TreeEditor:
    """Mutations for one in-progress version.

    Each public method takes the current root address and returns the new
    one, programming only fresh pages.  The caller (store session) owns
    allocation, pending-page tracking and the final commit.
    """

    def __init__(self, io, params: BuildParams):
        self._io = io
        self.params = params
        self._objs: dict[int, dict] = {}

    # -- shared small helpers --

    def _read_node(self, addr: int) -> bytes:
        page = self._io.read_page(addr)
        validate_node(page, addr)
        return page

    def _load(self, addr: int) -> dict:
        obj = self._objs.get(addr)
        if obj is not None:
            return obj
        obj = decode_object_page(self._io.read_page(addr), addr=addr)
        if obj["kind"] == "zone":
            verts = list(obj["vertices"])
            nxt = obj["next"]
            while nxt != NO_PAGE:
                cont = decode_object_page(self._io.read_page(nxt), addr=nxt)
                verts.extend(cont["vertices"])
                nxt = cont["next"]
            obj = {**obj, "vertices": tuple(verts)}
        self._objs[addr] = obj
        return obj

    def _chain_records(self, head: int) -> list[LeafRecord]:
        records: list[LeafRecord] = []
        addr = head
        while addr != NO_PAGE:
            page = decode_leaf_list(self._io.read_page(addr), addr=addr)
            records.extend(page.records)
            addr = page.next
        return records

    def _write_chain(self, records: Sequence[LeafRecord]) -> int:
        """Lay records out over fresh chained pages, tail first."""
        addr = NO_PAGE
        chunks = [records[i : i + LEAF_CAPACITY] for i in range(0, len(records), LEAF_CAPACITY)]
        for chunk in reversed(chunks):
            addr = self._io.write_page(
                encode_leaf_list(LeafListPage(list(chunk), addr)), dedupable=True
            )
        return addr

    def _append(self, head: int, rec: LeafRecord) -> int:
        """One-page append: extend the head page or chain a new one onto it."""
        page = decode_leaf_list(self._io.read_page(head), addr=head)
        if len(page.records) < LEAF_CAPACITY:
            data = encode_leaf_list(LeafListPage(page.records + [rec], page.next))
        else:
            data = encode_leaf_list(LeafListPage([rec], head))
        return self._io.write_page(data, dedupable=True)

    def _filter_chain(self, head: int, drop: set[int]) -> tuple[int, int]:
        """Rewrite a chain without records referencing ``drop`` pages.

        Returns (new head or NO_PAGE, records removed).  The longest
        untouched tail run keeps its existing pages.
        """
        pages: list[tuple[int, LeafListPage]] = []
        addr = head
        while addr != NO_PAGE:
            page = decode_leaf_list(self._io.read_page(addr), addr=addr)
            pages.append((addr, page))
            addr = page.next
        removed = 0
        new_next = NO_PAGE
        share_tail = True
        for addr, page in reversed(pages):
            kept = [r for r in page.records if r.object_page not in drop]
            if share_tail and len(kept) == len(page.records):
                new_next = addr
                continue
            share_tail = False
            removed += len(page.records) - len(kept)
            if kept:
                new_next = self._io.write_page(
                    encode_leaf_list(LeafListPage(kept, new_next)), dedupable=True
                )
        return new_next, removed

    # -- point insertion --

    def insert_gantry(self, root: int, gid: int, x: int, y: int) -> int:
        if not in_world(x, y):
            raise DomainError(f"gantry position ({x}, {y}) outside the world square")
        if not 0 <= gid < 1 << 32:
            raise DomainError(f"object id {gid} out of u32 range")
        self._objs = {}
        self._check_duplicate(root, gid, x, y)
        obj_addr = self._io.write_page(encode_gantry(GantryObject(gid, x, y)))
        rec = LeafRecord(KIND_POINT, obj_addr)

        page = self._read_node(root)
        idx = cell_index(TOP_CELL, x, y)
        word = node_entry_word(page, idx // 9, idx % 9)
        new_word = self._point_entry(word, subcell(TOP_CELL, idx), rec, x, y)
        return self._io.write_page(node_with_entry(page, idx // 9, idx % 9, new_word))

    def _check_duplicate(self, root: int, gid: int, x: int, y: int) -> None:
        """Reject an id already present in the cell the new point lands in."""
        cell = TOP_CELL
        addr = root
        while True:
            page = self._read_node(addr)
            idx = cell_index(cell, x, y)
            word = node_entry_word(page, idx // 9, idx % 9)
            if entry_is_empty(word):
                return
            if entry_is_leaf(word):
                for rec in self._chain_records(entry_addr(word)):
                    if rec.kind == KIND_POINT and self._load(rec.object_page)["object_id"] == gid:
                        raise ConflictError(f"gantry id {gid} already present at this location")
                return
            cell = subcell(cell, idx)
            addr = entry_addr(word)

    def _point_entry(self, word: int, cell: Cell, rec: LeafRecord, x: int, y: int) -> int:
        if entry_is_child(word):
            page = self._read_node(entry_addr(word))
            idx = cell_index(cell, x, y)
            sub_word = node_entry_word(page, idx // 9, idx % 9)
            new_word = self._point_entry(sub_word, subcell(cell, idx), rec, x, y)
            return make_child(
                self._io.write_page(node_with_entry(page, idx // 9, idx % 9, new_word))
            )
        if entry_is_empty(word):
            existing: list[LeafRecord] = []
        else:
            existing = self._chain_records(entry_addr(word))
        n_points = 1 + sum(1 for r in existing if r.kind == KIND_POINT)
        if n_points > self.params.leaf_split_threshold and cell.level < self.params.max_depth:
            pts, zitems = self._partition(existing)
            pts.append((rec, x, y))
            return self._build_cell(cell, pts, zitems)
        if entry_is_empty(word):
            return make_leaf(self._write_chain([rec]))
        return make_leaf(self._append(entry_addr(word), rec))

    def _partition(self, records: Iterable[LeafRecord]) -> tuple[list, list]:
        """Split chain records into point and zone placement items."""
        pts: list[tuple[LeafRecord, int, int]] = []
        zitems: list[tuple[int, int, Optional[tuple]]] = []
        for rec in records:
            obj = self._load(rec.object_page)
            if rec.kind == KIND_POINT:
                pts.append((rec, obj["x"], obj["y"]))
            elif rec.kind == KIND_ZONE_INSIDE:
                zitems.append((_INSIDE, rec.object_page, None))
            else:
                zitems.append((_EDGE, rec.object_page, tuple(obj["vertices"])))
        return pts, zitems

    def _child_modes81(self, mode: int, cell: Cell, verts: Optional[tuple]) -> list:
        """Placement mode of a zone item in each of the cell's 81 subcells.

        None means the subcell is outside the polygon and takes nothing.
        """
        if mode == _INSIDE:
            return [_INSIDE] * NODE_FANOUT  # an inside cell has only inside subcells
        deeper = mode == _DESCEND and cell.level + 1 < self.params.zone_max_depth
        return [
            None
            if cls == CellClass.OUTSIDE
            else _INSIDE
            if cls == CellClass.INSIDE
            else _DESCEND
            if deeper
            else _EDGE
            for cls in classify_children(cell, verts)
        ]

    def _build_cell(self, cell: Cell, pts: list, zitems: list) -> int:
        """Materialize a cell from in-memory records; returns its entry word."""
        if not pts and not zitems:
            return ENTRY_EMPTY
        must_split = any(mode == _DESCEND for mode, _, _ in zitems)
        if (
            len(pts) > self.params.leaf_split_threshold or must_split
        ) and cell.level < self.params.max_depth:
            bp: list[list] = [[] for _ in range(NODE_FANOUT)]
            bz: list[list] = [[] for _ in range(NODE_FANOUT)]
            for item in pts:
                bp[cell_index(cell, item[1], item[2])].append(item)
            for mode, addr, verts in zitems:
                for idx, m in enumerate(self._child_modes81(mode, cell, verts)):
                    if m is not None:
                        bz[idx].append((m, addr, verts))
            entries = [
                self._build_cell(subcell(cell, idx), bp[idx], bz[idx])
                for idx in range(NODE_FANOUT)
            ]
            if all(entry_is_empty(w) for w in entries):
                return ENTRY_EMPTY
            return make_child(self._io.write_page(encode_node(NodePage(cell.level, entries))))
        records = [item[0] for item in pts]
        records += [
            LeafRecord(KIND_ZONE_INSIDE if mode == _INSIDE else KIND_ZONE_EDGE, addr)
            for mode, addr, _ in zitems
        ]
        return make_leaf(self._write_chain(records))

    # -- zone insertion --

    def insert_zone(self, root: int, zid: int, verts: Sequence[tuple[int, int]]) -> int:
        if not 0 <= zid < 1 << 32:
            raise DomainError(f"object id {zid} out of u32 range")
        verts = tuple((int(x), int(y)) for x, y in verts)
        validate_polygon(verts)
        top = classify_cell(TOP_CELL, verts)
        if top == CellClass.OUTSIDE:
            raise DomainError("zone polygon does not intersect the world square")
        self._objs = {}

        n_pages = zone_page_count(len(verts))
        addrs = [self._io.alloc_page() for _ in range(n_pages)]
        for addr, data in zip(addrs, encode_zone(ZoneObject(zid, verts), addrs[1:])):
            self._io.program_page(addr, data)
        self._zone_addr = addrs[0]
        self._zone_verts = verts

        page = self._read_node(root)
        node = decode_node(page)
        if top == CellClass.INSIDE or self.params.zone_max_depth == 0:
            # records for the top cell itself live in the root's self_list
            kind = KIND_ZONE_INSIDE if top == CellClass.INSIDE else KIND_ZONE_EDGE
            rec = LeafRecord(kind, self._zone_addr)
            if node.self_list == ENTRY_EMPTY:
                node.self_list = make_leaf(self._write_chain([rec]))
            else:
                node.self_list = make_leaf(self._append(entry_addr(node.self_list), rec))
        else:
            node.entries = self._zone_entries(node.entries, TOP_CELL, _DESCEND)
        return self._io.write_page(encode_node(node))

    def _zone_entries(self, entries: list, cell: Cell, mode: int) -> list:
        """Entry words of a split cell after placing the staged zone in each child."""
        modes = self._child_modes81(mode, cell, self._zone_verts)
        return [
            w if m is None else self._zone_entry(w, subcell(cell, idx), m)
            for idx, (w, m) in enumerate(zip(entries, modes))
        ]

    def _zone_entry(self, word: int, cell: Cell, mode: int) -> int:
        if mode == _DESCEND:
            if entry_is_empty(word):
                return self._build_cell(cell, [], [(_DESCEND, self._zone_addr, self._zone_verts)])
            if entry_is_leaf(word):
                pts, zitems = self._partition(self._chain_records(entry_addr(word)))
                zitems.append((_DESCEND, self._zone_addr, self._zone_verts))
                return self._build_cell(cell, pts, zitems)
            node = decode_node(self._read_node(entry_addr(word)))
            node.entries = self._zone_entries(node.entries, cell, _DESCEND)
            return make_child(self._io.write_page(encode_node(node)))
        # attach an inside/edge record at this cell
        rec = LeafRecord(KIND_ZONE_INSIDE if mode == _INSIDE else KIND_ZONE_EDGE, self._zone_addr)
        if entry_is_empty(word):
            return make_leaf(self._write_chain([rec]))
        if entry_is_leaf(word):
            return make_leaf(self._append(entry_addr(word), rec))
        # the cell is split: push the record into the children it maps onto
        node = decode_node(self._read_node(entry_addr(word)))
        node.entries = self._zone_entries(node.entries, cell, mode)
        return make_child(self._io.write_page(encode_node(node)))

    # -- deletion --

    def delete_object(self, root: int, oid: int, kind: Optional[str] = None) -> int:
        """Remove every record of the object with id ``oid``.

        ``kind`` ("gantry" or "zone") disambiguates when both an id's
        gantry and zone exist; without it such a delete is rejected.
        """
        self._objs = {}
        rep = walk_version(self._io.read_page, root, self._io.total_pages)
        if rep.problems:
            raise IntegrityError("; ".join(rep.problems[:8]))
        matches = {addr: k for addr, (k, i) in rep.objects.items() if i == oid}
        if kind is not None:
            matches = {addr: k for addr, k in matches.items() if k == kind}
        if not matches:
            raise NotFoundError(f"no {kind or 'object'} with id {oid}")
        if kind is None and len(set(matches.values())) > 1:
            raise ConflictError(f"id {oid} names both a gantry and a zone; pass the kind")
        targets = set(matches)

        page = self._read_node(root)
        node = decode_node(page)
        if node.self_list != ENTRY_EMPTY:
            new_head, _ = self._filter_chain(entry_addr(node.self_list), targets)
            node.self_list = ENTRY_EMPTY if new_head == NO_PAGE else make_leaf(new_head)
        node.entries = [self._delete_entry(w, targets) for w in node.entries]
        return self._io.write_page(encode_node(node))

    def _delete_entry(self, word: int, targets: set[int]) -> int:
        if entry_is_empty(word):
            return word
        if entry_is_leaf(word):
            new_head, removed = self._filter_chain(entry_addr(word), targets)
            if not removed:
                return word
            return ENTRY_EMPTY if new_head == NO_PAGE else make_leaf(new_head)
        node = decode_node(self._read_node(entry_addr(word)))
        new_entries = [self._delete_entry(w, targets) for w in node.entries]
        new_self = node.self_list
        if new_self != ENTRY_EMPTY:
            head, removed = self._filter_chain(entry_addr(new_self), targets)
            if removed:
                new_self = ENTRY_EMPTY if head == NO_PAGE else make_leaf(head)
        if new_entries == node.entries and new_self == node.self_list:
            return word  # untouched subtree stays shared
        if new_self == ENTRY_EMPTY and all(entry_is_empty(w) for w in new_entries):
            return ENTRY_EMPTY  # node emptied out: collapse into the parent
        node.entries = new_entries
        node.self_list = new_self
        return make_child(self._io.write_page(encode_node(node)))
