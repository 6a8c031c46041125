"""Binary page formats for the quadtree store.

All multi-byte fields are big-endian.  See FORMAT.md for the full offset
tables.  Page kinds, identified by their first byte:

  0x51  index node: 81 cell entries of 3 bytes each (243-byte entry area)
  0x4C  leaf list: up to 62 records of {kind u8, object_page u24}
  0x4F  object record: gantry point or zone polygon (chained when large)

A cell entry is a 24-bit word.  0xFFFFFF means Empty; otherwise the top two
bits select the reference kind (00 = child node, 01 = leaf list) and the low
22 bits are the page address.  Tag values 10 and 11 never occur in a valid
page.

Version records are 16-byte slots appended to directory pages; their valid
flag sits alone in a byte so a record can be revoked by a 1 -> 0 program
without touching anything else.
"""

from __future__ import annotations

import binascii
from dataclasses import dataclass, field

from .errors import FormatError

PAGE_SIZE = 256

# -- CRC ------------------------------------------------------------------

CRC_INIT = 0xFFFF


def crc16(data: bytes) -> int:
    """CRC-16/CCITT (poly 0x1021), initial value 0xFFFF."""
    return binascii.crc_hqx(data, CRC_INIT)


# -- cell entries ----------------------------------------------------------

ENTRY_EMPTY = 0xFFFFFF
ADDR_BITS = 22
ADDR_MASK = (1 << ADDR_BITS) - 1
TAG_CHILD = 0
TAG_LEAF = 1


def make_child(addr: int) -> int:
    if not 0 <= addr <= ADDR_MASK:
        raise FormatError(f"page address {addr} does not fit in {ADDR_BITS} bits")
    return addr


def make_leaf(addr: int) -> int:
    if not 0 <= addr <= ADDR_MASK:
        raise FormatError(f"page address {addr} does not fit in {ADDR_BITS} bits")
    return (TAG_LEAF << ADDR_BITS) | addr


def entry_is_empty(word: int) -> bool:
    return word == ENTRY_EMPTY


def entry_is_child(word: int) -> bool:
    return word >> ADDR_BITS == TAG_CHILD


def entry_is_leaf(word: int) -> bool:
    return word != ENTRY_EMPTY and word >> ADDR_BITS == TAG_LEAF


def entry_addr(word: int) -> int:
    return word & ADDR_MASK


def check_entry(word: int, total_pages: int | None = None) -> int:
    """Validate a raw 24-bit entry word and return it."""
    if word == ENTRY_EMPTY:
        return word
    tag = word >> ADDR_BITS
    if tag not in (TAG_CHILD, TAG_LEAF):
        raise FormatError(f"cell entry 0x{word:06x} has reserved tag bits {tag:02b}")
    if total_pages is not None and (word & ADDR_MASK) >= total_pages:
        raise FormatError(f"cell entry 0x{word:06x} addresses past end of device")
    return word


# -- index node pages --------------------------------------------------------

NODE_MAGIC = 0x51
NODE_FANOUT = 81
NODE_ENTRY_SIZE = 3
NODE_ENTRY_AREA = NODE_FANOUT * NODE_ENTRY_SIZE  # 243
NODE_SELF_LIST_OFF = 2  # 3 bytes; list pointer for the node's own cell
NODE_RESERVED_OFF = 5  # 6 bytes, 0xFF
NODE_CRC_OFF = 11  # 2 bytes over the entry area
NODE_ENTRIES_OFF = 13

MAX_NODE_LEVEL = 5


def node_entry_offset(i: int, j: int) -> int:
    """Byte offset of the entry for subcell row ``i``, column ``j``."""
    return NODE_ENTRIES_OFF + NODE_ENTRY_SIZE * (9 * i + j)


@dataclass
class NodePage:
    level: int
    entries: list[int] = field(default_factory=lambda: [ENTRY_EMPTY] * NODE_FANOUT)
    self_list: int = ENTRY_EMPTY  # Empty or a leaf-list entry for the node's own cell

    def entry(self, i: int, j: int) -> int:
        return self.entries[9 * i + j]


def encode_node(node: NodePage) -> bytes:
    if not 0 <= node.level <= MAX_NODE_LEVEL:
        raise FormatError(f"node level {node.level} out of range")
    if len(node.entries) != NODE_FANOUT:
        raise FormatError(f"node needs {NODE_FANOUT} entries, got {len(node.entries)}")
    if node.self_list != ENTRY_EMPTY and not entry_is_leaf(node.self_list):
        raise FormatError("self_list must be Empty or a leaf-list entry")
    buf = bytearray(b"\xff" * PAGE_SIZE)
    buf[0] = NODE_MAGIC
    buf[1] = node.level
    buf[NODE_SELF_LIST_OFF : NODE_SELF_LIST_OFF + 3] = node.self_list.to_bytes(3, "big")
    pos = NODE_ENTRIES_OFF
    for word in node.entries:
        buf[pos : pos + 3] = check_entry(word).to_bytes(3, "big")
        pos += 3
    crc = crc16(bytes(buf[NODE_ENTRIES_OFF:]))
    buf[NODE_CRC_OFF : NODE_CRC_OFF + 2] = crc.to_bytes(2, "big")
    return bytes(buf)


def validate_node(page: bytes, addr: int | None = None) -> None:
    """Cheap integrity check used on every node read."""
    where = "" if addr is None else f" at page {addr}"
    if page[0] != NODE_MAGIC:
        raise FormatError(f"bad node magic 0x{page[0]:02x}{where}")
    if page[1] > MAX_NODE_LEVEL:
        raise FormatError(f"node level {page[1]} out of range{where}")
    stored = int.from_bytes(page[NODE_CRC_OFF : NODE_CRC_OFF + 2], "big")
    if stored != crc16(page[NODE_ENTRIES_OFF:]):
        raise FormatError(f"node entry-area CRC mismatch{where}")


def decode_node(page: bytes, total_pages: int | None = None, addr: int | None = None) -> NodePage:
    if len(page) != PAGE_SIZE:
        raise FormatError(f"node page must be {PAGE_SIZE} bytes")
    validate_node(page, addr)
    entries = []
    pos = NODE_ENTRIES_OFF
    for _ in range(NODE_FANOUT):
        entries.append(check_entry(int.from_bytes(page[pos : pos + 3], "big"), total_pages))
        pos += 3
    self_list = int.from_bytes(page[NODE_SELF_LIST_OFF : NODE_SELF_LIST_OFF + 3], "big")
    if self_list != ENTRY_EMPTY:
        check_entry(self_list, total_pages)
        if not entry_is_leaf(self_list):
            raise FormatError("node self_list is not a leaf-list entry")
    return NodePage(level=page[1], entries=entries, self_list=self_list)


def node_entry_word(page: bytes, i: int, j: int) -> int:
    """Fetch one entry from a validated node page without a full decode."""
    off = node_entry_offset(i, j)
    return int.from_bytes(page[off : off + 3], "big")


def node_with_entry(page: bytes, i: int, j: int, word: int) -> bytes:
    """Copy of a node page with one entry replaced and the CRC rebuilt."""
    buf = bytearray(page)
    off = node_entry_offset(i, j)
    buf[off : off + 3] = check_entry(word).to_bytes(3, "big")
    crc = crc16(bytes(buf[NODE_ENTRIES_OFF:]))
    buf[NODE_CRC_OFF : NODE_CRC_OFF + 2] = crc.to_bytes(2, "big")
    return bytes(buf)


# -- leaf list pages -----------------------------------------------------------

LEAF_MAGIC = 0x4C
LEAF_COUNT_OFF = 1
LEAF_NEXT_OFF = 2
LEAF_RECORDS_OFF = 5
LEAF_RECORD_SIZE = 4
LEAF_CAPACITY = (PAGE_SIZE - LEAF_RECORDS_OFF - 3) // LEAF_RECORD_SIZE  # 62
LEAF_CRC_OFF = 254

KIND_POINT = 0
KIND_ZONE_INSIDE = 1
KIND_ZONE_EDGE = 2
RECORD_KINDS = (KIND_POINT, KIND_ZONE_INSIDE, KIND_ZONE_EDGE)

NO_PAGE = 0xFFFFFF  # "no next page" in chain links


@dataclass(frozen=True)
class LeafRecord:
    kind: int
    object_page: int


@dataclass
class LeafListPage:
    records: list[LeafRecord]
    next: int = NO_PAGE


def _tail_crc(buf: bytearray) -> None:
    buf[LEAF_CRC_OFF : LEAF_CRC_OFF + 2] = crc16(bytes(buf[:LEAF_CRC_OFF])).to_bytes(2, "big")


def _check_tail_crc(page: bytes, what: str, addr: int | None) -> None:
    where = "" if addr is None else f" at page {addr}"
    stored = int.from_bytes(page[LEAF_CRC_OFF : LEAF_CRC_OFF + 2], "big")
    if stored != crc16(page[:LEAF_CRC_OFF]):
        raise FormatError(f"{what} CRC mismatch{where}")


def encode_leaf_list(page: LeafListPage) -> bytes:
    if not 0 <= len(page.records) <= LEAF_CAPACITY:
        raise FormatError(f"leaf list holds at most {LEAF_CAPACITY} records, got {len(page.records)}")
    if page.next != NO_PAGE and not 0 <= page.next <= ADDR_MASK:
        raise FormatError(f"bad next pointer {page.next}")
    buf = bytearray(b"\xff" * PAGE_SIZE)
    buf[0] = LEAF_MAGIC
    buf[LEAF_COUNT_OFF] = len(page.records)
    buf[LEAF_NEXT_OFF : LEAF_NEXT_OFF + 3] = page.next.to_bytes(3, "big")
    pos = LEAF_RECORDS_OFF
    for rec in page.records:
        if rec.kind not in RECORD_KINDS:
            raise FormatError(f"bad leaf record kind {rec.kind}")
        if not 0 <= rec.object_page <= ADDR_MASK:
            raise FormatError(f"bad object page {rec.object_page}")
        buf[pos] = rec.kind
        buf[pos + 1 : pos + 4] = rec.object_page.to_bytes(3, "big")
        pos += LEAF_RECORD_SIZE
    _tail_crc(buf)
    return bytes(buf)


def decode_leaf_list(page: bytes, total_pages: int | None = None, addr: int | None = None) -> LeafListPage:
    if len(page) != PAGE_SIZE:
        raise FormatError(f"leaf list page must be {PAGE_SIZE} bytes")
    where = "" if addr is None else f" at page {addr}"
    if page[0] != LEAF_MAGIC:
        raise FormatError(f"bad leaf list magic 0x{page[0]:02x}{where}")
    _check_tail_crc(page, "leaf list", addr)
    count = page[LEAF_COUNT_OFF]
    if count > LEAF_CAPACITY:
        raise FormatError(f"leaf list count {count} exceeds capacity{where}")
    nxt = int.from_bytes(page[LEAF_NEXT_OFF : LEAF_NEXT_OFF + 3], "big")
    if nxt != NO_PAGE:
        if total_pages is not None and nxt >= total_pages:
            raise FormatError(f"leaf list next pointer past end of device{where}")
    records = []
    pos = LEAF_RECORDS_OFF
    for _ in range(count):
        kind = page[pos]
        if kind not in RECORD_KINDS:
            raise FormatError(f"bad leaf record kind {kind}{where}")
        obj = int.from_bytes(page[pos + 1 : pos + 4], "big")
        if total_pages is not None and obj >= total_pages:
            raise FormatError(f"leaf record object page past end of device{where}")
        records.append(LeafRecord(kind, obj))
        pos += LEAF_RECORD_SIZE
    return LeafListPage(records=records, next=nxt)


# -- object record pages -----------------------------------------------------

OBJ_MAGIC = 0x4F
OBJ_GANTRY = 0
OBJ_ZONE = 1
OBJ_ZONE_CONT = 2

ZONE_VERTS_OFF = 12
ZONE_VERTS_PER_PAGE = (LEAF_CRC_OFF - ZONE_VERTS_OFF) // 8  # 30


@dataclass(frozen=True)
class GantryObject:
    object_id: int
    x: int
    y: int


@dataclass(frozen=True)
class ZoneObject:
    object_id: int
    vertices: tuple[tuple[int, int], ...]


def _check_i32(v: int, what: str) -> int:
    if not -(1 << 31) <= v < 1 << 31:
        raise FormatError(f"{what} {v} does not fit in i32")
    return v & 0xFFFFFFFF


def encode_gantry(g: GantryObject) -> bytes:
    if not 0 <= g.object_id < 1 << 32:
        raise FormatError(f"object id {g.object_id} does not fit in u32")
    buf = bytearray(b"\xff" * PAGE_SIZE)
    buf[0] = OBJ_MAGIC
    buf[1] = OBJ_GANTRY
    buf[2:6] = g.object_id.to_bytes(4, "big")
    buf[6:10] = _check_i32(g.x, "x").to_bytes(4, "big")
    buf[10:14] = _check_i32(g.y, "y").to_bytes(4, "big")
    _tail_crc(buf)
    return bytes(buf)


def zone_page_count(vertex_count: int) -> int:
    return max(1, -(-vertex_count // ZONE_VERTS_PER_PAGE))


def encode_zone(z: ZoneObject, page_addrs: list[int]) -> list[bytes]:
    """Encode a zone polygon over a pre-allocated page chain.

    ``page_addrs`` supplies the address of every page after the first so the
    chain links can be written; its length must be ``zone_page_count(n) - 1``.
    """
    n = len(z.vertices)
    if not 3 <= n < 1 << 16:
        raise FormatError(f"zone needs 3..65535 vertices, got {n}")
    if not 0 <= z.object_id < 1 << 32:
        raise FormatError(f"object id {z.object_id} does not fit in u32")
    if len(page_addrs) != zone_page_count(n) - 1:
        raise FormatError("page_addrs length does not match vertex count")
    pages = []
    for pno in range(zone_page_count(n)):
        chunk = z.vertices[pno * ZONE_VERTS_PER_PAGE : (pno + 1) * ZONE_VERTS_PER_PAGE]
        buf = bytearray(b"\xff" * PAGE_SIZE)
        buf[0] = OBJ_MAGIC
        buf[1] = OBJ_ZONE if pno == 0 else OBJ_ZONE_CONT
        buf[2:6] = z.object_id.to_bytes(4, "big")
        if pno == 0:
            buf[6:8] = n.to_bytes(2, "big")
        buf[8] = len(chunk)
        nxt = page_addrs[pno] if pno < len(page_addrs) else NO_PAGE
        buf[9:12] = nxt.to_bytes(3, "big")
        pos = ZONE_VERTS_OFF
        for x, y in chunk:
            buf[pos : pos + 4] = _check_i32(x, "vertex x").to_bytes(4, "big")
            buf[pos + 4 : pos + 8] = _check_i32(y, "vertex y").to_bytes(4, "big")
            pos += 8
        _tail_crc(buf)
        pages.append(bytes(buf))
    return pages


def _i32(b: bytes) -> int:
    v = int.from_bytes(b, "big")
    return v - (1 << 32) if v >= 1 << 31 else v


def decode_object_page(page: bytes, addr: int | None = None) -> dict:
    """Decode one object page into a dict with a ``kind`` discriminator."""
    if len(page) != PAGE_SIZE:
        raise FormatError(f"object page must be {PAGE_SIZE} bytes")
    where = "" if addr is None else f" at page {addr}"
    if page[0] != OBJ_MAGIC:
        raise FormatError(f"bad object magic 0x{page[0]:02x}{where}")
    _check_tail_crc(page, "object record", addr)
    kind = page[1]
    object_id = int.from_bytes(page[2:6], "big")
    if kind == OBJ_GANTRY:
        return {"kind": "gantry", "object_id": object_id, "x": _i32(page[6:10]), "y": _i32(page[10:14])}
    if kind in (OBJ_ZONE, OBJ_ZONE_CONT):
        count = page[8]
        if count > ZONE_VERTS_PER_PAGE:
            raise FormatError(f"zone page vertex count {count} exceeds capacity{where}")
        verts = []
        pos = ZONE_VERTS_OFF
        for _ in range(count):
            verts.append((_i32(page[pos : pos + 4]), _i32(page[pos + 4 : pos + 8])))
            pos += 8
        out = {
            "kind": "zone" if kind == OBJ_ZONE else "zone_cont",
            "object_id": object_id,
            "vertices": verts,
            "next": int.from_bytes(page[9:12], "big"),
        }
        if kind == OBJ_ZONE:
            out["vertex_count"] = int.from_bytes(page[6:8], "big")
        return out
    raise FormatError(f"unknown object kind {kind}{where}")


# -- version records ----------------------------------------------------------

VERSION_MAGIC = b"FQ"
VERSION_RECORD_SIZE = 16
VERSION_FLAGS_OFF = 12
VERSION_CRC_OFF = 13
_BLANK_SLOT = b"\xff" * VERSION_RECORD_SIZE


@dataclass(frozen=True)
class VersionRecord:
    version_no: int
    root_page: int
    alloc_cursor: int


def encode_version_record(rec: VersionRecord) -> bytes:
    if not 1 <= rec.version_no < 1 << 32:
        raise FormatError(f"version number {rec.version_no} out of range")
    for name, v in (("root_page", rec.root_page), ("alloc_cursor", rec.alloc_cursor)):
        if not 0 <= v <= ADDR_MASK:
            raise FormatError(f"{name} {v} does not fit in {ADDR_BITS} bits")
    buf = bytearray(b"\xff" * VERSION_RECORD_SIZE)
    buf[0:2] = VERSION_MAGIC
    buf[2:6] = rec.version_no.to_bytes(4, "big")
    buf[6:9] = rec.root_page.to_bytes(3, "big")
    buf[9:12] = rec.alloc_cursor.to_bytes(3, "big")
    # flags byte stays 0xFF (erased state == valid); bit0 is cleared to revoke
    buf[VERSION_CRC_OFF : VERSION_CRC_OFF + 2] = crc16(bytes(buf[:VERSION_FLAGS_OFF])).to_bytes(2, "big")
    return bytes(buf)


def revoke_version_slot(slot: bytes) -> bytes:
    """Same slot bytes with the valid bit cleared (a pure 1 -> 0 change)."""
    buf = bytearray(slot)
    buf[VERSION_FLAGS_OFF] &= 0xFE
    return bytes(buf)


def decode_version_slot(slot: bytes) -> tuple[str, VersionRecord | None]:
    """Classify a 16-byte directory slot.

    Returns one of ``("blank", None)``, ``("live", rec)``, ``("revoked", rec)``
    or ``("invalid", None)`` for slots that fail magic/CRC (e.g. torn writes).
    """
    if len(slot) != VERSION_RECORD_SIZE:
        raise FormatError("version slot must be 16 bytes")
    if slot == _BLANK_SLOT:
        return "blank", None
    if slot[0:2] != VERSION_MAGIC:
        return "invalid", None
    stored = int.from_bytes(slot[VERSION_CRC_OFF : VERSION_CRC_OFF + 2], "big")
    if stored != crc16(slot[:VERSION_FLAGS_OFF]):
        return "invalid", None
    rec = VersionRecord(
        version_no=int.from_bytes(slot[2:6], "big"),
        root_page=int.from_bytes(slot[6:9], "big"),
        alloc_cursor=int.from_bytes(slot[9:12], "big"),
    )
    state = "live" if slot[VERSION_FLAGS_OFF] & 0x01 else "revoked"
    return state, rec


def page_kind(page: bytes) -> str:
    """Best-effort classification of a raw page by magic byte."""
    b = page[0]
    if b == NODE_MAGIC:
        return "node"
    if b == LEAF_MAGIC:
        return "leaf"
    if b == OBJ_MAGIC:
        return "object"
    if page == b"\xff" * PAGE_SIZE:
        return "erased"
    return "unknown"
