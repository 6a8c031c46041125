"""Versioned page store: directory, allocation, sessions, update packages.

Layout on the device:

* subsectors 0 and 1 (pages 0..31) hold the version directory — fixed
  16-byte version records appended slot by slot.  Only one of the two
  subsectors is active; when it fills up, the live records are copied to
  the other and the old one is erased.  Because records are only ever
  appended (program), revoked in place (one bit cleared) or copied before
  the source is erased, one subsector's live-record set is always a
  superset of the other's, and mount picks the superset side.  A power
  cut can lose at most the record being written, never a committed one.
* pages 32.. hold tree and object pages, allocated by a cyclic cursor so
  erase load spreads over the whole device instead of hammering the
  lowest free subsector.

A session is the single writer: it allocates fresh pages, programs them,
and ends in ``commit`` (append a version record, revoke beyond the
retention window) or ``rollback`` (drop the root; the programmed pages
are simply dead and get reclaimed by the allocator or ``gc``).

Identical leaf pages are shared: the store keeps a content -> address map
for leaf-list pages and returns the existing address when a session
writes bytes it already has, provided that page is still live or pending
(a dead page could be erased underneath the reference).
"""

from __future__ import annotations

import zlib
from typing import Iterable, Optional, Sequence

from . import codec, tree
from .cache import PageCache
from .codec import (
    PAGE_SIZE,
    VERSION_RECORD_SIZE,
    NodePage,
    VersionRecord,
    decode_version_slot,
    encode_node,
    encode_version_record,
    revoke_version_slot,
)
from .errors import (
    DomainError,
    FlashFullError,
    FormatError,
    IntegrityError,
    NotFoundError,
    RelocationError,
    SessionError,
    VersionConflictError,
)
from .flashsim import PAGES_PER_SUBSECTOR, FlashDevice
from .tree import BuildParams, Handle, TreeEditor

DIR_SUBSECTORS = 2
DIR_PAGES = DIR_SUBSECTORS * PAGES_PER_SUBSECTOR
DATA_START = DIR_PAGES  # first page available to the allocator (32)
SLOTS_PER_PAGE = PAGE_SIZE // VERSION_RECORD_SIZE  # 16
MAX_VERSIONS_DEFAULT = 4

UPDATE_MAGIC = b"FQUP"

_BLANK = b"\xff" * PAGE_SIZE


class Session:
    """Single in-progress version.  Also the page-IO object for TreeEditor."""

    def __init__(self, store: "Store", base_version: int, root: int, pending: Iterable[int] = ()):
        self._store = store
        self.base_version = base_version
        self.root = root
        self.pending: set[int] = set(pending)
        # pages referenced by the edit in progress; they are not yet hanging
        # off self.root, so staging-garbage pruning must not release them
        self.edit_pages: set[int] = set()
        self.closed = False
        self._editor = TreeEditor(self, store.params)

    # -- page IO for the editor --

    @property
    def total_pages(self) -> int:
        return self._store.total_pages

    def read_page(self, addr: int) -> bytes:
        return self._store.read_page(addr)

    def alloc_page(self) -> int:
        self._assert_open()
        addr = self._store._allocate(self.pending)
        self.pending.add(addr)
        self.edit_pages.add(addr)
        return addr

    def program_page(self, addr: int, data: bytes) -> None:
        self._store._program(addr, bytes(data))

    def write_page(self, data: bytes, dedupable: bool = False) -> int:
        self._assert_open()
        data = bytes(data)
        store = self._store
        if dedupable and store.params.dedup:
            hit = store._dedup_lookup(data, self.pending)
            if hit is not None:
                self.edit_pages.add(hit)
                return hit
        addr = self.alloc_page()
        self.program_page(addr, data)
        if dedupable and store.params.dedup:
            store._dedup[data] = addr
        return addr

    # -- edits --

    def _assert_open(self) -> None:
        if self.closed:
            raise SessionError("session already committed or rolled back")

    def insert_gantry(self, gid: int, x: int, y: int) -> None:
        self._assert_open()
        self.edit_pages.clear()
        self.root = self._editor.insert_gantry(self.root, gid, x, y)

    def insert_zone(self, zid: int, vertices: Sequence[tuple[int, int]]) -> None:
        self._assert_open()
        self.edit_pages.clear()
        self.root = self._editor.insert_zone(self.root, zid, vertices)

    def delete(self, oid: int, kind: Optional[str] = None) -> None:
        self._assert_open()
        self.edit_pages.clear()
        self.root = self._editor.delete_object(self.root, oid, kind)

    def commit(self) -> int:
        self._assert_open()
        return self._store._commit(self)

    def rollback(self) -> None:
        self._assert_open()
        self._store._drop_session(self)


class Store:
    """Mounted database on one flash device."""

    def __init__(
        self,
        device: FlashDevice,
        params: Optional[BuildParams] = None,
        cache_pages: int = 15,
        max_versions: int = MAX_VERSIONS_DEFAULT,
    ):
        if max_versions < 1:
            raise DomainError("max_versions must be at least 1")
        self.device = device
        self.params = params or BuildParams()
        self.max_versions = max_versions
        self.cache = PageCache(cache_pages)
        self.device_reads = 0
        self._session: Optional[Session] = None
        self._known_erased: set[int] = set()
        self._reach: dict[int, frozenset[int]] = {}
        self._dedup: dict[bytes, int] = {}
        self._live_pages: frozenset[int] = frozenset()
        self._mount()

    # -- construction --

    @classmethod
    def format(
        cls,
        device: FlashDevice,
        params: Optional[BuildParams] = None,
        cache_pages: int = 15,
        max_versions: int = MAX_VERSIONS_DEFAULT,
    ) -> "Store":
        """Wipe the device and set up an empty database as version 1."""
        if device.total_pages < DATA_START + 1:
            raise DomainError("device too small for directory plus one data page")
        for first in range(0, device.total_pages, PAGES_PER_SUBSECTOR):
            if any(
                device.read_page(p) != _BLANK
                for p in range(first, first + PAGES_PER_SUBSECTOR)
            ):
                device.erase_subsector(first)
        device.program_page(DATA_START, encode_node(NodePage(0)))
        rec = VersionRecord(1, DATA_START, DATA_START + 1)
        slot0 = bytearray(_BLANK)
        slot0[:VERSION_RECORD_SIZE] = encode_version_record(rec)
        device.program_page(0, bytes(slot0))
        return cls(device, params=params, cache_pages=cache_pages, max_versions=max_versions)

    # -- mount --

    def _scan_dir(self, sub: int) -> list[tuple[int, int, str, Optional[VersionRecord]]]:
        out = []
        base = sub * PAGES_PER_SUBSECTOR
        for p in range(PAGES_PER_SUBSECTOR):
            raw = self.device.read_page(base + p)
            for s in range(SLOTS_PER_PAGE):
                slot = raw[s * VERSION_RECORD_SIZE : (s + 1) * VERSION_RECORD_SIZE]
                state, rec = decode_version_slot(slot)
                if state != "blank":
                    out.append((p, s, state, rec))
        return out

    def _mount(self) -> None:
        scans = [self._scan_dir(0), self._scan_dir(1)]
        live_sets = [
            {(r.version_no, r.root_page, r.alloc_cursor) for _, _, st, r in sc if st == "live"}
            for sc in scans
        ]
        if not live_sets[0] and not live_sets[1]:
            raise IntegrityError("no version records: device is not a formatted database")
        if live_sets[0] == live_sets[1]:
            # interrupted directory copy: prefer the fresher (emptier) side
            active = 0 if len(scans[0]) <= len(scans[1]) else 1
        elif live_sets[0] >= live_sets[1]:
            active = 0
        elif live_sets[1] >= live_sets[0]:
            active = 1
        else:
            raise IntegrityError("version directory subsectors disagree; image is corrupt")
        self._active_sub = active

        self._versions: dict[int, VersionRecord] = {}
        self._slot_of: dict[int, tuple[int, int]] = {}
        tail = (0, 0)
        for p, s, state, rec in scans[active]:
            tail = (p, s + 1) if s + 1 < SLOTS_PER_PAGE else (p + 1, 0)
            if state == "live":
                self._versions[rec.version_no] = rec  # duplicate numbers: last wins
                self._slot_of[rec.version_no] = (p, s)
        self._dir_tail = tail
        if not self._versions:
            raise IntegrityError("all version records are revoked or damaged")
        self.current_version = max(self._versions)
        cursor = self._versions[self.current_version].alloc_cursor
        if not DATA_START <= cursor < self.total_pages:
            raise IntegrityError(f"allocation cursor {cursor} out of range")
        self._cursor = cursor
        self._rebuild_live()

    # -- basic page IO --

    @property
    def total_pages(self) -> int:
        return self.device.total_pages

    def read_page(self, addr: int) -> bytes:
        page = self.cache.get(addr)
        if page is None:
            page = self.device.read_page(addr)
            self.device_reads += 1
            self.cache.put(addr, page)
        return page

    def read_counters(self) -> tuple[int, int]:
        return self.device_reads, self.cache.hits

    def swap_cache(self, cache: PageCache) -> PageCache:
        old, self.cache = self.cache, cache
        return old

    def _program(self, addr: int, data: bytes) -> None:
        self.device.program_page(addr, data)
        self._known_erased.discard(addr)
        self.cache.put(addr, data)

    # -- reachability, liveness, dedup --

    def _reachable_of(self, root: int) -> frozenset[int]:
        rs = self._reach.get(root)
        if rs is None:
            rep = tree.walk_version(self.read_page, root, self.total_pages)
            if rep.problems:
                raise IntegrityError("; ".join(rep.problems[:8]))
            rs = rep.reachable
            self._reach[root] = rs
            if self.params.dedup:
                for addr in rep.leaf_pages:
                    self._dedup[self.read_page(addr)] = addr
        return rs

    def _rebuild_live(self) -> None:
        union: set[int] = set()
        self._damage: dict[int, str] = {}
        for vno, rec in sorted(self._versions.items()):
            cached = self._reach.get(rec.root_page)
            if cached is not None:
                union |= cached
                continue
            rep = tree.walk_version(self.read_page, rec.root_page, self.total_pages)
            union |= rep.reachable
            if rep.problems:
                # keep the partial reachable set so the allocator stays away
                # from it, but never cache it as authoritative
                self._damage[vno] = rep.problems[0]
                continue
            self._reach[rec.root_page] = rep.reachable
            if self.params.dedup:
                for addr in rep.leaf_pages:
                    self._dedup[self.read_page(addr)] = addr
        self._live_pages = frozenset(union)
        roots = {rec.root_page for rec in self._versions.values()}
        self._reach = {r: s for r, s in self._reach.items() if r in roots}

    def _refuse_damaged(self) -> None:
        if self._damage:
            vno, problem = next(iter(self._damage.items()))
            raise IntegrityError(
                f"version {vno} is damaged ({problem}); the image is read-only until "
                "the damaged version is rolled away or the image is re-imaged"
            )

    def _dedup_lookup(self, data: bytes, pending: set[int]) -> Optional[int]:
        addr = self._dedup.get(data)
        if addr is None:
            return None
        if addr not in pending and addr not in self._live_pages:
            return None  # dead page: could be erased before the new version commits
        if self.read_page(addr) != data:
            return None
        return addr

    # -- allocation --

    def _allocate(self, pending: set[int]) -> int:
        total = self.total_pages
        span = total - DATA_START
        for attempt in range(2):
            cur = self._cursor
            for _ in range(span):
                addr = cur
                cur += 1
                if cur >= total:
                    cur = DATA_START
                if self._try_take(addr, pending):
                    self._cursor = cur
                    return addr
            if attempt == 0:
                self._prune_staging()
                freed = self.gc(protect=pending)
                if not freed["subsectors_erased"]:
                    break
        raise FlashFullError("no free pages left after garbage collection")

    def _prune_staging(self) -> None:
        """Release staged pages the open session no longer references.

        A long session strands every page it supersedes: still pending,
        unreachable from the session root, yet protected from gc.  Dropping
        them from the pending set makes that space reclaimable.  Pages of
        the edit in progress are kept -- the half-built tree references
        them before the root does.
        """
        sess = self._session
        if sess is None:
            return
        rep = tree.walk_version(self.read_page, sess.root, self.total_pages)
        if rep.problems:
            return
        sess.pending &= rep.reachable | sess.edit_pages

    def _try_take(self, addr: int, pending: set[int]) -> bool:
        if addr in pending or addr in self._live_pages:
            return False
        if addr in self._known_erased:
            self._known_erased.discard(addr)
            return True
        if self.device.read_page(addr) == _BLANK:  # probe; not a query read
            return True
        # dirty dead page: reclaim the subsector if nothing in it is live
        first = addr - addr % PAGES_PER_SUBSECTOR
        for p in range(first, first + PAGES_PER_SUBSECTOR):
            if p in pending or p in self._live_pages:
                return False
        self._erase_subsector(first)
        self._known_erased.discard(addr)
        return True

    def _erase_subsector(self, first: int) -> None:
        self.device.erase_subsector(first)
        for p in range(first, first + PAGES_PER_SUBSECTOR):
            self.cache.invalidate(p)
            self._known_erased.add(p)

    def gc(self, protect: Optional[set[int]] = None) -> dict:
        """Erase every data subsector holding only unreachable pages."""
        self._refuse_damaged()  # a partial live set must never drive an erase
        if protect is None:
            protect = self._session.pending if self._session else set()
        mark = self._live_pages
        reclaimed = 0
        erased = 0
        for first in range(DATA_START, self.total_pages, PAGES_PER_SUBSECTOR):
            pages = range(first, first + PAGES_PER_SUBSECTOR)
            if any(p in mark or p in protect for p in pages):
                continue
            dirty = sum(
                1
                for p in pages
                if p not in self._known_erased and self.device.read_page(p) != _BLANK
            )
            if not dirty:
                continue
            self._erase_subsector(first)
            reclaimed += dirty
            erased += 1
        return {"pages_reclaimed": reclaimed, "subsectors_erased": erased}

    # -- version directory --

    def _append_record(self, rec: VersionRecord) -> None:
        p, s = self._dir_tail
        if p >= PAGES_PER_SUBSECTOR:
            self._compact_directory()
            p, s = self._dir_tail
        page_addr = self._active_sub * PAGES_PER_SUBSECTOR + p
        buf = bytearray(self.device.read_page(page_addr))
        buf[s * VERSION_RECORD_SIZE : (s + 1) * VERSION_RECORD_SIZE] = encode_version_record(rec)
        self.device.program_page(page_addr, bytes(buf))
        self._slot_of[rec.version_no] = (p, s)
        self._dir_tail = (p, s + 1) if s + 1 < SLOTS_PER_PAGE else (p + 1, 0)

    def _revoke(self, vno: int) -> None:
        p, s = self._slot_of.pop(vno)
        page_addr = self._active_sub * PAGES_PER_SUBSECTOR + p
        buf = bytearray(self.device.read_page(page_addr))
        off = s * VERSION_RECORD_SIZE
        buf[off : off + VERSION_RECORD_SIZE] = revoke_version_slot(
            bytes(buf[off : off + VERSION_RECORD_SIZE])
        )
        self.device.program_page(page_addr, bytes(buf))
        del self._versions[vno]

    def _compact_directory(self) -> None:
        target = 1 - self._active_sub
        t_base = target * PAGES_PER_SUBSECTOR
        if any(
            self.device.read_page(t_base + i) != _BLANK for i in range(PAGES_PER_SUBSECTOR)
        ):
            self.device.erase_subsector(t_base)
        recs = [self._versions[v] for v in sorted(self._versions)]
        self._slot_of = {}
        for start in range(0, len(recs), SLOTS_PER_PAGE):
            chunk = recs[start : start + SLOTS_PER_PAGE]
            buf = bytearray(_BLANK)
            for j, rec in enumerate(chunk):
                buf[j * VERSION_RECORD_SIZE : (j + 1) * VERSION_RECORD_SIZE] = (
                    encode_version_record(rec)
                )
                self._slot_of[rec.version_no] = (start // SLOTS_PER_PAGE, j)
            self.device.program_page(t_base + start // SLOTS_PER_PAGE, bytes(buf))
        self.device.erase_subsector(self._active_sub * PAGES_PER_SUBSECTOR)
        self._active_sub = target
        self._dir_tail = divmod(len(recs), SLOTS_PER_PAGE)

    # -- sessions --

    def begin(self) -> Session:
        if self._session is not None:
            raise SessionError("another session is already open")
        self._refuse_damaged()
        root = self._versions[self.current_version].root_page
        self._session = Session(self, self.current_version, root)
        return self._session

    def resume_session(self, base_version: int, root: int, pending: Iterable[int]) -> Session:
        """Re-open a staged session (pages already programmed on the device)."""
        if self._session is not None:
            raise SessionError("another session is already open")
        self._refuse_damaged()
        if base_version != self.current_version:
            raise VersionConflictError(
                f"staged on version {base_version}, device is at {self.current_version}"
            )
        rep = tree.walk_version(self.read_page, root, self.total_pages)
        if rep.problems:
            raise IntegrityError("staged tree is damaged: " + "; ".join(rep.problems[:8]))
        if self.params.dedup:
            for addr in rep.leaf_pages:
                self._dedup[self.read_page(addr)] = addr
        self._session = Session(self, base_version, root, pending)
        return self._session

    def _drop_session(self, session: Session) -> None:
        session.closed = True
        if self._session is session:
            self._session = None

    def _commit(self, session: Session) -> int:
        rep = tree.walk_version(self.read_page, session.root, self.total_pages)
        if rep.problems:
            raise IntegrityError("refusing to commit a damaged tree: " + rep.problems[0])
        new_vno = self.current_version + 1
        rec = VersionRecord(new_vno, session.root, self._cursor)
        self._append_record(rec)
        self._versions[new_vno] = rec
        self.current_version = new_vno
        self._reach[session.root] = rep.reachable
        while len(self._versions) > self.max_versions:
            self._revoke(min(self._versions))
        self._rebuild_live()
        self._drop_session(session)
        return new_vno

    def rollback_to(self, vno: int) -> None:
        """Make ``vno`` current again by revoking every newer version."""
        if self._session is not None:
            raise SessionError("close the open session before rolling back")
        if vno not in self._versions:
            raise NotFoundError(f"version {vno} is not live")
        for v in sorted(v for v in self._versions if v > vno):
            self._revoke(v)
        self.current_version = vno
        self._cursor = self._versions[vno].alloc_cursor
        self._rebuild_live()

    # -- read access --

    def handle(self, version_no: Optional[int] = None) -> Handle:
        vno = self.current_version if version_no is None else version_no
        rec = self._versions.get(vno)
        if rec is None:
            raise NotFoundError(f"version {vno} is not live")
        return Handle(self, rec.root_page, vno)

    def versions(self) -> list[dict]:
        """Directory contents of the active subsector, revoked entries included."""
        seen: dict[int, str] = {}
        roots: dict[int, VersionRecord] = {}
        for _, _, state, rec in self._scan_dir(self._active_sub):
            if state in ("live", "revoked"):
                seen[rec.version_no] = state
                roots[rec.version_no] = rec
        out = []
        for vno in sorted(seen):
            rec = roots[vno]
            out.append(
                {
                    "version": vno,
                    "state": seen[vno],
                    "root_page": rec.root_page,
                    "alloc_cursor": rec.alloc_cursor,
                    "current": vno == self.current_version and seen[vno] == "live",
                }
            )
        return out

    def verify(self) -> dict:
        """Walk every live version and re-check directory slots."""
        problems: list[str] = []
        for sub in range(DIR_SUBSECTORS):
            scan = self._scan_dir(sub)
            for idx, (p, s, state, _) in enumerate(scan):
                # a torn slot at the tail is the residue of an interrupted
                # append; mount skips it and the next append moves past it
                if state == "invalid" and idx != len(scan) - 1:
                    problems.append(f"directory subsector {sub} page {p} slot {s} is damaged")
        per_version: dict[int, tree.StatsReport] = {}
        for vno in sorted(self._versions):
            rec = self._versions[vno]
            rep = tree.walk_version(self.read_page, rec.root_page, self.total_pages)
            if rep.problems:
                problems += [f"version {vno}: {p}" for p in rep.problems]
                continue
            per_version[vno] = tree.stats_from_walk(rep)
        return {"ok": not problems, "problems": problems, "versions": per_version}

    # -- update packages --

    def make_update(self, base_version: int, new_version: int) -> bytes:
        base = self._versions.get(base_version)
        new = self._versions.get(new_version)
        if base is None:
            raise NotFoundError(f"version {base_version} is not live")
        if new is None:
            raise NotFoundError(f"version {new_version} is not live")
        if new_version <= base_version:
            raise DomainError("an update package must move to a newer version")
        fresh = sorted(self._reachable_of(new.root_page) - self._reachable_of(base.root_page))
        out = bytearray()
        out += UPDATE_MAGIC
        out += base_version.to_bytes(4, "little")
        out += new_version.to_bytes(4, "little")
        out += len(fresh).to_bytes(4, "little")
        for addr in fresh:
            out += addr.to_bytes(3, "big")
            out += self.read_page(addr)
        out += new.root_page.to_bytes(3, "big")
        out += zlib.crc32(bytes(out)).to_bytes(4, "little")
        return bytes(out)

    def apply_update(self, pkg: bytes) -> int:
        if self._session is not None:
            raise SessionError("close the open session before applying an update")
        self._refuse_damaged()
        base_v, new_v, pages, new_root = _parse_update(pkg)
        if self.current_version != base_v:
            raise VersionConflictError(
                f"package expects version {base_v}, device is at {self.current_version}"
            )
        if new_v <= self.current_version:
            raise VersionConflictError(f"package target version {new_v} is not newer")
        live = self._live_pages
        need_erase: set[int] = set()
        for addr, data in pages:
            if not DATA_START <= addr < self.total_pages:
                raise FormatError(f"package page {addr} outside the data area")
            raw = self.device.read_page(addr)
            if raw == data:
                continue  # already present: shared page or an interrupted earlier apply
            if addr in live:
                raise RelocationError(f"package wants page {addr}, which is still live here")
            if any(d & ~r for d, r in zip(data, raw)):
                # needs at least one 0->1 transition, so the page must be erased first;
                # a torn prefix of the same data falls through and is simply reprogrammed
                need_erase.add(addr - addr % PAGES_PER_SUBSECTOR)
        for first in sorted(need_erase):
            for p in range(first, first + PAGES_PER_SUBSECTOR):
                if p in live:
                    raise RelocationError(
                        f"page {p} is live but shares a subsector with package pages"
                    )
            self._erase_subsector(first)
        for addr, data in pages:
            if self.device.read_page(addr) != data:
                self._program(addr, data)
        rep = tree.walk_version(self.read_page, new_root, self.total_pages)
        if rep.problems:
            raise IntegrityError("package left a damaged tree: " + rep.problems[0])
        rec = VersionRecord(new_v, new_root, self._cursor)
        self._append_record(rec)
        self._versions[new_v] = rec
        self.current_version = new_v
        self._reach[new_root] = rep.reachable
        while len(self._versions) > self.max_versions:
            self._revoke(min(self._versions))
        self._rebuild_live()
        return new_v


def _parse_update(pkg: bytes) -> tuple[int, int, list[tuple[int, bytes]], int]:
    if len(pkg) < 23 or pkg[:4] != UPDATE_MAGIC:
        raise FormatError("not an update package")
    if int.from_bytes(pkg[-4:], "little") != zlib.crc32(pkg[:-4]):
        raise IntegrityError("update package checksum mismatch")
    base_v = int.from_bytes(pkg[4:8], "little")
    new_v = int.from_bytes(pkg[8:12], "little")
    count = int.from_bytes(pkg[12:16], "little")
    expected = 16 + count * (3 + PAGE_SIZE) + 3 + 4
    if len(pkg) != expected:
        raise FormatError(
            f"update package is {len(pkg)} bytes, header implies {expected}"
        )
    pages = []
    pos = 16
    for _ in range(count):
        addr = int.from_bytes(pkg[pos : pos + 3], "big")
        pages.append((addr, pkg[pos + 3 : pos + 3 + PAGE_SIZE]))
        pos += 3 + PAGE_SIZE
    new_root = int.from_bytes(pkg[pos : pos + 3], "big")
    return base_v, new_v, pages, new_root
