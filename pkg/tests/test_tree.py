"""Tree structure: splits, zone placement, deletion, stats accounting."""

import random

import pytest

from flashquad.codec import LEAF_MAGIC, NODE_MAGIC
from flashquad.errors import ConflictError, DomainError, IntegrityError, NotFoundError
from flashquad.flashsim import FlashDevice, FlashGeometry
from flashquad.geometry import WORLD_SIZE as W
from flashquad.store import Store
from flashquad.tree import BuildParams

from helpers import count_kind_programs


def fresh(params=None, sectors=4):
    return Store.format(FlashDevice(FlashGeometry(sector_count=sectors)), params=params)


def committed(store, edit):
    s = store.begin()
    edit(s)
    return s.commit()


# -- params -----------------------------------------------------------------


def test_build_params_validation():
    BuildParams(leaf_split_threshold=0, max_depth=5, zone_max_depth=0)
    with pytest.raises(DomainError):
        BuildParams(max_depth=6)
    with pytest.raises(DomainError):
        BuildParams(zone_max_depth=6)
    with pytest.raises(DomainError):
        BuildParams(max_depth=2, zone_max_depth=3)
    with pytest.raises(DomainError):
        BuildParams(leaf_split_threshold=-1)


# -- empty tree ---------------------------------------------------------------


def test_empty_tree_stats():
    st = fresh().handle().stats()
    assert st.objects == 0
    assert st.total_pages == 1  # just the root node
    assert st.index_pages == 1
    assert st.leaf_refs == 0
    assert st.refs_per_object == 0
    assert st.empty_entries == 81
    assert st.used_entries == 0
    assert st.max_depth == 0
    assert st.leaf_pages == 0 and st.distinct_leaf_pages == 0
    assert st.duplicate_leaf_pages == 0
    assert st.pages_deduped == 1


def test_stats_rows_cover_a_through_r():
    rows = fresh().handle().stats().rows()
    assert [r[0] for r in rows] == list("abcdefghijklmnopqr")
    assert rows[0][2] == 0  # a: objects
    assert rows[8][2] == 0  # i: depth


# -- points ---------------------------------------------------------------------


def test_insert_and_query_round_trip():
    store = fresh()
    committed(store, lambda s: [s.insert_gantry(1, 5, 5), s.insert_gantry(2, W - 1, W - 1)])
    h = store.handle()
    r = h.query_gantries_within(0, 0, 10)
    assert r.ids == {1}
    hit = r.hits[0]
    assert hit.kind == "gantry" and hit.basis == "distance" and hit.position == (5, 5)
    assert h.query_gantries_within(W - 1, W - 1, 0).ids == {2}
    assert h.query_gantries_within(W // 2, W // 2, 10).ids == set()


def test_duplicate_gantry_id_rejected():
    store = fresh()
    committed(store, lambda s: s.insert_gantry(1, 5, 5))
    s = store.begin()
    with pytest.raises(ConflictError):
        s.insert_gantry(1, 100, 100)
    s.rollback()


def test_gantry_position_must_be_in_world():
    s = fresh().begin()
    with pytest.raises(DomainError):
        s.insert_gantry(1, W, 0)
    with pytest.raises(DomainError):
        s.insert_gantry(1, -1, 0)
    with pytest.raises(DomainError):
        s.insert_gantry(1 << 32, 5, 5)


def test_bucket_split_at_threshold():
    """The ninth point in one cell (threshold 8) forces a split."""
    store = fresh(BuildParams(leaf_split_threshold=8))
    # nine points in the same level-1 cell (width ~222 km), several level-2 cells
    pts = [(k, 1000 + 20_000 * k, 1000) for k in range(9)]

    def load8(s):
        for gid, x, y in pts[:8]:
            s.insert_gantry(gid, x, y)

    committed(store, load8)
    assert store.handle().stats().index_pages == 2  # root + one leaf page
    assert store.handle().stats().max_depth == 1
    committed(store, lambda s: s.insert_gantry(*pts[8]))
    st = store.handle().stats()
    assert st.max_depth == 2  # the split pushed records one level down
    assert st.objects == 9
    h = store.handle()
    assert h.query_gantries_within(1000, 1000, 0).ids == {0}
    assert h.query_gantries_within(100_000, 10_000, 300_000).ids == set(range(9))


def test_coincident_points_stop_splitting_at_max_depth():
    store = fresh(BuildParams(leaf_split_threshold=2, max_depth=3))
    committed(store, lambda s: [s.insert_gantry(k, 777, 777) for k in range(10)])
    st = store.handle().stats()
    assert st.objects == 10
    assert st.max_depth == 3  # ten coincident points cannot split further
    assert store.handle().query_gantries_within(777, 777, 0).ids == set(range(10))


# -- zones -----------------------------------------------------------------------


SQUARE = ((300_000, 300_000), (900_000, 300_000), (900_000, 900_000), (300_000, 900_000))


def test_zone_queries_and_bases():
    store = fresh()
    committed(store, lambda s: s.insert_zone(50, SQUARE))
    h = store.handle()
    mid = h.query_zones_at(600_000, 600_000)
    assert mid.ids == {50}
    assert mid.hits[0].kind == "zone"
    assert h.query_zones_at(300_000, 300_000).ids == {50}  # boundary counts
    assert h.query_zones_at(299_999, 300_000).ids == set()
    assert h.query_zones_at(5, 5).ids == set()


def test_world_covering_zone_sits_at_root():
    store = fresh()
    big = ((-W, -W), (3 * W, -W), (3 * W, 3 * W), (-W, 3 * W))
    committed(store, lambda s: s.insert_zone(7, big))
    st = store.handle().stats()
    assert st.zone_inside == 1 and st.zone_edge == 0
    assert st.max_depth == 0  # the record hangs off the root's own cell
    r = store.handle().query_zones_at(123, 456)
    assert r.ids == {7} and r.hits[0].basis == "inside-entry"


def test_zone_outside_world_rejected():
    s = fresh().begin()
    far = ((-900, -900), (-500, -900), (-500, -500), (-900, -500))
    with pytest.raises(DomainError):
        s.insert_zone(1, far)
    with pytest.raises(DomainError):
        s.insert_zone(1, ((0, 0), (10, 0)))  # not a polygon


def test_zone_records_split_inside_vs_edge():
    store = fresh()
    committed(store, lambda s: s.insert_zone(3, SQUARE))
    st = store.handle().stats()
    assert st.zone_inside > 0  # cells wholly covered by the square
    assert st.zone_edge > 0  # cells crossed by its boundary
    assert st.max_depth == store.params.zone_max_depth
    h = store.handle()
    inside = h.query_zones_at(600_000, 600_000)
    assert inside.hits[0].basis == "inside-entry"


def test_zone_edge_cells_use_point_test():
    store = fresh()
    committed(store, lambda s: s.insert_zone(3, SQUARE))
    h = store.handle()
    # points in the same boundary cell, one in, one out
    r_in = h.query_zones_at(300_001, 300_001)
    assert r_in.ids == {3} and r_in.hits[0].basis == "edge-test"
    assert h.query_zones_at(299_000, 299_000).ids == set()


def test_zone_max_depth_zero_attaches_at_root():
    store = fresh(BuildParams(zone_max_depth=0))
    committed(store, lambda s: s.insert_zone(9, SQUARE))
    st = store.handle().stats()
    assert st.max_depth == 0
    assert st.zone_edge == 1  # one edge record for the whole world cell
    assert store.handle().query_zones_at(600_000, 600_000).ids == {9}
    assert store.handle().query_zones_at(5, 5).ids == set()


def test_overlapping_zones_both_reported():
    store = fresh()
    other = ((500_000, 500_000), (1_200_000, 500_000), (1_200_000, 1_200_000), (500_000, 1_200_000))
    committed(store, lambda s: [s.insert_zone(1, SQUARE), s.insert_zone(2, other)])
    h = store.handle()
    assert h.query_zones_at(700_000, 700_000).ids == {1, 2}
    assert h.query_zones_at(400_000, 400_000).ids == {1}
    assert h.query_zones_at(1_100_000, 1_100_000).ids == {2}


def test_zone_with_many_vertices_chains_pages():
    import math

    store = fresh()
    cx, cy, r = 1_000_000, 1_000_000, 400_000
    verts = tuple(
        (int(cx + r * math.cos(2 * math.pi * k / 40)), int(cy + r * math.sin(2 * math.pi * k / 40)))
        for k in range(40)
    )
    committed(store, lambda s: s.insert_zone(77, verts))  # 40 verts -> 2 object pages
    h = store.handle()
    assert h.query_zones_at(cx, cy).ids == {77}
    assert h.query_zones_at(cx + r + 2, cy).ids == set()
    rep = h.walk()
    assert len(rep.object_pages) == 2


# -- deletion ----------------------------------------------------------------------


def test_delete_gantry_and_collapse():
    store = fresh()
    committed(store, lambda s: [s.insert_gantry(1, 5, 5), s.insert_gantry(2, W - 5, 5)])
    before = store.handle().stats()
    committed(store, lambda s: s.delete(2))
    after = store.handle().stats()
    assert after.objects == 1
    assert after.used_entries < before.used_entries
    assert store.handle().query_gantries_within(W - 5, 5, 10).ids == set()
    assert store.handle().query_gantries_within(5, 5, 10).ids == {1}


def test_delete_zone_removes_all_records():
    store = fresh()
    committed(store, lambda s: [s.insert_zone(3, SQUARE), s.insert_gantry(8, 600_000, 600_000)])
    committed(store, lambda s: s.delete(3))
    st = store.handle().stats()
    assert st.objects == 1
    assert st.zone_inside == 0 and st.zone_edge == 0
    assert store.handle().query_zones_at(600_000, 600_000).ids == set()
    assert store.handle().query_gantries_within(600_000, 600_000, 10).ids == {8}


def test_delete_requires_kind_when_ambiguous():
    store = fresh()
    committed(store, lambda s: [s.insert_gantry(5, 5, 5), s.insert_zone(5, SQUARE)])
    s = store.begin()
    with pytest.raises(ConflictError):
        s.delete(5)
    s.delete(5, kind="zone")
    s.commit()
    st = store.handle().stats()
    assert st.objects == 1 and st.zone_inside == 0
    assert store.handle().query_gantries_within(5, 5, 0).ids == {5}


def test_delete_missing_raises():
    store = fresh()
    s = store.begin()
    with pytest.raises(NotFoundError):
        s.delete(42)
    s.rollback()


def test_emptied_tree_keeps_root():
    store = fresh()
    committed(store, lambda s: s.insert_gantry(1, 5, 5))
    committed(store, lambda s: s.delete(1))
    st = store.handle().stats()
    assert st.objects == 0 and st.total_pages == 1 and st.empty_entries == 81


# -- copy-on-write sharing -------------------------------------------------------


def test_unrelated_subtrees_are_shared_across_versions():
    store = fresh()
    v1 = committed(store, lambda s: [s.insert_gantry(k, 10_000 * k + 5, 5) for k in range(1, 30)])
    v2 = committed(store, lambda s: s.insert_gantry(99, W - 5, W - 5))
    r1 = store.handle(v1).reachable_pages()
    r2 = store.handle(v2).reachable_pages()
    shared = r1 & r2
    assert len(shared) > len(r1) * 0.8  # almost everything is reused
    assert store.handle(v1).root_page != store.handle(v2).root_page


def test_path_copy_programs_scale_with_depth():
    """One insert into a depth-d tree rewrites d+1 node pages, no more."""
    for d in range(0, 5):
        params = BuildParams(leaf_split_threshold=0, max_depth=d + 1, zone_max_depth=0)
        store = fresh(params)
        box = count_kind_programs(store.device, NODE_MAGIC)
        committed(store, lambda s: s.insert_gantry(1, 5, 5))
        store.device.on_program = None
        assert box[0] == d + 1, f"depth {d}: programmed {box[0]} node pages"


# -- integrity ----------------------------------------------------------------------


def test_walk_flags_damage():
    store = fresh()
    committed(store, lambda s: [s.insert_gantry(k, 40_000 * k + 3, 70_000 * k + 9) for k in range(1, 25)])
    h = store.handle()
    victim = sorted(a for a in h.reachable_pages() if a != h.root_page)[3]
    store.device.erase_page(victim)  # silently lose one page
    from flashquad.cache import PageCache

    store.swap_cache(PageCache(4))  # drop cached copies
    rep = store.handle().walk()
    assert rep.problems
    with pytest.raises(IntegrityError):
        store.handle().reachable_pages()


def test_random_mixed_workload_stays_consistent():
    rng = random.Random(2026)
    store = fresh(sectors=8)
    live_g, live_z = {}, {}
    for round_no in range(12):
        s = store.begin()
        for _ in range(rng.randint(1, 12)):
            op = rng.random()
            if op < 0.55 or not live_g:
                gid = rng.randrange(10_000)
                if gid in live_g:
                    continue
                x, y = rng.randrange(W), rng.randrange(W)
                s.insert_gantry(gid, x, y)
                live_g[gid] = (x, y)
            elif op < 0.8 and live_g:
                gid = rng.choice(sorted(live_g))
                s.delete(gid, kind="gantry")
                del live_g[gid]
            else:
                zid = rng.randrange(10_000)
                if zid in live_z:
                    continue
                cx, cy = rng.randrange(W), rng.randrange(W)
                r = rng.randint(5_000, 300_000)
                verts = ((cx - r, cy - r), (cx + r, cy - r), (cx + r, cy + r), (cx - r, cy + r))
                s.insert_zone(zid, verts)
                live_z[zid] = verts
        s.commit()
        assert not store.verify()["problems"]
        h = store.handle()
        st = h.stats()
        assert st.objects == len(live_g) + len(live_z)
        x, y = rng.randrange(W), rng.randrange(W)
        got = h.query_gantries_within(x, y, 100_000).ids
        want = {g for g, (gx, gy) in live_g.items() if (gx - x) ** 2 + (gy - y) ** 2 <= 100_000**2}
        assert got == want
