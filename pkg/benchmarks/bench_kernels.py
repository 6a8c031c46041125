#!/usr/bin/env python3
"""Compare the compiled geometry kernel against the pure-Python fallback.

Runs each hot predicate over the same randomized workload with both
implementations and prints per-call times plus the speedup.  The compiled
kernel is optional; without it only the pure numbers appear.

    python3 benchmarks/bench_kernels.py [-n CALLS] [--seed SEED]
"""

import argparse
import math
import random
import time

from flashquad.geometry import WORLD_SIZE, _pure

try:
    from flashquad.geometry import _kernel
except ImportError:
    _kernel = None


def star_polygon(rng: random.Random, n_verts: int = 12) -> tuple:
    cx = rng.randrange(300_000, WORLD_SIZE - 300_000)
    cy = rng.randrange(300_000, WORLD_SIZE - 300_000)
    verts = []
    for k in range(n_verts):
        ang = 2 * math.pi * k / n_verts
        r = rng.randrange(50_000, 280_000)
        verts.append((cx + int(r * math.cos(ang)), cy + int(r * math.sin(ang))))
    return tuple(verts)


def random_cell(rng: random.Random, max_level: int = 4) -> tuple:
    """(level, sx, sy) for a random grid-aligned cell, level <= max_level."""
    lvl = rng.randrange(0, max_level + 1)
    sx = sy = 0
    for _ in range(lvl):
        i, j = rng.randrange(9), rng.randrange(9)
        sx = 9 * sx + j * WORLD_SIZE
        sy = 9 * sy + i * WORLD_SIZE
    return lvl, sx, sy


def bench(fn, reps: int = 3) -> float:
    """Best-of-reps wall time for fn()."""
    best = math.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("-n", type=int, default=20_000, help="calls per predicate (default 20000)")
    ap.add_argument("--seed", type=int, default=1, help="workload seed")
    args = ap.parse_args()

    rng = random.Random(args.seed)
    n = args.n
    polys = [star_polygon(rng) for _ in range(32)]
    cells = [random_cell(rng) for _ in range(n)]
    points = [(rng.randrange(WORLD_SIZE), rng.randrange(WORLD_SIZE)) for _ in range(n)]
    discs = [
        (rng.randrange(WORLD_SIZE), rng.randrange(WORLD_SIZE), int(300_000 ** rng.random()))
        for _ in range(n)
    ]
    # the 81-way batch predicates do more work per call, so give them fewer
    batch = max(n // 16, 1)

    def run_pip(mod):
        pp = mod.point_in_polygon
        for k, (x, y) in enumerate(points):
            pp(x, y, polys[k % 32])

    def run_classify(mod):
        cc = mod.classify_cell
        for k, (lvl, sx, sy) in enumerate(cells):
            cc(lvl, sx, sy, polys[k % 32])

    def run_children(mod):
        cc = mod.classify_children
        for k, (lvl, sx, sy) in enumerate(cells[:batch]):
            cc(min(lvl, 4), sx, sy, polys[k % 32])

    def run_disc(mod):
        ci = mod.cell_intersects_disc
        for (lvl, sx, sy), (cx, cy, r) in zip(cells, discs):
            ci(lvl, sx, sy, cx, cy, r)

    def run_mask(mod):
        dm = mod.disc_mask
        for (lvl, sx, sy), (cx, cy, r) in zip(cells[:batch], discs):
            dm(min(lvl, 4), sx, sy, cx, cy, r)

    def run_simple(mod):
        ps = mod.polygon_is_simple
        for _ in range(max(n // 32, 1)):
            for poly in polys:
                ps(poly)

    suites = [
        ("point_in_polygon", run_pip, n),
        ("classify_cell", run_classify, n),
        ("classify_children (x81)", run_children, batch),
        ("cell_intersects_disc", run_disc, n),
        ("disc_mask (x81)", run_mask, batch),
        ("polygon_is_simple", run_simple, max(n // 32, 1) * 32),
    ]

    print(f"workload: {n} calls/predicate, seed {args.seed}")
    if _kernel is None:
        print("compiled kernel not built; showing pure-Python numbers only\n")
        print(f"{'predicate':<26} {'pure':>12}")
        for name, fn, calls in suites:
            t = bench(lambda: fn(_pure))
            print(f"{name:<26} {t / calls * 1e6:>9.2f} us")
        return

    print(f"{'predicate':<26} {'pure':>12} {'compiled':>12} {'speedup':>9}")
    for name, fn, calls in suites:
        tp = bench(lambda: fn(_pure))
        tk = bench(lambda: fn(_kernel))
        print(
            f"{name:<26} {tp / calls * 1e6:>9.2f} us {tk / calls * 1e6:>9.2f} us"
            f" {tp / tk:>8.1f}x"
        )


if __name__ == "__main__":
    main()
