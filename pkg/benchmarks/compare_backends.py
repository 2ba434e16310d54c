"""Time the numba kernels against the pure-numpy fallback.

Both backends run the same workloads (bulk build, window batch, inserts,
grid join) and must produce the same answers; the script exits non-zero
if they do not.

    python benchmarks/compare_backends.py --n 200000 --queries 2000
"""

import argparse
import sys
import time

import numpy as np

from tlgrid import (GenSpec, GridConfig, Metrics, TwoLayerGrid, gen_windows, generate,
                    join_identical_grids, set_backend, window_query_batch)
from tlgrid.join import pair_set


def best_of(fn, reps):
    best, out = float("inf"), None
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(backend, data, other, wins, cfg, reps):
    set_backend(backend)
    # compile / warm caches outside the timed region
    g = TwoLayerGrid.build(data[:500], cfg)
    window_query_batch(g, wins[:5])
    g.insert_many(data[500:550])
    join_identical_grids(TwoLayerGrid.build(data[:500], cfg, "join_ready"),
                         TwoLayerGrid.build(other[:500], cfg, "join_ready"))

    timings, answers = {}, {}
    timings["build"], g = best_of(lambda: TwoLayerGrid.build(data, cfg), reps)
    m = Metrics()
    timings["range"], res = best_of(lambda: window_query_batch(g, wins, m.reset() or m), reps)
    answers["range"] = [np.sort(r) for r in res]

    cut = int(len(data) * 0.9)

    def inserts():
        h = TwoLayerGrid.build(data[:cut], cfg)
        t0 = time.perf_counter()
        h.insert_many(data[cut:])
        return time.perf_counter() - t0

    timings["insert"] = min(inserts() for _ in range(reps))

    R = TwoLayerGrid.build(data, cfg, "join_ready")
    S = TwoLayerGrid.build(other, cfg, "join_ready")
    jm = Metrics()
    timings["join"], pairs = best_of(
        lambda: join_identical_grids(R, S, "all_opts", jm.reset() or jm), reps)
    answers["join"] = pair_set(pairs)
    answers["counters"] = (m.as_dict(), jm.as_dict())
    return timings, answers


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000, help="rectangles per dataset")
    ap.add_argument("--area", type=float, default=1e-8)
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--rel-area", type=float, default=0.1, help="window area in percent")
    ap.add_argument("--grid", type=int, default=200, help="tiles per dimension")
    ap.add_argument("--reps", type=int, default=3)
    args = ap.parse_args(argv)

    data = generate(GenSpec(args.n, args.area, seed=1))
    other = generate(GenSpec(args.n, args.area, seed=2))
    wins = gen_windows(data, args.queries, args.rel_area, seed=3)
    cfg = GridConfig(args.grid, args.grid)

    results = {b: run(b, data, other, wins, cfg, args.reps) for b in ("numba", "numpy")}
    print(f"{'phase':<8} {'numba s':>10} {'numpy s':>10} {'speedup':>8}")
    for phase in ("build", "range", "insert", "join"):
        a, b = results["numba"][0][phase], results["numpy"][0][phase]
        print(f"{phase:<8} {a:10.4f} {b:10.4f} {b / a:8.2f}")

    same = True
    for key in ("range", "join", "counters"):
        x, y = results["numba"][1][key], results["numpy"][1][key]
        ok = all(np.array_equal(p, q) for p, q in zip(x, y)) if key == "range" else x == y
        print(f"{key} identical: {ok}")
        same &= ok
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
