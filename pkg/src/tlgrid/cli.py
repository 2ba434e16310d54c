"""Benchmark command line: ``gen``, ``range-bench``, ``update-bench``, ``join-bench``.

Reports go to stdout as CSV with one fixed header; diagnostics go to
stderr.  Every bench validates that all methods of a run produced the same
result checksum and exits with status 2 otherwise.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import _backend
from .baselines import OneLayerGrid, QuadTree, one_layer_query_batch, quadtree_query_batch
from .dataio import (GenSpec, gen_windows, generate, joint_bounds, load_csv, normalize, read_csv,
                     write_csv)
from .geometry import Metrics
from .grid import GridConfig, TwoLayerGrid, grid_for
from .join import (build_temp_reduced, join_identical_grids, pbsm_one_layer_join, probe_join,
                   transform_join)
from .query import window_query_batch

REPORT_FIELDS = [
    "command", "method", "dataset", "nx", "ny", "threads", "backend",
    "partition_s", "sort_s", "run_s", "throughput_qps",
    "coordinate_comparisons", "pairs_tested", "minijoins_executed", "results_emitted",
    "duplicates_eliminated", "replica_count", "results", "checksum",
]

RANGE_INDEXES = ("2layer", "1layer", "quadtree", "quadtree2l")
JOIN_METHODS = ("mj-base", "mj-sans-unnecessary", "mj-sans-redundant", "mj-all-opts",
                "pbsm-1layer", "transform-materialized", "transform-on-the-fly",
                "probe-for-loop", "probe-grid", "no-index-reduced")

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _mix(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, vectorized."""
    with np.errstate(over="ignore"):
        z = x.astype(np.uint64) + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def checksum_pairs(a: np.ndarray, b: np.ndarray) -> str:
    """Order-independent 64-bit digest of a multiset of (a, b) pairs."""
    h = _mix(_mix(np.asarray(a, np.uint64)) ^ np.asarray(b, np.uint64))
    with np.errstate(over="ignore"):
        total = np.uint64(h.sum(dtype=np.uint64)) if h.size else np.uint64(0)
    return f"{int(total) & int(_M64):016x}:{h.size}"


def checksum_ids(ids) -> str:
    ids = np.asarray(ids, np.uint64)
    return checksum_pairs(np.zeros_like(ids), ids)


def checksum_results(per_query: list) -> str:
    counts = np.array([r.shape[0] for r in per_query], np.int64)
    q = np.repeat(np.arange(len(per_query), dtype=np.uint64), counts)
    ids = np.concatenate(per_query) if per_query else np.empty(0, np.uint64)
    return checksum_pairs(q, ids)


class Reporter:
    def __init__(self, out=None, header=True):
        self.w = csv.DictWriter(out or sys.stdout, fieldnames=REPORT_FIELDS)
        if header:
            self.w.writeheader()
        self.rows = []

    def emit(self, **row):
        full = {k: row.get(k, "") for k in REPORT_FIELDS}
        m = row.get("metrics")
        if m is not None:
            full.update(m.as_dict())
        for k in ("partition_s", "sort_s", "run_s"):
            if isinstance(full[k], float):
                full[k] = f"{full[k]:.6f}"
        if isinstance(full["throughput_qps"], float):
            full["throughput_qps"] = f"{full['throughput_qps']:.1f}"
        self.w.writerow(full)
        self.rows.append(full)


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 2


def _validate(rows, what="checksum") -> int:
    sums = {r["checksum"] for r in rows}
    if len(sums) > 1:
        detail = ", ".join(f"{r['method']}@{r['nx']}x{r['ny']}={r['checksum']}" for r in rows)
        return _fail(f"{what} mismatch across methods: {detail}")
    return 0


def _grid_cfg(args, data) -> GridConfig:
    if args.nx or args.ny:
        auto = grid_for(data)
        return GridConfig(args.nx or auto.nx, args.ny or args.nx or auto.ny)
    return grid_for(data)


def _csv_list(text, allowed, what):
    items = [t.strip() for t in text.split(",") if t.strip()]
    bad = [t for t in items if t not in allowed]
    if bad:
        raise ValueError(f"unknown {what}: {', '.join(bad)}")
    return items


# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    spec = GenSpec(args.card, args.area, args.dist, (args.ratio_lo, args.ratio_hi), args.seed)
    write_csv(args.output, generate(spec), header=args.header)
    print(f"wrote {args.card} rects to {args.output}", file=sys.stderr)
    return 0


def _range_run(index, data, cfg, wins, threads, qt=(1000, 12)):
    m = Metrics()
    t0 = time.perf_counter()
    if index == "2layer":
        g = TwoLayerGrid.build(data, cfg)
    elif index == "1layer":
        g = OneLayerGrid.build(data, cfg)
    else:
        g = QuadTree.build(data, *qt)
    t_build = time.perf_counter() - t0
    t0 = time.perf_counter()
    if index == "2layer":
        res = window_query_batch(g, wins, m, threads)
    elif index == "1layer":
        res = one_layer_query_batch(g, wins, m, threads)
    else:
        mode = "two-layer" if index == "quadtree2l" else "refpoint"
        res = quadtree_query_batch(g, wins, mode, m, threads)
    t_run = time.perf_counter() - t0
    return g, res, m, t_build, t_run


def cmd_range_bench(args) -> int:
    data, _ = load_csv(args.data, args.header)
    wins = gen_windows(data, args.queries, args.rel_area, args.seed)
    indexes = _csv_list(args.index, RANGE_INDEXES, "index")
    qt = (args.qt_capacity, args.qt_depth)
    if args.sweep_granularity:
        grids = [GridConfig(int(g), int(g)) for g in args.sweep_granularity.split(",")]
    else:
        grids = [_grid_cfg(args, data)]
    rep = Reporter()
    threads = args.threads or _backend.default_threads()
    for cfg in grids:
        for index in indexes:
            if index.startswith("quadtree") and cfg is not grids[0]:
                continue
            # one untimed pass compiles kernels before measuring
            if args.warmup:
                _range_run(index, data, cfg, wins[:10], threads, qt)
            g, res, m, tb, tr = _range_run(index, data, cfg, wins, threads, qt)
            q_nx, q_ny = ("", "") if index.startswith("quadtree") else (cfg.nx, cfg.ny)
            rep.emit(command="range-bench", method=index, dataset=os.path.basename(args.data),
                     nx=q_nx, ny=q_ny, threads=threads, backend=_backend.get_backend(),
                     partition_s=tb, sort_s=0.0, run_s=tr,
                     throughput_qps=len(wins) / tr if tr > 0 else float("inf"), metrics=m,
                     replica_count=g.replica_count, results=sum(r.shape[0] for r in res),
                     checksum=checksum_results(res))
    return _validate(rep.rows)


def cmd_update_bench(args) -> int:
    data, _ = load_csv(args.data, args.header)
    cfg = _grid_cfg(args, data)
    cut = int(round(len(data) * args.split))
    head, tail = data[:cut], data[cut:]
    wins = gen_windows(data, args.queries, args.rel_area, args.seed)
    rep = Reporter()
    for index in _csv_list(args.index, ("2layer", "1layer"), "index"):
        cls = TwoLayerGrid if index == "2layer" else OneLayerGrid
        query = window_query_batch if index == "2layer" else one_layer_query_batch
        if args.warmup:
            cls.build(data[:100], cfg).insert_many(data[100:200])
        full = query(cls.build(data, cfg), wins)
        t0 = time.perf_counter()
        g = cls.build(head, cfg)
        t_build = time.perf_counter() - t0
        t0 = time.perf_counter()
        g.insert_many(tail)
        t_ins = time.perf_counter() - t0
        m = Metrics()
        res = query(g, wins, m)
        if checksum_results(res) != checksum_results(full):
            return _fail(f"{index}: results after inserts differ from a full build")
        rep.emit(command="update-bench", method=index, dataset=os.path.basename(args.data),
                 nx=cfg.nx, ny=cfg.ny, threads=1, backend=_backend.get_backend(),
                 partition_s=t_build, sort_s=0.0, run_s=t_ins,
                 throughput_qps=len(tail) / t_ins if t_ins > 0 else float("inf"),
                 metrics=m, replica_count=g.replica_count,
                 results=sum(r.shape[0] for r in res), checksum=checksum_results(res))
    return _validate(rep.rows)


def _timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


def _join_method(method, R, S, cfg, args, threads, m):
    """Returns (pairs, partition_s, sort_s, run_s, grid)."""
    if method.startswith("mj-"):
        opts = method[3:].replace("-", "_")
        (Rg, Sg), tp = _timed(lambda: (TwoLayerGrid.build(R, cfg), TwoLayerGrid.build(S, cfg)))
        _, ts = _timed(lambda: (Rg.sort_for_join(), Sg.sort_for_join()))
        pairs, tr = _timed(join_identical_grids, Rg, Sg, opts, m, threads)
        return pairs, tp, ts, tr, cfg
    if method == "pbsm-1layer":
        (Rg, Sg), tp = _timed(lambda: (OneLayerGrid.build(R, cfg), OneLayerGrid.build(S, cfg)))
        _, ts = _timed(lambda: (Rg.sort_for_join(), Sg.sort_for_join()))
        pairs, tr = _timed(pbsm_one_layer_join, Rg, Sg, m, threads)
        return pairs, tp, ts, tr, cfg
    if method.startswith("transform-"):
        coarse = GridConfig(args.coarse, args.coarse)
        fine = GridConfig(args.fine, args.fine)
        (Rg, Sg), tp = _timed(lambda: (TwoLayerGrid.build(R, coarse), TwoLayerGrid.build(S, fine)))
        _, ts = _timed(lambda: (Rg.sort_for_join(), Sg.sort_for_join()))
        variant = "materialized" if method.endswith("materialized") else "on_the_fly"
        pairs, tr = _timed(transform_join, Rg, Sg, variant, "all_opts", m, threads)
        return pairs, tp, ts, tr, fine
    if method.startswith("probe-"):
        Sg, tp = _timed(TwoLayerGrid.build, S, cfg)
        strategy = "for_loop" if method == "probe-for-loop" else "coarse_grid"
        pairs, tr = _timed(probe_join, R, Sg, strategy, args.probe_k, m, threads)
        return pairs, tp, 0.0, tr, cfg
    if method == "no-index-reduced":
        (Rg, Sg), tp = _timed(lambda: (build_temp_reduced(R, cfg), build_temp_reduced(S, cfg)))
        pairs, tr = _timed(join_identical_grids, Rg, Sg, "all_opts", m, threads)
        return pairs, tp, 0.0, tr, cfg
    raise ValueError(method)


def cmd_join_bench(args) -> int:
    rawR = read_csv(args.data_r, args.header)
    rawS = read_csv(args.data_s, args.header)
    box = joint_bounds(rawR, rawS)
    R, S = normalize(rawR, box), normalize(rawS, box)
    cfg = _grid_cfg(args, R.concat(S) if len(R) + len(S) else R)
    methods = _csv_list(args.methods, JOIN_METHODS, "join method")
    threads = args.threads or _backend.default_threads()
    rep = Reporter()
    for method in methods:
        if args.warmup:
            _join_method(method, R[:200], S[:200], cfg, args, threads, Metrics())
        m = Metrics()
        try:
            pairs, tp, ts, tr, used = _join_method(method, R, S, cfg, args, threads, m)
        except ValueError as exc:
            return _fail(f"{method}: {exc}")
        rep.emit(command="join-bench", method=method,
                 dataset=f"{os.path.basename(args.data_r)}|{os.path.basename(args.data_s)}",
                 nx=used.nx, ny=used.ny, threads=threads, backend=_backend.get_backend(),
                 partition_s=tp, sort_s=ts, run_s=tr, throughput_qps="", metrics=m,
                 results=pairs.shape[0], checksum=checksum_pairs(pairs[:, 0], pairs[:, 1]))
    return _validate(rep.rows)


# ---------------------------------------------------------------------------

def _grid_flags(p):
    p.add_argument("--nx", type=int, default=0, help="tiles in x (default: rule of thumb)")
    p.add_argument("--ny", type=int, default=0, help="tiles in y (default: --nx or rule of thumb)")


def _common(p):
    p.add_argument("--header", action="store_true", default=None,
                   help="input files start with a header line (auto-detected otherwise)")
    p.add_argument("--threads", type=int, default=0,
                   help="worker threads (default: TLGRID_THREADS or 1)")
    p.add_argument("--backend", choices=_backend.BACKENDS, default=None,
                   help="kernel backend (default: TLGRID_BACKEND)")
    p.add_argument("--no-warmup", dest="warmup", action="store_false",
                   help="skip the untimed warm-up pass")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tlgrid", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic rectangle dataset")
    p.add_argument("--card", type=int, required=True)
    p.add_argument("--area", type=float, default=1e-10)
    p.add_argument("--dist", choices=("uniform", "zipf"), default="uniform")
    p.add_argument("--ratio-lo", type=float, default=0.25)
    p.add_argument("--ratio-hi", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--header", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("range-bench", help="window-query throughput")
    p.add_argument("data")
    p.add_argument("--index", default="2layer,1layer",
                   help=f"comma-separated subset of {','.join(RANGE_INDEXES)}")
    p.add_argument("--queries", type=int, default=10000)
    p.add_argument("--rel-area", type=float, default=0.1, help="window area in percent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sweep-granularity", default="",
                   help="comma-separated tiles per dimension to sweep, e.g. 100,200,500")
    p.add_argument("--qt-capacity", type=int, default=1000)
    p.add_argument("--qt-depth", type=int, default=12)
    _grid_flags(p)
    _common(p)
    p.set_defaults(func=cmd_range_bench)

    p = sub.add_parser("update-bench", help="bulk-load a prefix, insert the rest")
    p.add_argument("data")
    p.add_argument("--index", default="2layer,1layer")
    p.add_argument("--split", type=float, default=0.9, help="fraction bulk-loaded")
    p.add_argument("--queries", type=int, default=1000)
    p.add_argument("--rel-area", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    _grid_flags(p)
    _common(p)
    p.set_defaults(func=cmd_update_bench)

    p = sub.add_parser("join-bench", help="spatial join strategies")
    p.add_argument("data_r")
    p.add_argument("data_s")
    p.add_argument("--methods", default=",".join(JOIN_METHODS),
                   help=f"comma-separated subset of {','.join(JOIN_METHODS)}")
    p.add_argument("--coarse", type=int, default=2, help="tiles per dimension of R for transform")
    p.add_argument("--fine", type=int, default=8, help="tiles per dimension of S for transform")
    p.add_argument("--probe-k", type=int, default=10)
    _grid_flags(p)
    _common(p)
    p.set_defaults(func=cmd_join_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "backend", None):
        _backend.set_backend(args.backend)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
