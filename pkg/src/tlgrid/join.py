"""Duplicate-free spatial intersection joins over two-layer grids.

A tile-to-tile join splits into 16 class-to-class mini-joins.  Only the nine
in which at least one side starts inside the tile in x and at least one
side starts inside in y can produce a pair for the first time; the other
seven only rediscover pairs owned by an earlier tile, so they are skipped
and no pair ever needs deduplication.

Pairs are returned as ``(n, 2)`` uint64 arrays of ``(r_id, s_id)``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from enum import IntEnum
from typing import NamedTuple, Optional

import numpy as np

from . import _backend
from .geometry import Metrics, RectArray, new_counts
from .grid import ClassId, GridConfig, TileExtent, TwoLayerGrid, is_power_of_two
from .baselines import OneLayerGrid
from .query import _batch_store
from .store import SORT_NONE, SORT_XL, SORT_XU, TileStore, tile_index_array

A, B, C, D = ClassId.A, ClassId.B, ClassId.C, ClassId.D


class JoinPair(NamedTuple):
    r_id: int
    s_id: int


class YTestMode(IntEnum):
    FULL = 0
    S_STARTS_BEFORE_R = 1  # only r.yl <= s.yu is undecided
    R_STARTS_BEFORE_S = 2  # only s.yl <= r.yu is undecided


MiniJoinKind = tuple  # (ClassId of the R side, ClassId of the S side)

EVALUATED_KINDS = ((A, A), (A, B), (B, A), (A, C), (C, A), (A, D), (D, A), (B, C), (C, B))
SKIPPED_KINDS = ((B, B), (B, D), (D, B), (C, C), (C, D), (D, C), (D, D))
REDUCED_KINDS = ((A, C), (C, A), (A, D), (D, A), (B, C), (C, B))
ONE_SIDED_Y_KINDS = ((A, B), (B, A), (A, D), (D, A), (B, C), (C, B))

OPTS = {"base": 0, "sans_unnecessary": 1, "sans_redundant": 2, "all_opts": 3}


def kind_name(kind) -> str:
    return ClassId(kind[0]).name + ClassId(kind[1]).name


def _opts_code(opts) -> int:
    key = opts.replace("-", "_") if isinstance(opts, str) else opts
    if key not in OPTS:
        raise ValueError(f"unknown optimization setting {opts!r}; expected one of {list(OPTS)}")
    return OPTS[key]


def _kinds_array(kinds) -> np.ndarray:
    return np.array([(int(a), int(b)) for a, b in kinds], dtype=np.int64).reshape(-1, 2)


def pair_set(pairs) -> set:
    return set(map(tuple, np.asarray(pairs, dtype=np.uint64).reshape(-1, 2).tolist()))


def _merge(m, cnt):
    if m is not None:
        m.add_counts(cnt)


# ---------------------------------------------------------------------------
# sweeps over plain rectangle arrays

def _require_sorted(v, what):
    if v.shape[0] > 1 and np.any(v[1:] < v[:-1]):
        raise ValueError(f"input not sorted by {what}")


def plane_sweep(Rs, Ss, ymode=YTestMode.FULL, m: Optional[Metrics] = None,
                check_sorted: bool = True) -> np.ndarray:
    """Forward-scan sweep over two inputs sorted by xl."""
    Rs, Ss = RectArray.coerce(Rs), RectArray.coerce(Ss)
    if check_sorted:
        _require_sorted(Rs.xl, "xl")
        _require_sorted(Ss.xl, "xl")
    cnt = new_counts()
    out = _backend.kernels().plane_sweep(Rs, Ss, int(ymode), cnt)
    _merge(m, cnt)
    return out


def reduced_plane_sweep(Rs, Ss, ymode=YTestMode.FULL, m: Optional[Metrics] = None,
                        outer: str = "s") -> np.ndarray:
    """One-directional sweep for a side known to start before the other in x.

    The ``outer`` side (default S) starts at or before every element of
    the other side, which must be sorted by xl; for each outer element the
    sorted side is scanned forward while it can still overlap.
    """
    Rs, Ss = RectArray.coerce(Rs), RectArray.coerce(Ss)
    _require_sorted((Rs if outer == "s" else Ss).xl, "xl")
    cnt = new_counts()
    out = _backend.kernels().reduced_sweep(Rs, Ss, int(ymode), cnt, outer == "s")
    _merge(m, cnt)
    return out


def reduced_plane_sweep_batch(Rs, Ss, ymode=YTestMode.FULL, m: Optional[Metrics] = None,
                              outer: str = "s") -> np.ndarray:
    """Like ``reduced_plane_sweep`` with the outer side sorted by xu.

    For each element of the xl-sorted side the first outer element with
    ``xu >= xl`` is found by advancing a pointer; every later outer element
    overlaps in x, so only y tests remain.
    """
    Rs, Ss = RectArray.coerce(Rs), RectArray.coerce(Ss)
    inner, outer_arr = (Rs, Ss) if outer == "s" else (Ss, Rs)
    _require_sorted(inner.xl, "xl")
    _require_sorted(outer_arr.xu, "xu")
    cnt = new_counts()
    out = _backend.kernels().batch_sweep(Rs, Ss, int(ymode), cnt, outer == "s")
    _merge(m, cnt)
    return out


# ---------------------------------------------------------------------------
# tile and grid joins

def _tile_store(tile) -> TileStore:
    """Single-slot store wrapping the four classes of a Tile."""
    codes = {"none": SORT_NONE, "xl": SORT_XL, "xu": SORT_XU}
    parts = tile.classes()
    st = TileStore(1, 1, 4, [SORT_NONE] * 4)
    sizes = np.array([len(p) for p in parts], np.int64)
    st.b_size = sizes
    st.b_start = np.cumsum(sizes) - sizes
    st.b_cap = sizes.copy()
    st.b_sort = np.array([codes[s] for s in tile.sort_state], np.int8)
    st.slot_key = np.zeros(1, np.int64)
    st.tile_slot = np.zeros(1, np.int64)
    cat = RectArray.empty()
    for p in parts:
        cat = cat.concat(p)
    st.ids, st.xl, st.xu, st.yl, st.yu = cat.columns()
    st.meta[:] = (1, len(cat), 0)
    return st


def tile_join(Rt, St, opts="all_opts", m: Optional[Metrics] = None,
              kinds=EVALUATED_KINDS) -> np.ndarray:
    """Join two tiles covering the same extent (see ``TwoLayerGrid.tile``)."""
    cnt = new_counts()
    one = np.zeros(1, np.int64)
    out = _backend.kernels().join_tiles(_tile_store(Rt), _tile_store(St), one, one,
                                        _kinds_array(kinds), _opts_code(opts), cnt)
    _merge(m, cnt)
    return out


def _check_reduced_opts(g, opts):
    if getattr(g, "reduced", False) and _opts_code(opts) in (0, 2):
        raise ValueError("reduced indexes only support the sans_unnecessary and all_opts joins")


def _common_tiles(rstore, sstore):
    keys = rstore.tile_keys()
    ss = sstore.slots_of_keys(keys)
    keep = ss >= 0
    return np.flatnonzero(keep), ss[keep], keys[keep]


def _fan_out(n_tiles, threads, run):
    """Run ``run(lo, hi, cnt)`` over tile chunks; concatenate in chunk order."""
    threads = threads or _backend.default_threads()
    parts = max(1, min(threads, n_tiles))
    bounds = [(n_tiles * p) // parts for p in range(parts + 1)]
    spans = [(bounds[p], bounds[p + 1]) for p in range(parts)]

    def task(span):
        cnt = new_counts()
        return run(span[0], span[1], cnt), cnt

    if parts == 1:
        results = [task(spans[0])]
    else:
        with ThreadPoolExecutor(parts) as ex:
            results = list(ex.map(task, spans))
    total = new_counts()
    for _, cnt in results:
        total += cnt
    return np.concatenate([r for r, _ in results]), total


def join_identical_grids(Rg: TwoLayerGrid, Sg: TwoLayerGrid, opts="all_opts",
                         m: Optional[Metrics] = None, threads: Optional[int] = None,
                         kinds=EVALUATED_KINDS) -> np.ndarray:
    """All intersecting (r, s) pairs of two grids with the same config, each once."""
    if Rg.config != Sg.config:
        raise ValueError(f"grid configs differ: {Rg.config} vs {Sg.config}")
    _check_reduced_opts(Rg, opts)
    _check_reduced_opts(Sg, opts)
    code = _opts_code(opts)
    kk = _kinds_array(kinds)
    r_slots, s_slots, _ = _common_tiles(Rg.store, Sg.store)
    k = _backend.kernels()

    def run(lo, hi, cnt):
        return k.join_tiles(Rg.store, Sg.store, r_slots[lo:hi], s_slots[lo:hi], kk, code, cnt)

    out, cnt = _fan_out(r_slots.shape[0], threads, run)
    _merge(m, cnt)
    return out


def pbsm_one_layer_join(Rg: OneLayerGrid, Sg: OneLayerGrid, m: Optional[Metrics] = None,
                        threads: Optional[int] = None) -> np.ndarray:
    """Per-tile plane sweep; a pair is kept only in the tile holding its reference point."""
    if Rg.config != Sg.config:
        raise ValueError(f"grid configs differ: {Rg.config} vs {Sg.config}")
    r_slots, s_slots, keys = _common_tiles(Rg.store, Sg.store)
    k = _backend.kernels()

    def run(lo, hi, cnt):
        return k.pbsm_tiles(Rg.store, Sg.store, r_slots[lo:hi], s_slots[lo:hi], keys[lo:hi], cnt)

    out, cnt = _fan_out(r_slots.shape[0], threads, run)
    _merge(m, cnt)
    return out


# ---------------------------------------------------------------------------
# joining grids of different, nested granularity

def nesting_factors(coarse: GridConfig, fine: GridConfig) -> tuple:
    """(fx, fy) with ``fine == coarse * f``; both must be powers of two."""
    fx, rx = divmod(fine.nx, coarse.nx)
    fy, ry = divmod(fine.ny, coarse.ny)
    if rx or ry or not (is_power_of_two(fx) and is_power_of_two(fy)):
        raise ValueError(f"grid {fine.nx}x{fine.ny} is not a power-of-two refinement "
                         f"of {coarse.nx}x{coarse.ny}")
    return fx, fy


def _rewindow_mask(key, c, fny, fx, fy):
    """Fine entries that survive when their tiles are merged into coarse tiles."""
    i, j = key // fny, key % fny
    keep_y = ((c & 1) == 0) | (j % fy == 0)
    keep_x = ((c & 2) == 0) | (i % fx == 0)
    return keep_x & keep_y


def rewindow_classes(coarse_tile: TileExtent, fine: TwoLayerGrid) -> tuple:
    """Classes A, B, C, D of ``fine``'s content relative to a coarse tile.

    A collects class A of every covered fine tile, B the class-B entries of
    the first fine row, C the class-C entries of the first fine column and
    D the class-D entries of the first fine tile.
    """
    if not coarse_tile.nx:
        raise ValueError("coarse tile must come from GridConfig.tile_extent")
    fx, fy = nesting_factors(GridConfig(coarse_tile.nx, coarse_tile.ny), fine.config)
    i0, j0 = coarse_tile.i * fx, coarse_tile.j * fy
    st = fine.store
    out = []
    for c in range(4):
        ib = i0 + 1 if c & 2 else i0 + fx
        jb = j0 + 1 if c & 1 else j0 + fy
        I, J = np.meshgrid(np.arange(i0, ib), np.arange(j0, jb), indexing="ij")
        part = RectArray.empty()
        for slot in st.slots_of_keys((I * st.ny + J).ravel()):
            if slot >= 0:
                part = part.concat(st.gather(int(slot), c))
        out.append(part)
    return tuple(out)


def build_temp_coarse(fine: TwoLayerGrid, coarse: GridConfig) -> TileStore:
    """Materialize ``fine``'s content re-windowed onto the coarse grid."""
    fx, fy = nesting_factors(coarse, fine.config)
    st = fine.store
    key, c, pos = st.entries()
    keep = _rewindow_mask(key, c, st.ny, fx, fy)
    key, c, pos = key[keep], c[keep], pos[keep]
    ckey = (key // st.ny // fx) * coarse.ny + (key % st.ny) // fy
    ent = RectArray(st.ids[pos], st.xl[pos], st.xu[pos], st.yl[pos], st.yu[pos])
    return TileStore.from_entries(coarse.nx, coarse.ny, 4, [SORT_XL, SORT_XL, SORT_XU, SORT_XU],
                                  ckey, c, ent)


def transform_join(Rg: TwoLayerGrid, Sg: TwoLayerGrid, variant: str = "on_the_fly",
                   opts="all_opts", m: Optional[Metrics] = None,
                   threads: Optional[int] = None) -> np.ndarray:
    """Join grids whose granularities differ by a power-of-two factor.

    ``materialized`` re-windows the finer input into a temporary coarse
    index and runs the identical-grid join.  ``on_the_fly`` never builds
    it: each coarse mini-join is decomposed into mini-joins against the
    fine tiles that the re-windowing would have merged.
    """
    if variant not in ("materialized", "on_the_fly", "on-the-fly"):
        raise ValueError(f"unknown transform variant {variant!r}")
    swap = Rg.config.nx > Sg.config.nx or Rg.config.ny > Sg.config.ny
    coarse, fine = (Sg, Rg) if swap else (Rg, Sg)
    fx, fy = nesting_factors(coarse.config, fine.config)
    code = _opts_code(opts)
    # the kernels treat the coarse side as R; the evaluated kind set is
    # symmetric, so a swap only flips the output columns
    kk = _kinds_array(EVALUATED_KINDS)
    k = _backend.kernels()
    if variant == "materialized":
        temp = build_temp_coarse(fine, coarse.config)
        c_slots, t_slots, _ = _common_tiles(coarse.store, temp)

        def run(lo, hi, cnt):
            return k.join_tiles(coarse.store, temp, c_slots[lo:hi], t_slots[lo:hi], kk, code, cnt)

        n = c_slots.shape[0]
    else:
        c_slots = np.arange(coarse.store.n_slots, dtype=np.int64)
        c_keys = coarse.store.tile_keys()

        def run(lo, hi, cnt):
            return k.transform_tiles(coarse.store, fine.store, c_slots[lo:hi], c_keys[lo:hi],
                                     fx, fy, kk, code, cnt)

        n = c_slots.shape[0]
    out, cnt = _fan_out(n, threads, run)
    _merge(m, cnt)
    return out[:, ::-1].copy() if swap else out


# ---------------------------------------------------------------------------
# one side indexed

def probe_join(R, Sg: TwoLayerGrid, strategy: str = "for_loop", k: int = 10,
               m: Optional[Metrics] = None, threads: Optional[int] = None) -> np.ndarray:
    """Window-query ``Sg`` with every rectangle of ``R``.

    ``coarse_grid`` visits R grouped by the k x k cell of each rectangle's
    lower corner (cells in row-major order) for locality; ``for_loop``
    keeps input order.
    """
    data = RectArray.coerce(R)
    if strategy in ("coarse_grid", "grid"):
        if k < 1:
            raise ValueError("k must be >= 1")
        cell = tile_index_array(data.xl, k) * k + tile_index_array(data.yl, k)
        data = data[np.argsort(cell, kind="stable")]
    elif strategy != "for_loop":
        raise ValueError(f"unknown probe strategy {strategy!r}")
    wins = list(zip(data.xl, data.xu, data.yl, data.yu))
    hits = _batch_store(Sg.store, wins, m, threads, refpoint=False) if wins else []
    if not hits:
        return np.empty((0, 2), np.uint64)
    counts = np.array([h.shape[0] for h in hits], np.int64)
    return np.stack([np.repeat(data.ids, counts), np.concatenate(hits)], axis=1)


# ---------------------------------------------------------------------------
# neither side indexed

class ReducedRect(NamedTuple):
    """Stored fields of a reduced entry; missing coordinates are None."""

    id: int
    xl: Optional[float]
    xu: float
    yl: Optional[float]
    yu: float


class ReducedTwoLayerGrid(TwoLayerGrid):
    """Temporary join-only index that drops coordinates the joins never read.

    Class-B entries lose yl; class-D entries lose xl and yl.  The dropped
    slots hold NaN, so any code path that did read them would stop
    matching pairs.  Window queries are rejected.
    """

    reduced = True

    def entry(self, i: int, j: int, c: int, k: int) -> ReducedRect:
        part = self.tile(i, j).classes()[c]
        r = (int(part.ids[k]), float(part.xl[k]), float(part.xu[k]),
             float(part.yl[k]), float(part.yu[k]))
        drop_xl = c == D
        drop_yl = c in (B, D)
        return ReducedRect(r[0], None if drop_xl else r[1], r[2], None if drop_yl else r[3], r[4])

    def stored_floats(self) -> int:
        """Coordinates actually needed: 4 for A and C, 3 for B, 2 for D."""
        sizes = self.class_sizes()
        return int(4 * sizes[A] + 3 * sizes[B] + 4 * sizes[C] + 2 * sizes[D])


def build_temp_reduced(rects, cfg: GridConfig) -> ReducedTwoLayerGrid:
    g = ReducedTwoLayerGrid.build(rects, cfg, "join_ready")
    st = g.store
    _, c, pos = st.entries()
    st.yl[pos[(c == B) | (c == D)]] = np.nan
    st.xl[pos[c == D]] = np.nan
    return g


def no_index_join(R, S, cfg: GridConfig, opts="all_opts", m: Optional[Metrics] = None,
                  threads: Optional[int] = None) -> np.ndarray:
    """Index both inputs into reduced temporary grids and join them."""
    return join_identical_grids(build_temp_reduced(R, cfg), build_temp_reduced(S, cfg),
                                opts, m, threads)


# ---------------------------------------------------------------------------
# both sides indexed with unrelated grids

def objects_of(g: TwoLayerGrid) -> RectArray:
    """Every indexed rectangle once (class A holds each exactly once)."""
    _, c, pos = g.store.entries()
    pos = pos[c == A]
    st = g.store
    return RectArray(st.ids[pos], st.xl[pos], st.xu[pos], st.yl[pos], st.yu[pos])


def reindex_cost_report(Rg: TwoLayerGrid, Sg: TwoLayerGrid) -> dict:
    """Facts for choosing which input to re-index onto the other's grid.

    Suggests the input with fewer objects, or with the smaller mean extent
    when cardinalities tie.
    """
    info = {}
    for name, g in (("R", Rg), ("S", Sg)):
        obj = objects_of(g)
        ex, ey = obj.extents()
        info[name] = {"objects": g.object_count, "replicas": g.replica_count,
                      "avg_x_extent": ex, "avg_y_extent": ey, "grid": (g.config.nx, g.config.ny)}
    r, s = info["R"], info["S"]
    if r["objects"] != s["objects"]:
        pick = "R" if r["objects"] < s["objects"] else "S"
    else:
        pick = "R" if r["avg_x_extent"] + r["avg_y_extent"] <= s["avg_x_extent"] + s["avg_y_extent"] else "S"
    info["suggested"] = pick
    return info


def reindex_join(Rg: TwoLayerGrid, Sg: TwoLayerGrid, which: str = "S", opts="all_opts",
                 m: Optional[Metrics] = None, threads: Optional[int] = None) -> np.ndarray:
    """Rebuild one input on the other's grid, then join identical grids."""
    if which == "S":
        Sg = TwoLayerGrid.build(objects_of(Sg), Rg.config, "join_ready")
    elif which == "R":
        Rg = TwoLayerGrid.build(objects_of(Rg), Sg.config, "join_ready")
    else:
        raise ValueError("which must be 'R' or 'S'")
    return join_identical_grids(Rg, Sg, opts, m, threads)


def nested_loop_join(R, S) -> np.ndarray:
    """All intersecting pairs by exhaustive comparison (test oracle)."""
    R, S = RectArray.coerce(R), RectArray.coerce(S)
    parts = []
    for lo in range(0, len(R), 512):
        hi = min(lo + 512, len(R))
        ok = ((R.xl[lo:hi, None] <= S.xu[None, :]) & (S.xl[None, :] <= R.xu[lo:hi, None]) &
              (R.yl[lo:hi, None] <= S.yu[None, :]) & (S.yl[None, :] <= R.yu[lo:hi, None]))
        a, b = np.nonzero(ok)
        parts.append(np.stack([R.ids[lo + a], S.ids[b]], axis=1))
    return np.concatenate(parts) if parts else np.empty((0, 2), np.uint64)
