"""Window queries over a TwoLayerGrid.

Per tile, classes that can only hold results already reported in an
earlier tile are skipped, and each remaining entry is checked with only the
comparisons that the tile's position inside the window leaves undecided.
Results come out duplicate-free without any deduplication pass, in
tile-major order (i outer, j inner, classes A to D).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import _backend
from .geometry import Metrics, Window, new_counts
from .grid import GridConfig, TileExtent, TwoLayerGrid, tile_range

PLAN_NAMES = ("none", "start_only", "end_only", "both")


@dataclass(frozen=True)
class ClassMask:
    a: bool = True
    b: bool = True
    c: bool = True
    d: bool = True

    def classes(self) -> tuple:
        return tuple(k for k, on in zip("ABCD", (self.a, self.b, self.c, self.d)) if on)


class ComparisonPlan(NamedTuple):
    x_test: str
    y_test: str

    def max_comparisons(self) -> int:
        cost = {"none": 0, "start_only": 1, "end_only": 1, "both": 2}
        return cost[self.x_test] + cost[self.y_test]


class TileTrace(NamedTuple):
    i: int
    j: int
    entries: int
    comparisons: int
    results: int


def relevant_classes(tile_index, query_range) -> ClassMask:
    """Classes of tile (i, j) that may hold results first seen in this tile."""
    i, j = tile_index
    ilo, ihi, jlo, jhi = query_range
    if not (ilo <= i <= ihi and jlo <= j <= jhi):
        raise ValueError("tile outside the query range")
    x_before = i > ilo
    y_before = j > jlo
    return ClassMask(True, not y_before, not x_before, not (x_before or y_before))


def _plan_1d(k, lo, hi) -> str:
    if lo == hi:
        return "both"
    if k == lo:
        return "start_only"
    if k == hi:
        return "end_only"
    return "none"


def comparison_plan(tile: Optional[TileExtent], i: int, j: int, query: Window,
                    query_range=None) -> ComparisonPlan:
    """Tests needed per dimension for entries of tile (i, j).

    ``start_only`` checks ``r.u >= W.l``, ``end_only`` checks ``r.l <= W.u``
    and ``none`` means the window covers the tile in that dimension.  The
    decision uses tile indices only; ``tile`` is accepted for symmetry and
    may be None when ``query_range`` is given.
    """
    if query_range is None:
        if tile is None or not tile.nx:
            raise ValueError("need query_range or an indexed TileExtent")
        query_range = tile_range(query, GridConfig(tile.nx, tile.ny))
    ilo, ihi, jlo, jhi = query_range
    return ComparisonPlan(_plan_1d(i, ilo, ihi), _plan_1d(j, jlo, jhi))


def _as_window(W) -> Optional[Window]:
    w = W if isinstance(W, Window) else Window(*W)
    return w.clipped()


def _chunks(lo: int, hi: int, parts: int):
    """Split [lo, hi] into at most ``parts`` contiguous inclusive ranges."""
    n = hi - lo + 1
    parts = max(1, min(parts, n))
    bounds = [lo + (n * p) // parts for p in range(parts + 1)]
    return [(bounds[p], bounds[p + 1] - 1) for p in range(parts)]


def _query_store(store, W, m, threads, refpoint, trace=False):
    w = _as_window(W)
    if w is None:
        return (np.empty(0, np.uint64), []) if trace else np.empty(0, np.uint64)
    k = _backend.kernels()
    wa = np.array([w.xl, w.xu, w.yl, w.yu])
    threads = threads or _backend.default_threads()
    if trace:
        ilo, ihi, jlo, jhi = tile_range(w, _cfg(store))
        buf = np.zeros(((ihi - ilo + 1) * (jhi - jlo + 1), 5), np.int64)
        cnt = new_counts()
        ids, nt = k.window_query(store, wa, refpoint, cnt, 0, store.nx - 1, buf)
        if m is not None:
            m.add_counts(cnt)
        return ids, [TileTrace(*map(int, row)) for row in buf[:nt]]
    if threads == 1:
        cnt = new_counts()
        ids, _ = k.window_query(store, wa, refpoint, cnt)
        if m is not None:
            m.add_counts(cnt)
        return ids
    ilo, ihi, _, _ = tile_range(w, _cfg(store))

    def run(rng):
        cnt = new_counts()
        ids, _ = k.window_query(store, wa, refpoint, cnt, rng[0], rng[1])
        return ids, cnt

    with ThreadPoolExecutor(threads) as ex:
        parts = list(ex.map(run, _chunks(ilo, ihi, threads)))
    if m is not None:
        for _, cnt in parts:
            m.add_counts(cnt)
    return np.concatenate([p[0] for p in parts])


def _cfg(store):
    return GridConfig(store.nx, store.ny)


def _batch_store(store, windows, m, threads, refpoint, batch_kernel=None):
    wins = np.zeros((len(windows), 4))
    valid = np.zeros(len(windows), np.bool_)
    for q, W in enumerate(windows):
        w = _as_window(W)
        if w is not None:
            wins[q] = (w.xl, w.xu, w.yl, w.yu)
            valid[q] = True
    run_kernel = batch_kernel or (lambda wv, vv, cnt: _backend.kernels().window_batch(
        store, wv, vv, refpoint, cnt))
    threads = threads or _backend.default_threads()
    spans = _chunks(0, len(windows) - 1, threads) if len(windows) else []

    def run(span):
        cnt = new_counts()
        ids, off = run_kernel(wins[span[0]:span[1] + 1], valid[span[0]:span[1] + 1], cnt)
        return ids, off, cnt

    if threads == 1 or len(spans) <= 1:
        parts = [run(s) for s in spans]
    else:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, spans))
    out = []
    for ids, off, cnt in parts:
        if m is not None:
            m.add_counts(cnt)
        out.extend(ids[off[q]:off[q + 1]] for q in range(off.shape[0] - 1))
    return out


def _check_full(g) -> None:
    if getattr(g, "reduced", False):
        raise ValueError("reduced grids drop coordinates and cannot answer window queries")


def window_query(g: TwoLayerGrid, W, m: Optional[Metrics] = None, threads: Optional[int] = None,
                 all_classes: bool = False) -> np.ndarray:
    """Ids of the rectangles intersecting ``W``, each exactly once.

    ``W`` is clipped to the unit square first.  With ``all_classes`` the
    class pruning is switched off and duplicates are suppressed with the
    reference-point test instead (used to cross-check the pruning).
    Tile columns are split across ``threads`` workers; the concatenated
    output is identical to the single-threaded one.
    """
    _check_full(g)
    return _query_store(g.store, W, m, threads, refpoint=all_classes)


def window_query_trace(g: TwoLayerGrid, W, m: Optional[Metrics] = None):
    """Like ``window_query`` but also returns per-tile work records."""
    _check_full(g)
    return _query_store(g.store, W, m, 1, refpoint=False, trace=True)


def window_query_batch(g: TwoLayerGrid, windows: Sequence, m: Optional[Metrics] = None,
                       threads: Optional[int] = None) -> list:
    """One id array per window; windows are spread across threads."""
    _check_full(g)
    return _batch_store(g.store, windows, m, threads, refpoint=False)
