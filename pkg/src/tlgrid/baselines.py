"""Reference indexes: flat grid and replicating quad-tree.

Both deduplicate replicated results with the reference-point rule: a hit is
reported only by the partition holding the lower corner of its
intersection with the window.  The quad-tree can alternatively classify
leaf entries into A/B/C/D and prune classes like the two-layer grid.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import _backend
from .geometry import Metrics, RectArray
from .grid import GridConfig, TwoLayerGrid, _GridBase
from .query import _as_window, _batch_store, _query_store
from .store import SORT_NONE, SORT_XL, tile_index_array

QT_CAPACITY = 1000
QT_MAX_DEPTH = 12


class OneLayerGrid(_GridBase):
    """Same primary grid and replication as TwoLayerGrid, one flat list per tile."""

    ncls = 1

    @classmethod
    def _sort_codes(cls, sort_mode):
        if sort_mode in ("join_ready", "join-ready"):
            return [SORT_XL]
        if sort_mode == "none":
            return [SORT_NONE]
        raise ValueError(f"unknown sort mode {sort_mode!r}")

    def tile_entries(self, i: int, j: int) -> RectArray:
        self.config.tile_extent(i, j)
        return self.store.gather(self.store.slot_of(i, j), 0)


def one_layer_query(g: OneLayerGrid, W, m: Optional[Metrics] = None,
                    threads: Optional[int] = None) -> np.ndarray:
    """Window query with per-tile comparison plans and reference-point dedup."""
    return _query_store(g.store, W, m, threads, refpoint=True)


def one_layer_query_batch(g: OneLayerGrid, windows: Sequence, m: Optional[Metrics] = None,
                          threads: Optional[int] = None) -> list:
    return _batch_store(g.store, windows, m, threads, refpoint=True)


class QuadTree:
    """Region quad-tree over the unit square with object replication.

    Quadrant membership is decided on an integer lattice of
    ``2**max_depth`` cells per axis, closed-open like the grid tiles, so
    siblings partition their parent exactly.  Children are stored as four
    consecutive nodes in the order NW, NE, SW, SE (x grows west to east, y
    grows from the north edge down).  Leaves are numbered in depth-first
    order.  Each leaf keeps its entries split into classes A/B/C/D relative
    to the leaf quadrant; the reference-point mode simply scans all four.
    """

    def __init__(self, capacity, max_depth):
        self.capacity = int(capacity)
        self.max_depth = int(max_depth)

    @classmethod
    def build(cls, rects, capacity: int = QT_CAPACITY, max_depth: int = QT_MAX_DEPTH) -> "QuadTree":
        if capacity < 1 or max_depth < 0:
            raise ValueError("capacity must be >= 1 and max_depth >= 0")
        data = RectArray.coerce(rects)
        data.validate()
        t = cls(capacity, max_depth)
        scale = 1 << max_depth
        cx0, cx1 = tile_index_array(data.xl, scale), tile_index_array(data.xu, scale)
        cy0, cy1 = tile_index_array(data.yl, scale), tile_index_array(data.yu, scale)

        kx, ky, depth, child, leaf_of = [0], [0], [0], [-1], [-1]
        leaf_parts = []
        stack = [(0, np.arange(len(data)))]
        while stack:
            nd, members = stack.pop()
            d = depth[nd]
            if members.shape[0] > capacity and d < max_depth:
                first = len(kx)
                child[nd] = first
                sh = max_depth - d - 1
                kids = []
                for q in range(4):
                    qx, qy = 2 * kx[nd] + (q & 1), 2 * ky[nd] + (q >> 1)
                    kx.append(qx)
                    ky.append(qy)
                    depth.append(d + 1)
                    child.append(-1)
                    leaf_of.append(-1)
                    sel = ((cx0[members] >> sh) <= qx) & ((cx1[members] >> sh) >= qx) & \
                          ((cy0[members] >> sh) <= qy) & ((cy1[members] >> sh) >= qy)
                    kids.append((first + q, members[sel]))
                stack.extend(reversed(kids))
                continue
            leaf_of[nd] = len(leaf_parts)
            sh = max_depth - d
            cls_ = (((cx0[members] >> sh) < kx[nd]).astype(np.int64) << 1) | \
                ((cy0[members] >> sh) < ky[nd])
            o = np.argsort(cls_, kind="stable")
            leaf_parts.append((members[o], np.bincount(cls_, minlength=4)))

        t.node_kx = np.array(kx, np.int64)
        t.node_ky = np.array(ky, np.int64)
        t.node_depth = np.array(depth, np.int64)
        t.node_child = np.array(child, np.int64)
        t.leaf_of = np.array(leaf_of, np.int64)
        order = (np.concatenate([p[0] for p in leaf_parts]) if leaf_parts
                 else np.empty(0, np.int64))
        t.b_size = np.concatenate([p[1] for p in leaf_parts]).astype(np.int64)
        t.b_start = np.cumsum(t.b_size) - t.b_size
        t.ids, t.xl, t.xu, t.yl, t.yu = (a[order] for a in data.columns())
        t.object_count = len(data)
        return t

    def leaf_view(self):
        return (self.b_start, self.b_size, self.ids, self.xl, self.xu, self.yl, self.yu)

    @property
    def n_leaves(self) -> int:
        return int(self.b_size.shape[0] // 4)

    @property
    def replica_count(self) -> int:
        return int(self.ids.shape[0])

    def leaf_sizes(self) -> np.ndarray:
        return self.b_size.reshape(-1, 4).sum(axis=1)

    def leaf_depths(self) -> np.ndarray:
        leaves = np.flatnonzero(self.node_child < 0)
        out = np.empty(self.n_leaves, np.int64)
        out[self.leaf_of[leaves]] = self.node_depth[leaves]
        return out


def quadtree_build(rects, capacity: int = QT_CAPACITY, max_depth: int = QT_MAX_DEPTH) -> QuadTree:
    return QuadTree.build(rects, capacity, max_depth)


def _quad_mode(mode: str) -> bool:
    if mode in ("two-layer", "two_layer", "2layer"):
        return True
    if mode == "refpoint":
        return False
    raise ValueError(f"unknown quad-tree mode {mode!r}")


def quadtree_query_batch(t: QuadTree, windows: Sequence, mode: str = "refpoint",
                         m: Optional[Metrics] = None, threads: Optional[int] = None) -> list:
    two_layer = _quad_mode(mode)

    def kernel(wins, valid, cnt):
        return _backend.kernels().quad_batch(t, wins, valid, two_layer, cnt)

    return _batch_store(None, windows, m, threads, refpoint=False, batch_kernel=kernel)


def quadtree_query(t: QuadTree, W, mode: str = "refpoint", m: Optional[Metrics] = None) -> np.ndarray:
    """Ids intersecting ``W``.

    ``refpoint`` checks all leaf entries and keeps a hit only in the leaf
    holding its reference point; ``two-layer`` skips classes C/D (B/D) of
    leaves that the window enters from the west (north) instead.
    """
    _quad_mode(mode)
    if _as_window(W) is None:
        return np.empty(0, np.uint64)
    return quadtree_query_batch(t, [W], mode, m, 1)[0]


def grid_pair(rects, cfg: GridConfig, sort_mode: str = "none"):
    """Two-layer and one-layer grids over the same data and config."""
    return TwoLayerGrid.build(rects, cfg, sort_mode), OneLayerGrid.build(rects, cfg, sort_mode)


__all__ = ["OneLayerGrid", "one_layer_query", "one_layer_query_batch", "QuadTree",
           "quadtree_build", "quadtree_query", "quadtree_query_batch", "grid_pair"]
