"""Bucketed rectangle storage shared by the grid indices.

Every (tile, class) pair owns one contiguous segment ("bucket") of a pooled
struct-of-arrays.  Buckets are packed back to back after a bulk build; an
insert into a full bucket relocates it to the pool's tail with doubled
capacity, so appends stay amortized O(1) without touching other buckets.

Tiles are addressed by ``key = i * ny + j``.  The tile directory is a dense
``key -> slot`` array when many tiles are occupied and an open-addressing
hash table (linear probing, load <= 1/2) otherwise.
"""

from __future__ import annotations

import numpy as np

from . import _backend
from .geometry import RectArray

SORT_NONE, SORT_XL, SORT_XU = 0, 1, 2
NEED_POOL, NEED_SLOTS, NEED_HASH = 1, 2, 3
HASH_MULT = 2654435761
DENSE_THRESHOLD = 0.25
MAX_TILES = 2**31


def tile_index_array(v: np.ndarray, n: int) -> np.ndarray:
    """Vectorized ``min(floor(v * n), n - 1)`` for v in [0, 1]."""
    k = (v * n).astype(np.int64)
    np.minimum(k, n - 1, out=k)
    np.maximum(k, 0, out=k)
    return k


def hash_positions(keys: np.ndarray, mask: int) -> np.ndarray:
    h = keys * HASH_MULT
    h ^= h >> 29
    return h & mask


def build_hash(keys: np.ndarray, vals: np.ndarray, capacity: int):
    """Open-addressing table holding ``keys -> vals`` (keys unique, >= 0)."""
    hkeys = np.full(capacity, -1, dtype=np.int64)
    hvals = np.full(capacity, -1, dtype=np.int64)
    mask = capacity - 1
    pending = np.arange(keys.shape[0])
    pos = hash_positions(keys, mask)
    while pending.size:
        p = pos[pending]
        # one winner per free position per round; losers probe onward
        _, first = np.unique(p, return_index=True)
        win = pending[first]
        free = hkeys[pos[win]] == -1
        win = win[free]
        hkeys[pos[win]] = keys[win]
        hvals[pos[win]] = vals[win]
        placed = np.zeros(keys.shape[0], dtype=bool)
        placed[win] = True
        pending = pending[~placed[pending]]
        pos[pending] = (pos[pending] + 1) & mask
    return hkeys, hvals


def hash_capacity(n: int) -> int:
    cap = 8
    while cap < 2 * n + 2:
        cap *= 2
    return cap


class TileStore:
    """Pooled bucket storage for an ``nx`` x ``ny`` grid with ``ncls`` classes per tile."""

    def __init__(self, nx, ny, ncls, cls_sort):
        self.nx, self.ny, self.ncls = int(nx), int(ny), int(ncls)
        self.cls_sort = np.asarray(cls_sort, dtype=np.int8)
        self.tile_slot = np.empty(0, np.int64)
        self.hkeys = np.full(8, -1, np.int64)
        self.hvals = np.full(8, -1, np.int64)
        self.slot_key = np.empty(0, np.int64)
        self.b_start = np.empty(0, np.int64)
        self.b_size = np.empty(0, np.int64)
        self.b_cap = np.empty(0, np.int64)
        self.b_sort = np.empty(0, np.int8)
        self.ids = np.empty(0, np.uint64)
        self.xl = np.empty(0)
        self.xu = np.empty(0)
        self.yl = np.empty(0)
        self.yu = np.empty(0)
        # [n_slots, pool_used, n_hash_entries]
        self.meta = np.zeros(3, np.int64)

    # -- construction -------------------------------------------------
    @classmethod
    def build(cls, rects: RectArray, nx, ny, ncls, cls_sort, dense=None):
        """Replicate every rect into each tile it overlaps, classed per tile."""
        nx, ny = int(nx), int(ny)
        n = len(rects)
        ilo = tile_index_array(rects.xl, nx)
        ihi = tile_index_array(rects.xu, nx)
        jlo = tile_index_array(rects.yl, ny)
        jhi = tile_index_array(rects.yu, ny)
        wy = jhi - jlo + 1
        cnt = (ihi - ilo + 1) * wy
        total = int(cnt.sum())
        rect_of = np.repeat(np.arange(n, dtype=np.int64), cnt)
        local = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        wy_e = wy[rect_of]
        i = ilo[rect_of] + local // wy_e
        j = jlo[rect_of] + local % wy_e
        if ncls == 4:
            c = ((i > ilo[rect_of]).astype(np.int64) << 1) | (j > jlo[rect_of])
        else:
            c = np.zeros(total, np.int64)
        return cls.from_entries(nx, ny, ncls, cls_sort, i * ny + j, c, rects[rect_of], dense)

    @classmethod
    def from_entries(cls, nx, ny, ncls, cls_sort, key, c, entries: RectArray, dense=None):
        """Store holding ``entries[k]`` in tile ``key[k]``, class ``c[k]``.

        Within a bucket, entries keep their given order unless the class
        has a sort key, in which case they are ordered by (key, id).
        """
        st = cls(nx, ny, ncls, cls_sort)
        key = np.asarray(key, np.int64)
        c = np.asarray(c, np.int64)
        total = key.shape[0]
        bkey = key * st.ncls + c
        if np.any(st.cls_sort != SORT_NONE):
            codes = st.cls_sort[c]
            sval = np.where(codes == SORT_XU, entries.xu, entries.xl)
            order = np.lexsort((entries.ids, sval, bkey))
        else:
            order = np.argsort(bkey, kind="stable")
        key = key[order]
        bkey = bkey[order]
        ukeys, slot_e = np.unique(key, return_inverse=True)
        n_slots = ukeys.shape[0]
        nb = n_slots * st.ncls
        lb = slot_e * st.ncls + (bkey - key * st.ncls)
        size = np.bincount(lb, minlength=nb).astype(np.int64)
        st.b_size = size
        st.b_start = np.cumsum(size) - size
        st.b_cap = size.copy()
        st.b_sort = np.tile(st.cls_sort, n_slots).astype(np.int8)
        st.slot_key = ukeys.astype(np.int64)
        st.ids, st.xl, st.xu, st.yl, st.yu = (a[order] for a in entries.columns())
        st.meta[:] = (n_slots, total, 0)
        if dense is None:
            dense = n_slots > DENSE_THRESHOLD * st.nx * st.ny
        slots = np.arange(n_slots, dtype=np.int64)
        if dense:
            st.tile_slot = np.full(st.nx * st.ny, -1, np.int64)
            st.tile_slot[st.slot_key] = slots
        else:
            st.hkeys, st.hvals = build_hash(st.slot_key, slots, hash_capacity(n_slots))
            st.meta[2] = n_slots
        return st

    def entries(self):
        """(key, class, pool position) of every stored entry, bucket by bucket."""
        nb = self.n_slots * self.ncls
        sizes = self.b_size[:nb]
        total = int(sizes.sum())
        b = np.repeat(np.arange(nb, dtype=np.int64), sizes)
        pos = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(sizes) - sizes, sizes)
        pos += self.b_start[b]
        return self.slot_key[b // self.ncls], b % self.ncls, pos

    def sort_buckets(self, cls_sort) -> None:
        """Reorder every bucket in place by its class's key (ties by id)."""
        self.cls_sort = np.asarray(cls_sort, dtype=np.int8)
        _, c, pos = self.entries()
        nb = self.n_slots * self.ncls
        bucket = np.repeat(np.arange(nb), self.b_size[:nb])
        codes = self.cls_sort[c]
        keep = codes == SORT_NONE
        sval = np.where(keep, 0.0, np.where(codes == SORT_XU, self.xu[pos], self.xl[pos]))
        idkey = np.where(keep, 0, self.ids[pos])
        # unsorted classes keep their current order
        order = np.lexsort((np.arange(pos.shape[0]), idkey, sval, bucket))
        for name in ("ids", "xl", "xu", "yl", "yu"):
            a = getattr(self, name)
            a[pos] = a[pos[order]]
        self.b_sort[: self.n_slots * self.ncls] = np.tile(self.cls_sort, self.n_slots)

    # -- accessors ----------------------------------------------------
    @property
    def dense(self) -> bool:
        return self.tile_slot.size > 0

    @property
    def n_slots(self) -> int:
        return int(self.meta[0])

    @property
    def n_entries(self) -> int:
        return int(self.b_size[: self.n_slots * self.ncls].sum())

    def query_view(self):
        """Arrays consumed by the read-only kernels."""
        return (self.tile_slot, self.hkeys, self.hvals, self.b_start, self.b_size,
                self.ids, self.xl, self.xu, self.yl, self.yu)

    def join_view(self):
        return (self.b_start, self.b_size, self.b_sort,
                self.ids, self.xl, self.xu, self.yl, self.yu)

    def slot_of(self, i: int, j: int) -> int:
        key = i * self.ny + j
        if self.dense:
            return int(self.tile_slot[key])
        mask = self.hkeys.size - 1
        h = int(hash_positions(np.array([key], np.int64), mask)[0])
        while True:
            k = int(self.hkeys[h])
            if k == key:
                return int(self.hvals[h])
            if k == -1:
                return -1
            h = (h + 1) & mask

    def slots_of_keys(self, keys: np.ndarray) -> np.ndarray:
        """Vectorized directory lookup; -1 for empty tiles."""
        keys = np.asarray(keys, dtype=np.int64)
        if self.dense:
            return self.tile_slot[keys]
        mask = self.hkeys.size - 1
        res = np.full(keys.shape[0], -1, np.int64)
        pending = np.arange(keys.shape[0])
        pos = hash_positions(keys, mask)
        while pending.size:
            k = self.hkeys[pos[pending]]
            hit = k == keys[pending]
            res[pending[hit]] = self.hvals[pos[pending[hit]]]
            pending = pending[(~hit) & (k != -1)]
            pos[pending] = (pos[pending] + 1) & mask
        return res

    def bucket_range(self, slot: int, c: int):
        b = slot * self.ncls + c
        s = int(self.b_start[b])
        return s, s + int(self.b_size[b])

    def gather(self, slot: int, c: int) -> RectArray:
        if slot < 0:
            return RectArray.empty()
        s, e = self.bucket_range(slot, c)
        return RectArray(self.ids[s:e], self.xl[s:e], self.xu[s:e], self.yl[s:e], self.yu[s:e])

    def tile_keys(self) -> np.ndarray:
        return self.slot_key[: self.n_slots]

    # -- growth -------------------------------------------------------
    def _grow_pool(self):
        used = int(self.meta[1])
        cap = max(16, 2 * self.ids.shape[0])
        for name in ("ids", "xl", "xu", "yl", "yu"):
            old = getattr(self, name)
            new = np.empty(cap, dtype=old.dtype)
            new[:used] = old[:used]
            setattr(self, name, new)

    def _grow_slots(self):
        n = self.n_slots
        cap = max(8, 2 * self.slot_key.shape[0])
        nb_old, nb = n * self.ncls, cap * self.ncls
        for name, width in (("slot_key", cap), ("b_start", nb), ("b_size", nb),
                            ("b_cap", nb), ("b_sort", nb)):
            old = getattr(self, name)
            new = np.zeros(width, dtype=old.dtype)
            used = n if name == "slot_key" else nb_old
            new[:used] = old[:used]
            setattr(self, name, new)

    def _grow_hash(self):
        n = self.n_slots
        self.hkeys, self.hvals = build_hash(self.slot_key[:n], np.arange(n, dtype=np.int64),
                                            hash_capacity(2 * max(n, 4)))
        self.meta[2] = n

    def insert(self, rects: RectArray, init_cap: int = 4) -> None:
        """Append every rect to all tiles it overlaps, in its class per tile."""
        k = _backend.kernels()
        pos = 0
        n = len(rects)
        while pos < n:
            pos, status = k.insert_rects(self, rects, pos, init_cap)
            if status == NEED_POOL:
                self._grow_pool()
            elif status == NEED_SLOTS:
                self._grow_slots()
            elif status == NEED_HASH:
                self._grow_hash()
