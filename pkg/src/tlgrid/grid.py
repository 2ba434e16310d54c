"""Regular grid with four secondary classes per tile.

A rectangle is replicated into every tile it overlaps.  Within a tile it
is filed under a class telling whether its lower corner lies inside the
tile in x and in y:

    A  starts inside in x and y
    B  starts inside in x, before the tile in y
    C  starts before the tile in x, inside in y
    D  starts before the tile in both

Class codes are ``(x_before << 1) | y_before`` so bit 2 means "starts
before in x" and bit 1 "starts before in y".  All membership decisions go
through ``tile_of`` on tile indices, never through float extents, so a
rectangle's lower corner lands in exactly one tile even on boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .geometry import Point, Rect, RectArray
from .store import MAX_TILES, SORT_NONE, SORT_XL, SORT_XU, TileStore

GRANULARITY_CAP = 10000


class ClassId(IntEnum):
    A = 0
    B = 1
    C = 2
    D = 3


SORT_NAMES = {SORT_NONE: "none", SORT_XL: "xl", SORT_XU: "xu"}


@dataclass(frozen=True)
class GridConfig:
    nx: int
    ny: int

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("tile counts must be integers")
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"tile counts must be >= 1, got {self.nx}x{self.ny}")
        if self.nx * self.ny >= MAX_TILES:
            raise ValueError("grid too large (nx * ny must be < 2**31)")

    def tile_extent(self, i: int, j: int) -> "TileExtent":
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise IndexError(f"tile ({i}, {j}) outside {self.nx}x{self.ny} grid")
        return TileExtent(i / self.nx, (i + 1) / self.nx, j / self.ny, (j + 1) / self.ny,
                          i, j, self.nx, self.ny)


class TileExtent(NamedTuple):
    """Tile [xl, xu) x [yl, yu); the last column/row is closed at the top.

    ``i, j, nx, ny`` locate the tile so membership tests can use index
    arithmetic.  Extents built by hand without them fall back to float
    comparisons.
    """

    xl: float
    xu: float
    yl: float
    yu: float
    i: int = -1
    j: int = -1
    nx: int = 0
    ny: int = 0

    def starts_inside_x(self, v: float) -> bool:
        if self.nx:
            return _index(v, self.nx) >= self.i
        return v >= self.xl

    def starts_inside_y(self, v: float) -> bool:
        if self.ny:
            return _index(v, self.ny) >= self.j
        return v >= self.yl


@dataclass
class Tile:
    i: int
    j: int
    a: RectArray
    b: RectArray
    c: RectArray
    d: RectArray
    sort_state: tuple

    def classes(self):
        return (self.a, self.b, self.c, self.d)

    def __len__(self):
        return sum(len(x) for x in self.classes())


def _index(v: float, n: int) -> int:
    return min(max(int(v * n), 0), n - 1)


def _check_unit(*vals) -> None:
    for v in vals:
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"coordinate {v} outside [0, 1]")


def tile_of(p, cfg: GridConfig) -> tuple:
    """Tile holding point ``p``; the upper domain boundary maps to the last tile."""
    x, y = p
    _check_unit(x, y)
    return _index(x, cfg.nx), _index(y, cfg.ny)


def tile_range(r, cfg: GridConfig) -> tuple:
    """Inclusive ``(ilo, ihi, jlo, jhi)`` of the tiles overlapping ``r``."""
    _check_unit(r.xl, r.xu, r.yl, r.yu)
    ilo, jlo = tile_of(Point(r.xl, r.yl), cfg)
    ihi, jhi = tile_of(Point(r.xu, r.yu), cfg)
    return ilo, ihi, jlo, jhi


def classify(r, t: TileExtent) -> ClassId:
    if t.nx and t.ny:
        overlap = (_index(r.xl, t.nx) <= t.i <= _index(r.xu, t.nx)
                   and _index(r.yl, t.ny) <= t.j <= _index(r.yu, t.ny))
    else:
        overlap = not (r.xu < t.xl or r.xl > t.xu or r.yu < t.yl or r.yl > t.yu)
    if not overlap:
        raise ValueError("rectangle does not intersect the tile")
    code = (0 if t.starts_inside_x(r.xl) else 2) | (0 if t.starts_inside_y(r.yl) else 1)
    return ClassId(code)


def suggest_granularity(avg_x_extent: float, avg_y_extent: float,
                        cap: int = GRANULARITY_CAP) -> GridConfig:
    """Tiles about ten times larger than the average object extent."""
    if avg_x_extent <= 0 or avg_y_extent <= 0:
        raise ValueError("average extents must be positive")

    def pick(e):
        return int(min(max(round(1.0 / (10.0 * e)), 1), cap))

    return GridConfig(pick(avg_x_extent), pick(avg_y_extent))


def _check_ids(ids: np.ndarray) -> np.ndarray:
    s = np.sort(ids)
    dup = np.flatnonzero(s[1:] == s[:-1])
    if dup.size:
        raise ValueError(f"duplicate id {int(s[dup[0]])}")
    return s


class _GridBase:
    """Shared plumbing for the classed and flat grids."""

    ncls = 4

    def __init__(self, config: GridConfig, store: TileStore, sorted_ids: np.ndarray):
        self.config = config
        self.store = store
        self._build_ids = sorted_ids
        self._inserted: set = set()

    @classmethod
    def _sort_codes(cls, sort_mode):
        raise NotImplementedError

    @classmethod
    def build(cls, rects, cfg: GridConfig, sort_mode: str = "none", dense=None):
        data = RectArray.coerce(rects)
        data.validate()
        sorted_ids = _check_ids(data.ids)
        store = TileStore.build(data, cfg.nx, cfg.ny, cls.ncls, cls._sort_codes(sort_mode), dense)
        return cls(cfg, store, sorted_ids)

    @property
    def object_count(self) -> int:
        return self._build_ids.shape[0] + len(self._inserted)

    @property
    def replica_count(self) -> int:
        return self.store.n_entries

    @property
    def nonempty_tiles(self) -> int:
        return self.store.n_slots

    def contains_id(self, rid: int) -> bool:
        k = np.searchsorted(self._build_ids, np.uint64(rid))
        if k < self._build_ids.shape[0] and self._build_ids[k] == rid:
            return True
        return int(rid) in self._inserted

    def insert(self, r: Rect) -> None:
        self.insert_many(RectArray.from_rects([r]))

    def insert_many(self, rects) -> None:
        """Append rects one after another; each must carry a new id."""
        data = RectArray.coerce(rects)
        if not len(data):
            return
        data.validate()
        new = _check_ids(data.ids)
        k = np.searchsorted(self._build_ids, new)
        k = np.minimum(k, max(self._build_ids.shape[0] - 1, 0))
        clash = self._build_ids.shape[0] > 0 and np.any(self._build_ids[k] == new)
        if clash or not self._inserted.isdisjoint(new.tolist()):
            raise ValueError("insert of an id already present in the index")
        self.store.insert(data)
        self._inserted.update(new.tolist())

    def sort_for_join(self) -> None:
        """Sort every bucket in place as a ``join_ready`` build would."""
        self.store.sort_buckets(self._sort_codes("join_ready"))

    def tile_keys(self):
        """(i, j) of the non-empty tiles, in slot order."""
        keys = self.store.tile_keys()
        return list(zip((keys // self.config.ny).tolist(), (keys % self.config.ny).tolist()))


class TwoLayerGrid(_GridBase):
    """N x M grid; each tile holds classes A/B/C/D.

    ``sort_mode="join_ready"`` keeps A and B sorted by xl and C and D by xu.
    """

    ncls = 4

    @classmethod
    def _sort_codes(cls, sort_mode):
        if sort_mode in ("join_ready", "join-ready"):
            return [SORT_XL, SORT_XL, SORT_XU, SORT_XU]
        if sort_mode == "none":
            return [SORT_NONE] * 4
        raise ValueError(f"unknown sort mode {sort_mode!r}")

    def tile(self, i: int, j: int) -> Tile:
        self.config.tile_extent(i, j)
        slot = self.store.slot_of(i, j)
        parts = [self.store.gather(slot, c) for c in range(4)]
        if slot < 0:
            states = ("none",) * 4
        else:
            states = tuple(SORT_NAMES[int(self.store.b_sort[slot * 4 + c])] for c in range(4))
        return Tile(i, j, *parts, sort_state=states)

    def class_sizes(self) -> np.ndarray:
        """Total entries per class over all tiles."""
        n = self.store.n_slots
        return self.store.b_size[: 4 * n].reshape(n, 4).sum(axis=0)


def grid_for(data: RectArray, cap: int = GRANULARITY_CAP) -> GridConfig:
    """Rule-of-thumb config for ``data``; zero extents fall back to the cap."""
    ex, ey = data.extents()
    tiny = 1.0 / (10.0 * cap)
    return suggest_granularity(max(ex, tiny), max(ey, tiny), cap)


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


__all__ = ["ClassId", "GridConfig", "TileExtent", "Tile", "TwoLayerGrid", "tile_of", "tile_range",
           "classify", "suggest_granularity", "grid_for", "is_power_of_two"]
