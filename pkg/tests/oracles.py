"""Brute-force reference implementations used as test oracles.

Written independently of the package: plain Python / numpy loops over
every rectangle, tile or pair.
"""

import numpy as np


def cell(v, n):
    return min(int(v * n), n - 1)


def scan_window(data, w):
    """Ids of rects intersecting window (xl, xu, yl, yu), closed intervals."""
    xl, xu, yl, yu = w
    hit = (data.xu >= xl) & (data.xl <= xu) & (data.yu >= yl) & (data.yl <= yu)
    return set(data.ids[hit].tolist())


def all_pairs(R, S):
    """Set of (r_id, s_id) of intersecting rects by exhaustive comparison."""
    out = set()
    for k in range(len(R)):
        hit = (S.xl <= R.xu[k]) & (S.xu >= R.xl[k]) & (S.yl <= R.yu[k]) & (S.yu >= R.yl[k])
        rid = int(R.ids[k])
        out.update((rid, int(s)) for s in S.ids[hit].tolist())
    return out


def tile_table(data, nx, ny):
    """{(i, j): {class_letter: set(ids)}} by looping over every overlapped tile."""
    table = {}
    for k in range(len(data)):
        i0, i1 = cell(data.xl[k], nx), cell(data.xu[k], nx)
        j0, j1 = cell(data.yl[k], ny), cell(data.yu[k], ny)
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                letter = "ABCD"[(2 if i > i0 else 0) + (1 if j > j0 else 0)]
                table.setdefault((i, j), {}).setdefault(letter, set()).add(int(data.ids[k]))
    return table


def grid_table(g):
    """Same shape as ``tile_table`` read back from a built grid."""
    table = {}
    for i, j in g.tile_keys():
        t = g.tile(i, j)
        for letter, part in zip("ABCD", t.classes()):
            if len(part):
                table.setdefault((i, j), {})[letter] = set(part.ids.tolist())
    return table
