"""Compiled loop kernels (numba backend).

Every kernel takes plain arrays and an int64 counter vector laid out as
``geometry.CMP..DUPS``.  Comparison counting follows the evaluation order
of the loops exactly; the vectorized backend reproduces the same counts.
"""

import numpy as np

from .._backend import njit
from ..geometry import CMP, DUPS, MINIJOINS, RESULTS, TESTED
from ..store import HASH_MULT, NEED_HASH, NEED_POOL, NEED_SLOTS, SORT_NONE, SORT_XL, SORT_XU

# per-dimension comparison plans
P_NONE, P_START, P_END, P_BOTH = 0, 1, 2, 3
# y tests
Y_FULL, Y_S_BEFORE, Y_R_BEFORE = 0, 1, 2
# join option sets
O_BASE, O_SANS_UNNECESSARY, O_SANS_REDUNDANT, O_ALL = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# directory and tiles

@njit
def tile_index(v, n):
    k = int(v * n)
    if k >= n:
        k = n - 1
    if k < 0:
        k = 0
    return k


@njit
def _hash(key, mask):
    h = key * HASH_MULT
    h ^= h >> 29
    return h & mask


@njit
def find_slot(key, tile_slot, hkeys, hvals):
    if tile_slot.size > 0:
        return tile_slot[key]
    mask = hkeys.size - 1
    h = _hash(key, mask)
    while True:
        k = hkeys[h]
        if k == key:
            return hvals[h]
        if k == -1:
            return -1
        h = (h + 1) & mask


@njit
def _plan(k, lo, hi):
    if lo == hi:
        return P_BOTH
    if k == lo:
        return P_START
    if k == hi:
        return P_END
    return P_NONE


@njit
def _grow_ids(out, n):
    new = np.empty(max(64, 2 * out.shape[0]), np.uint64)
    new[:n] = out[:n]
    return new


@njit
def _grow_pairs(out, n):
    new = np.empty((max(64, 2 * out.shape[0]), 2), np.uint64)
    new[:n] = out[:n]
    return new


# ---------------------------------------------------------------------------
# window queries

@njit
def _scan_window(view, nx, ny, ncls, wxl, wxu, wyl, wyu, refpoint, i_from, i_to,
                 out, n, cnt, trace, nt):
    tile_slot, hkeys, hvals, b_start, b_size, ids, xl, xu, yl, yu = view
    ilo = tile_index(wxl, nx)
    ihi = tile_index(wxu, nx)
    jlo = tile_index(wyl, ny)
    jhi = tile_index(wyu, ny)
    ia = max(ilo, i_from)
    ib = min(ihi, i_to)
    cmp = 0
    tested = 0
    dups = 0
    for i in range(ia, ib + 1):
        xp = _plan(i, ilo, ihi)
        for j in range(jlo, jhi + 1):
            yp = _plan(j, jlo, jhi)
            slot = find_slot(i * ny + j, tile_slot, hkeys, hvals)
            if slot < 0:
                continue
            c0 = cmp
            t0 = tested
            r0 = n
            tx0 = xp == P_START or xp == P_BOTH
            tx1 = xp == P_END or xp == P_BOTH
            ty0 = yp == P_START or yp == P_BOTH
            ty1 = yp == P_END or yp == P_BOTH
            per = tx0 + tx1 + ty0 + ty1
            for c in range(ncls):
                if not refpoint:
                    # class bit 2: starts before the tile in x; bit 1: in y
                    if (c & 2) and i > ilo:
                        continue
                    if (c & 1) and j > jlo:
                        continue
                b = slot * ncls + c
                s = b_start[b]
                sz = b_size[b]
                tested += sz
                if per == 0 and not refpoint:
                    # tile interior to the window: every entry is a result
                    while n + sz > out.shape[0]:
                        out = _grow_ids(out, n)
                    for e in range(s, s + sz):
                        out[n] = ids[e]
                        n += 1
                    continue
                for e in range(s, s + sz):
                    if tx0:
                        cmp += 1
                        if xu[e] < wxl:
                            continue
                    if tx1:
                        cmp += 1
                        if xl[e] > wxu:
                            continue
                    if ty0:
                        cmp += 1
                        if yu[e] < wyl:
                            continue
                    if ty1:
                        cmp += 1
                        if yl[e] > wyu:
                            continue
                    if refpoint:
                        cmp += 2
                        rx = xl[e] if xl[e] > wxl else wxl
                        ry = yl[e] if yl[e] > wyl else wyl
                        if tile_index(rx, nx) != i or tile_index(ry, ny) != j:
                            dups += 1
                            continue
                    if n == out.shape[0]:
                        out = _grow_ids(out, n)
                    out[n] = ids[e]
                    n += 1
            if trace.shape[0] > 0:
                trace[nt, 0] = i
                trace[nt, 1] = j
                trace[nt, 2] = tested - t0
                trace[nt, 3] = cmp - c0
                trace[nt, 4] = n - r0
                nt += 1
    cnt[CMP] += cmp
    cnt[TESTED] += tested
    cnt[DUPS] += dups
    return out, n, nt


@njit
def _window_query(view, nx, ny, ncls, w, refpoint, i_from, i_to, cnt, trace):
    out = np.empty(64, np.uint64)
    out, n, nt = _scan_window(view, nx, ny, ncls, w[0], w[1], w[2], w[3], refpoint,
                              i_from, i_to, out, 0, cnt, trace, 0)
    cnt[RESULTS] += n
    return out[:n], nt


def window_query(store, w, refpoint, cnt, i_from=0, i_to=None, trace=None):
    """Ids of entries intersecting window ``w`` = (xl, xu, yl, yu)."""
    if i_to is None:
        i_to = store.nx - 1
    if trace is None:
        trace = np.empty((0, 5), np.int64)
    ids, nt = _window_query(store.query_view(), store.nx, store.ny, store.ncls,
                            np.asarray(w, np.float64), bool(refpoint), i_from, i_to, cnt, trace)
    return ids, nt


@njit
def _window_batch(view, nx, ny, ncls, wins, valid, refpoint, cnt):
    k = wins.shape[0]
    offsets = np.zeros(k + 1, np.int64)
    out = np.empty(1024, np.uint64)
    n = 0
    trace = np.empty((0, 5), np.int64)
    for q in range(k):
        if valid[q]:
            out, n, _ = _scan_window(view, nx, ny, ncls, wins[q, 0], wins[q, 1], wins[q, 2],
                                     wins[q, 3], refpoint, 0, nx - 1, out, n, cnt, trace, 0)
        offsets[q + 1] = n
    cnt[RESULTS] += n
    return out[:n], offsets


def window_batch(store, wins, valid, refpoint, cnt):
    return _window_batch(store.query_view(), store.nx, store.ny, store.ncls,
                         wins, valid, bool(refpoint), cnt)


# ---------------------------------------------------------------------------
# quad-tree

@njit
def _quad_query(node_kx, node_ky, node_depth, node_child, leaf_of, qview, max_depth,
                w, two_layer, out, n, cnt):
    b_start, b_size, ids, xl, xu, yl, yu = qview
    wxl, wxu, wyl, wyu = w[0], w[1], w[2], w[3]
    scale = 1 << max_depth
    wkx_lo = tile_index(wxl, scale)
    wkx_hi = tile_index(wxu, scale)
    wky_lo = tile_index(wyl, scale)
    wky_hi = tile_index(wyu, scale)
    stack = np.empty(4 * max_depth + 8, np.int64)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        nd = stack[top]
        sh = max_depth - node_depth[nd]
        kx = node_kx[nd]
        ky = node_ky[nd]
        if (wkx_lo >> sh) > kx or (wkx_hi >> sh) < kx or (wky_lo >> sh) > ky or (wky_hi >> sh) < ky:
            continue
        ch = node_child[nd]
        if ch >= 0:
            # push SE, SW, NE, NW so that NW is visited first
            for q in range(3, -1, -1):
                stack[top] = ch + q
                top += 1
            continue
        leaf = leaf_of[nd]
        before_x = (wkx_lo >> sh) < kx
        before_y = (wky_lo >> sh) < ky
        for c in range(4):
            if two_layer:
                if (c & 2) and before_x:
                    continue
                if (c & 1) and before_y:
                    continue
            b = leaf * 4 + c
            s = b_start[b]
            for e in range(s, s + b_size[b]):
                cnt[TESTED] += 1
                cnt[CMP] += 1
                if xu[e] < wxl:
                    continue
                cnt[CMP] += 1
                if xl[e] > wxu:
                    continue
                cnt[CMP] += 1
                if yu[e] < wyl:
                    continue
                cnt[CMP] += 1
                if yl[e] > wyu:
                    continue
                if not two_layer:
                    cnt[CMP] += 2
                    rx = xl[e] if xl[e] > wxl else wxl
                    ry = yl[e] if yl[e] > wyl else wyl
                    if (tile_index(rx, scale) >> sh) != kx or (tile_index(ry, scale) >> sh) != ky:
                        cnt[DUPS] += 1
                        continue
                if n == out.shape[0]:
                    out = _grow_ids(out, n)
                out[n] = ids[e]
                n += 1
    return out, n


@njit
def _quad_batch(node_kx, node_ky, node_depth, node_child, leaf_of, qview, max_depth,
                wins, valid, two_layer, cnt):
    k = wins.shape[0]
    offsets = np.zeros(k + 1, np.int64)
    out = np.empty(1024, np.uint64)
    n = 0
    for q in range(k):
        if valid[q]:
            out, n = _quad_query(node_kx, node_ky, node_depth, node_child, leaf_of, qview,
                                 max_depth, wins[q], two_layer, out, n, cnt)
        offsets[q + 1] = n
    cnt[RESULTS] += n
    return out[:n], offsets


def quad_batch(tree, wins, valid, two_layer, cnt):
    return _quad_batch(tree.node_kx, tree.node_ky, tree.node_depth, tree.node_child,
                       tree.leaf_of, tree.leaf_view(), tree.max_depth, wins, valid,
                       bool(two_layer), cnt)


# ---------------------------------------------------------------------------
# inserts

@njit
def _insert(meta, tile_slot, hkeys, hvals, slot_key, b_start, b_size, b_cap, b_sort, cls_sort,
            ids, xl, xu, yl, yu, nx, ny, ncls, rid, rxl, rxu, ryl, ryu, pos, init_cap):
    dense = tile_slot.size > 0
    pcap = ids.shape[0]
    scap = slot_key.shape[0]
    hmask = hkeys.size - 1
    n = rid.shape[0]
    while pos < n:
        ilo = tile_index(rxl[pos], nx)
        ihi = tile_index(rxu[pos], nx)
        jlo = tile_index(ryl[pos], ny)
        jhi = tile_index(ryu[pos], ny)
        # capacity pre-check so that a rect is inserted all-or-nothing
        new_tiles = 0
        need = 0
        for i in range(ilo, ihi + 1):
            for j in range(jlo, jhi + 1):
                slot = find_slot(i * ny + j, tile_slot, hkeys, hvals)
                if slot < 0:
                    new_tiles += 1
                    need += init_cap
                else:
                    c = 0
                    if ncls == 4:
                        c = (2 if i > ilo else 0) | (1 if j > jlo else 0)
                    b = slot * ncls + c
                    if b_size[b] == b_cap[b]:
                        need += max(init_cap, 2 * b_cap[b])
        if meta[0] + new_tiles > scap:
            return pos, NEED_SLOTS
        if not dense and 2 * (meta[2] + new_tiles) > hkeys.size:
            return pos, NEED_HASH
        if meta[1] + need > pcap:
            return pos, NEED_POOL
        for i in range(ilo, ihi + 1):
            for j in range(jlo, jhi + 1):
                key = i * ny + j
                slot = find_slot(key, tile_slot, hkeys, hvals)
                if slot < 0:
                    slot = meta[0]
                    meta[0] += 1
                    slot_key[slot] = key
                    for c in range(ncls):
                        b = slot * ncls + c
                        b_start[b] = 0
                        b_size[b] = 0
                        b_cap[b] = 0
                        b_sort[b] = cls_sort[c]
                    if dense:
                        tile_slot[key] = slot
                    else:
                        h = _hash(key, hmask)
                        while hkeys[h] != -1:
                            h = (h + 1) & hmask
                        hkeys[h] = key
                        hvals[h] = slot
                        meta[2] += 1
                c = 0
                if ncls == 4:
                    c = (2 if i > ilo else 0) | (1 if j > jlo else 0)
                b = slot * ncls + c
                sz = b_size[b]
                if sz == b_cap[b]:
                    ncap = max(init_cap, 2 * b_cap[b])
                    ns = meta[1]
                    os_ = b_start[b]
                    for q in range(sz):
                        ids[ns + q] = ids[os_ + q]
                        xl[ns + q] = xl[os_ + q]
                        xu[ns + q] = xu[os_ + q]
                        yl[ns + q] = yl[os_ + q]
                        yu[ns + q] = yu[os_ + q]
                    b_start[b] = ns
                    b_cap[b] = ncap
                    meta[1] += ncap
                e = b_start[b] + sz
                ids[e] = rid[pos]
                xl[e] = rxl[pos]
                xu[e] = rxu[pos]
                yl[e] = ryl[pos]
                yu[e] = ryu[pos]
                b_size[b] = sz + 1
                if sz > 0 and b_sort[b] != SORT_NONE:
                    if b_sort[b] == SORT_XL:
                        pk, nk = xl[e - 1], xl[e]
                    else:
                        pk, nk = xu[e - 1], xu[e]
                    if pk > nk or (pk == nk and ids[e - 1] > ids[e]):
                        b_sort[b] = SORT_NONE
        pos += 1
    return pos, 0


def insert_rects(store, rects, pos, init_cap):
    pos, status = _insert(store.meta, store.tile_slot, store.hkeys, store.hvals, store.slot_key,
                          store.b_start, store.b_size, store.b_cap, store.b_sort, store.cls_sort,
                          store.ids, store.xl, store.xu, store.yl, store.yu,
                          store.nx, store.ny, store.ncls,
                          rects.ids, rects.xl, rects.xu, rects.yl, rects.yu, pos, init_cap)
    return int(pos), int(status)


# ---------------------------------------------------------------------------
# mini-join primitives
#
# Each side is a pooled view P = (ids, xl, xu, yl, yu) plus an int64 array of
# pool positions giving the iteration order.

@njit
def _ytest(ryl, ryu, syl, syu, ymode, cnt):
    if ymode == Y_S_BEFORE:
        cnt[CMP] += 1
        return ryl <= syu
    if ymode == Y_R_BEFORE:
        cnt[CMP] += 1
        return syl <= ryu
    cnt[CMP] += 1
    if ryl <= syl:
        cnt[CMP] += 1
        if syl <= ryu:
            return True
    cnt[CMP] += 1
    if syl <= ryl:
        cnt[CMP] += 1
        return ryl <= syu
    return False


@njit
def _ref_ok(cnt, rxl, ryl, sxl, syl, ref):
    # ref = (tile i, tile j, nx, ny); i < 0 disables the reference-point test
    if ref[0] < 0:
        return True
    cnt[CMP] += 2
    rx = rxl if rxl > sxl else sxl
    ry = ryl if ryl > syl else syl
    if tile_index(rx, ref[2]) != ref[0] or tile_index(ry, ref[3]) != ref[1]:
        cnt[DUPS] += 1
        return False
    return True


@njit
def plane_sweep_k(R, ri, S, si, ymode, out, n, cnt, ref):
    rid, rxl, rxu, ryl, ryu = R
    sid, sxl, sxu, syl, syu = S
    nr = ri.shape[0]
    ns = si.shape[0]
    a = 0
    b = 0
    while a < nr and b < ns:
        r = ri[a]
        s = si[b]
        cnt[CMP] += 1
        if rxl[r] < sxl[s]:
            k = b
            while k < ns:
                s2 = si[k]
                cnt[CMP] += 1
                if rxu[r] < sxl[s2]:
                    break
                cnt[TESTED] += 1
                if _ytest(ryl[r], ryu[r], syl[s2], syu[s2], ymode, cnt):
                    if _ref_ok(cnt, rxl[r], ryl[r], sxl[s2], syl[s2], ref):
                        if n == out.shape[0]:
                            out = _grow_pairs(out, n)
                        out[n, 0] = rid[r]
                        out[n, 1] = sid[s2]
                        n += 1
                k += 1
            a += 1
        else:
            k = a
            while k < nr:
                r2 = ri[k]
                cnt[CMP] += 1
                if sxu[s] < rxl[r2]:
                    break
                cnt[TESTED] += 1
                if _ytest(ryl[r2], ryu[r2], syl[s], syu[s], ymode, cnt):
                    if _ref_ok(cnt, rxl[r2], ryl[r2], sxl[s], syl[s], ref):
                        if n == out.shape[0]:
                            out = _grow_pairs(out, n)
                        out[n, 0] = rid[r2]
                        out[n, 1] = sid[s]
                        n += 1
                k += 1
            b += 1
    return out, n


@njit
def reduced_sweep_k(R, ri, S, si, outer_is_s, ymode, out, n, cnt):
    rid, rxl, rxu, ryl, ryu = R
    sid, sxl, sxu, syl, syu = S
    if outer_is_s:
        for b in range(si.shape[0]):
            s = si[b]
            for k in range(ri.shape[0]):
                r = ri[k]
                cnt[CMP] += 1
                if sxu[s] < rxl[r]:
                    break
                cnt[TESTED] += 1
                if _ytest(ryl[r], ryu[r], syl[s], syu[s], ymode, cnt):
                    if n == out.shape[0]:
                        out = _grow_pairs(out, n)
                    out[n, 0] = rid[r]
                    out[n, 1] = sid[s]
                    n += 1
    else:
        for a in range(ri.shape[0]):
            r = ri[a]
            for k in range(si.shape[0]):
                s = si[k]
                cnt[CMP] += 1
                if rxu[r] < sxl[s]:
                    break
                cnt[TESTED] += 1
                if _ytest(ryl[r], ryu[r], syl[s], syu[s], ymode, cnt):
                    if n == out.shape[0]:
                        out = _grow_pairs(out, n)
                    out[n, 0] = rid[r]
                    out[n, 1] = sid[s]
                    n += 1
    return out, n


@njit
def batch_sweep_k(R, ri, S, si, outer_is_s, ymode, out, n, cnt):
    """Inner side sorted by xl, outer side sorted by xu."""
    rid, rxl, rxu, ryl, ryu = R
    sid, sxl, sxu, syl, syu = S
    if outer_is_s:
        m = si.shape[0]
        p = 0
        for a in range(ri.shape[0]):
            r = ri[a]
            while p < m:
                cnt[CMP] += 1
                if sxu[si[p]] < rxl[r]:
                    p += 1
                else:
                    break
            if p == m:
                break
            for q in range(p, m):
                s = si[q]
                cnt[TESTED] += 1
                if _ytest(ryl[r], ryu[r], syl[s], syu[s], ymode, cnt):
                    if n == out.shape[0]:
                        out = _grow_pairs(out, n)
                    out[n, 0] = rid[r]
                    out[n, 1] = sid[s]
                    n += 1
    else:
        m = ri.shape[0]
        p = 0
        for b in range(si.shape[0]):
            s = si[b]
            while p < m:
                cnt[CMP] += 1
                if rxu[ri[p]] < sxl[s]:
                    p += 1
                else:
                    break
            if p == m:
                break
            for q in range(p, m):
                r = ri[q]
                cnt[TESTED] += 1
                if _ytest(ryl[r], ryu[r], syl[s], syu[s], ymode, cnt):
                    if n == out.shape[0]:
                        out = _grow_pairs(out, n)
                    out[n, 0] = rid[r]
                    out[n, 1] = sid[s]
                    n += 1
    return out, n


def _pool(arr):
    return (arr.ids, arr.xl, arr.xu, arr.yl, arr.yu)


def plane_sweep(Ra, Sa, ymode, cnt):
    out = np.empty((64, 2), np.uint64)
    noref = np.array([-1, -1, 1, 1], np.int64)
    out, n = plane_sweep_k(_pool(Ra), np.arange(len(Ra)), _pool(Sa), np.arange(len(Sa)),
                           ymode, out, 0, cnt, noref)
    return out[:n]


def reduced_sweep(Ra, Sa, ymode, cnt, outer_is_s=True):
    out = np.empty((64, 2), np.uint64)
    out, n = reduced_sweep_k(_pool(Ra), np.arange(len(Ra)), _pool(Sa), np.arange(len(Sa)),
                             outer_is_s, ymode, out, 0, cnt)
    return out[:n]


def batch_sweep(Ra, Sa, ymode, cnt, outer_is_s=True):
    out = np.empty((64, 2), np.uint64)
    out, n = batch_sweep_k(_pool(Ra), np.arange(len(Ra)), _pool(Sa), np.arange(len(Sa)),
                           outer_is_s, ymode, out, 0, cnt)
    return out[:n]


# ---------------------------------------------------------------------------
# tile-level mini-join dispatch

@njit
def _sorted_positions(start, size, b_sorted, want, ids, xl, xu):
    idx = np.arange(start, start + size)
    if want == SORT_NONE or b_sorted == want or size < 2:
        return idx
    o = np.argsort(ids[idx], kind="mergesort")
    idx = idx[o]
    key = xl[idx] if want == SORT_XL else xu[idx]
    o = np.argsort(key, kind="mergesort")
    return idx[o]


@njit
def _kind_plan(rc, sc, opts):
    """(algorithm, ymode, outer_is_s) for mini-join kind (rc, sc).

    algorithm: 0 plane sweep, 1 reduced sweep, 2 batch reduced sweep.
    """
    evaluated = ((rc & 2) == 0 or (sc & 2) == 0) and ((rc & 1) == 0 or (sc & 1) == 0)
    if not evaluated or opts == O_BASE:
        return 0, Y_FULL, False
    reduced = ((rc ^ sc) & 2) != 0
    outer_is_s = (sc & 2) != 0
    ymode = Y_FULL
    if (opts == O_SANS_UNNECESSARY or opts == O_ALL) and ((rc ^ sc) & 1) != 0:
        ymode = Y_R_BEFORE if (rc & 1) else Y_S_BEFORE
    if not reduced:
        return 0, ymode, False
    if opts == O_SANS_UNNECESSARY:
        return 1, ymode, outer_is_s
    if opts == O_SANS_REDUNDANT:
        return 2, Y_FULL, outer_is_s
    return 2, ymode, outer_is_s


@njit
def _run_minijoin(Rv, rb, Sv, sb, rc, sc, opts, out, n, cnt, ref):
    rbs, rbz, rbsort, rids, rxl, rxu, ryl, ryu = Rv
    sbs, sbz, sbsort, sids, sxl, sxu, syl, syu = Sv
    alg, ymode, outer_is_s = _kind_plan(rc, sc, opts)
    want_r = SORT_XL
    want_s = SORT_XL
    if alg == 1:
        if outer_is_s:
            want_s = SORT_NONE
        else:
            want_r = SORT_NONE
    elif alg == 2:
        if outer_is_s:
            want_s = SORT_XU
        else:
            want_r = SORT_XU
    ri = _sorted_positions(rbs[rb], rbz[rb], rbsort[rb], want_r, rids, rxl, rxu)
    si = _sorted_positions(sbs[sb], sbz[sb], sbsort[sb], want_s, sids, sxl, sxu)
    R = (rids, rxl, rxu, ryl, ryu)
    S = (sids, sxl, sxu, syl, syu)
    cnt[MINIJOINS] += 1
    if alg == 0:
        return plane_sweep_k(R, ri, S, si, ymode, out, n, cnt, ref)
    if alg == 1:
        return reduced_sweep_k(R, ri, S, si, outer_is_s, ymode, out, n, cnt)
    return batch_sweep_k(R, ri, S, si, outer_is_s, ymode, out, n, cnt)


@njit
def _join_tiles(Rv, Sv, r_slots, s_slots, kinds, opts, out, n, cnt):
    rbz = Rv[1]
    sbz = Sv[1]
    noref = np.array([-1, -1, 1, 1], np.int64)
    for t in range(r_slots.shape[0]):
        for k in range(kinds.shape[0]):
            rc = kinds[k, 0]
            sc = kinds[k, 1]
            rb = r_slots[t] * 4 + rc
            sb = s_slots[t] * 4 + sc
            if rbz[rb] == 0 or sbz[sb] == 0:
                continue
            out, n = _run_minijoin(Rv, rb, Sv, sb, rc, sc, opts, out, n, cnt, noref)
    return out, n


def join_tiles(rstore, sstore, r_slots, s_slots, kinds, opts, cnt):
    out = np.empty((1024, 2), np.uint64)
    out, n = _join_tiles(rstore.join_view(), sstore.join_view(), r_slots, s_slots,
                         kinds, opts, out, 0, cnt)
    cnt[RESULTS] += n
    return out[:n]


@njit
def _pbsm_tiles(Rv, Sv, r_slots, s_slots, keys, nx, ny, out, n, cnt):
    rbs, rbz, rbsort, rids, rxl, rxu, ryl, ryu = Rv
    sbs, sbz, sbsort, sids, sxl, sxu, syl, syu = Sv
    R = (rids, rxl, rxu, ryl, ryu)
    S = (sids, sxl, sxu, syl, syu)
    ref = np.empty(4, np.int64)
    ref[2] = nx
    ref[3] = ny
    for t in range(r_slots.shape[0]):
        rb = r_slots[t]
        sb = s_slots[t]
        if rbz[rb] == 0 or sbz[sb] == 0:
            continue
        ri = _sorted_positions(rbs[rb], rbz[rb], rbsort[rb], SORT_XL, rids, rxl, rxu)
        si = _sorted_positions(sbs[sb], sbz[sb], sbsort[sb], SORT_XL, sids, sxl, sxu)
        ref[0] = keys[t] // ny
        ref[1] = keys[t] % ny
        cnt[MINIJOINS] += 1
        out, n = plane_sweep_k(R, ri, S, si, Y_FULL, out, n, cnt, ref)
    return out, n


def pbsm_tiles(rstore, sstore, r_slots, s_slots, keys, cnt):
    out = np.empty((1024, 2), np.uint64)
    out, n = _pbsm_tiles(rstore.join_view(), sstore.join_view(), r_slots, s_slots, keys,
                         rstore.nx, rstore.ny, out, 0, cnt)
    cnt[RESULTS] += n
    return out[:n]


@njit
def _transform_tiles(Rv, Sv, r_slots, r_keys, s_dir, cny, fx, fy, fny, kinds, opts, out, n, cnt):
    tile_slot, hkeys, hvals = s_dir
    rbz = Rv[1]
    sbz = Sv[1]
    noref = np.array([-1, -1, 1, 1], np.int64)
    for t in range(r_slots.shape[0]):
        ci = r_keys[t] // cny
        cj = r_keys[t] % cny
        i0 = ci * fx
        j0 = cj * fy
        for k in range(kinds.shape[0]):
            rc = kinds[k, 0]
            sc = kinds[k, 1]
            rb = r_slots[t] * 4 + rc
            if rbz[rb] == 0:
                continue
            # fine tiles contributing to the coarse class sc
            ia, ib, ja, jb = i0, i0 + fx, j0, j0 + fy
            if sc & 2:
                ib = i0 + 1
            if sc & 1:
                jb = j0 + 1
            for i in range(ia, ib):
                for j in range(ja, jb):
                    slot = find_slot(i * fny + j, tile_slot, hkeys, hvals)
                    if slot < 0:
                        continue
                    sb = slot * 4 + sc
                    if sbz[sb] == 0:
                        continue
                    out, n = _run_minijoin(Rv, rb, Sv, sb, rc, sc, opts, out, n, cnt, noref)
    return out, n


def transform_tiles(rstore, sstore, r_slots, r_keys, fx, fy, kinds, opts, cnt):
    out = np.empty((1024, 2), np.uint64)
    s_dir = (sstore.tile_slot, sstore.hkeys, sstore.hvals)
    out, n = _transform_tiles(rstore.join_view(), sstore.join_view(), r_slots, r_keys, s_dir,
                              rstore.ny, fx, fy, sstore.ny, kinds, opts, out, 0, cnt)
    cnt[RESULTS] += n
    return out[:n]

