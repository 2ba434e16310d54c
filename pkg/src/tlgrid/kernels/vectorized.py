"""Pure-numpy kernels (fallback backend).

Same signatures, results and counter values as ``loops``.  Range queries
also reproduce the emission order; joins emit the same pair set.
"""

import numpy as np

from ..geometry import CMP, DUPS, MINIJOINS, RESULTS, TESTED
from ..store import (SORT_NONE, SORT_XL, SORT_XU, build_hash, hash_capacity,
                     tile_index_array)
from . import loops

P_NONE, P_START, P_END, P_BOTH = loops.P_NONE, loops.P_START, loops.P_END, loops.P_BOTH
Y_FULL, Y_S_BEFORE, Y_R_BEFORE = loops.Y_FULL, loops.Y_S_BEFORE, loops.Y_R_BEFORE

_kind_plan = getattr(loops._kind_plan, "py_func", loops._kind_plan)


def tile_index(v, n):
    return min(max(int(v * n), 0), n - 1)


def _ranges(starts, sizes):
    """Concatenation of ``arange(s, s + z)`` for every (s, z)."""
    sizes = np.asarray(sizes, np.int64)
    total = int(sizes.sum())
    if total == 0:
        return np.empty(0, np.int64)
    off = np.cumsum(sizes) - sizes
    return np.repeat(np.asarray(starts, np.int64) - off, sizes) + np.arange(total, dtype=np.int64)


def _plans(k, lo, hi):
    if lo == hi:
        return np.full(k.shape, P_BOTH, np.int8)
    return np.where(k == lo, P_START, np.where(k == hi, P_END, P_NONE)).astype(np.int8)


# ---------------------------------------------------------------------------
# window queries

def _scan_window(store, w, refpoint, i_from, i_to, cnt, trace=None, nt=0):
    nx, ny, ncls = store.nx, store.ny, store.ncls
    wxl, wxu, wyl, wyu = (float(v) for v in w)
    ilo, ihi = tile_index(wxl, nx), tile_index(wxu, nx)
    jlo, jhi = tile_index(wyl, ny), tile_index(wyu, ny)
    ia, ib = max(ilo, i_from), min(ihi, i_to)
    if ia > ib:
        return np.empty(0, np.uint64), nt
    I, J = np.meshgrid(np.arange(ia, ib + 1), np.arange(jlo, jhi + 1), indexing="ij")
    I, J = I.ravel(), J.ravel()
    slots = store.slots_of_keys(I * ny + J)
    keep = slots >= 0
    I, J, slots = I[keep], J[keep], slots[keep]
    nt_tiles = slots.shape[0]
    # tile-major, class inner
    tix = np.repeat(np.arange(nt_tiles), ncls)
    cls = np.tile(np.arange(ncls), nt_tiles)
    if not refpoint:
        ok = ~(((cls & 2) != 0) & (I[tix] > ilo)) & ~(((cls & 1) != 0) & (J[tix] > jlo))
        tix, cls = tix[ok], cls[ok]
    b = slots[tix] * ncls + cls
    sizes = store.b_size[b]
    e = _ranges(store.b_start[b], sizes)
    et = np.repeat(tix, sizes)
    xp = _plans(I, ilo, ihi)[et]
    yp = _plans(J, jlo, jhi)[et]
    xl, xu, yl, yu = store.xl[e], store.xu[e], store.yl[e], store.yu[e]
    alive = np.ones(e.shape[0], bool)
    ncmp = np.zeros(e.shape[0], np.int64)
    for plan_arr, fail, first in ((xp, xu < wxl, True), (xp, xl > wxu, False),
                                  (yp, yu < wyl, True), (yp, yl > wyu, False)):
        side = P_START if first else P_END
        m = alive & ((plan_arr == side) | (plan_arr == P_BOTH))
        ncmp += m
        alive &= ~(m & fail)
    dups = 0
    if refpoint:
        ncmp += 2 * alive
        rx = np.maximum(xl, wxl)
        ry = np.maximum(yl, wyl)
        ok = (tile_index_array(rx, nx) == I[et]) & (tile_index_array(ry, ny) == J[et])
        dups = int((alive & ~ok).sum())
        alive &= ok
    cnt[TESTED] += e.shape[0]
    cnt[CMP] += int(ncmp.sum())
    cnt[DUPS] += dups
    if trace is not None and trace.shape[0] > 0:
        trace[nt:nt + nt_tiles, 0] = I
        trace[nt:nt + nt_tiles, 1] = J
        trace[nt:nt + nt_tiles, 2] = np.bincount(et, minlength=nt_tiles)
        trace[nt:nt + nt_tiles, 3] = np.bincount(et, weights=ncmp, minlength=nt_tiles)
        trace[nt:nt + nt_tiles, 4] = np.bincount(et[alive], minlength=nt_tiles)
    return store.ids[e[alive]], nt + nt_tiles


def window_query(store, w, refpoint, cnt, i_from=0, i_to=None, trace=None):
    if i_to is None:
        i_to = store.nx - 1
    ids, nt = _scan_window(store, w, refpoint, i_from, i_to, cnt, trace, 0)
    cnt[RESULTS] += ids.shape[0]
    return ids, nt


def window_batch(store, wins, valid, refpoint, cnt):
    parts = []
    offsets = np.zeros(wins.shape[0] + 1, np.int64)
    for q in range(wins.shape[0]):
        n = 0
        if valid[q]:
            ids, _ = _scan_window(store, wins[q], refpoint, 0, store.nx - 1, cnt)
            parts.append(ids)
            n = ids.shape[0]
        offsets[q + 1] = offsets[q] + n
    out = np.concatenate(parts) if parts else np.empty(0, np.uint64)
    cnt[RESULTS] += out.shape[0]
    return out, offsets


# ---------------------------------------------------------------------------
# quad-tree

def _quad_query(tree, w, two_layer, cnt):
    wxl, wxu, wyl, wyu = (float(v) for v in w)
    md = tree.max_depth
    scale = 1 << md
    wx0, wx1 = tile_index(wxl, scale), tile_index(wxu, scale)
    wy0, wy1 = tile_index(wyl, scale), tile_index(wyu, scale)
    frontier = np.zeros(1, np.int64)
    leaves = []
    while frontier.size:
        sh = md - tree.node_depth[frontier]
        kx, ky = tree.node_kx[frontier], tree.node_ky[frontier]
        hit = ((wx0 >> sh) <= kx) & ((wx1 >> sh) >= kx) & ((wy0 >> sh) <= ky) & ((wy1 >> sh) >= ky)
        frontier = frontier[hit]
        ch = tree.node_child[frontier]
        leaves.append(frontier[ch < 0])
        inner = ch[ch >= 0]
        frontier = (inner[:, None] + np.arange(4)).ravel()
    nodes = np.concatenate(leaves)
    leaf = tree.leaf_of[nodes]
    o = np.argsort(leaf)
    nodes, leaf = nodes[o], leaf[o]
    sh = md - tree.node_depth[nodes]
    kx, ky = tree.node_kx[nodes], tree.node_ky[nodes]
    nl = nodes.shape[0]
    lix = np.repeat(np.arange(nl), 4)
    cls = np.tile(np.arange(4), nl)
    if two_layer:
        bx = (wx0 >> sh) < kx
        by = (wy0 >> sh) < ky
        ok = ~(((cls & 2) != 0) & bx[lix]) & ~(((cls & 1) != 0) & by[lix])
        lix, cls = lix[ok], cls[ok]
    b = leaf[lix] * 4 + cls
    sizes = tree.b_size[b]
    e = _ranges(tree.b_start[b], sizes)
    el = np.repeat(lix, sizes)
    xl, xu, yl, yu = tree.xl[e], tree.xu[e], tree.yl[e], tree.yu[e]
    alive = np.ones(e.shape[0], bool)
    ncmp = np.zeros(e.shape[0], np.int64)
    for fail in (xu < wxl, xl > wxu, yu < wyl, yl > wyu):
        ncmp += alive
        alive &= ~fail
    if not two_layer:
        ncmp += 2 * alive
        rx = tile_index_array(np.maximum(xl, wxl), scale) >> sh[el]
        ry = tile_index_array(np.maximum(yl, wyl), scale) >> sh[el]
        ok = (rx == kx[el]) & (ry == ky[el])
        cnt[DUPS] += int((alive & ~ok).sum())
        alive &= ok
    cnt[TESTED] += e.shape[0]
    cnt[CMP] += int(ncmp.sum())
    return tree.ids[e[alive]]


def quad_batch(tree, wins, valid, two_layer, cnt):
    parts = []
    offsets = np.zeros(wins.shape[0] + 1, np.int64)
    for q in range(wins.shape[0]):
        n = 0
        if valid[q]:
            ids = _quad_query(tree, wins[q], two_layer, cnt)
            parts.append(ids)
            n = ids.shape[0]
        offsets[q + 1] = offsets[q] + n
    out = np.concatenate(parts) if parts else np.empty(0, np.uint64)
    cnt[RESULTS] += out.shape[0]
    return out, offsets


# ---------------------------------------------------------------------------
# inserts

def _ensure_slots(store, need):
    while store.slot_key.shape[0] < need:
        store._grow_slots()


def _ensure_pool(store, need):
    while store.ids.shape[0] < need:
        store._grow_pool()


def insert_rects(store, rects, pos, init_cap):
    """Batch insert of ``rects[pos:]``; bucket contents match one-by-one appends."""
    rects = rects[pos:]
    n = len(rects)
    if n == 0:
        return pos, 0
    nx, ny, ncls = store.nx, store.ny, store.ncls
    ilo, ihi = tile_index_array(rects.xl, nx), tile_index_array(rects.xu, nx)
    jlo, jhi = tile_index_array(rects.yl, ny), tile_index_array(rects.yu, ny)
    wy = jhi - jlo + 1
    per = (ihi - ilo + 1) * wy
    rect_of = np.repeat(np.arange(n, dtype=np.int64), per)
    local = _ranges(np.zeros(n, np.int64), per)
    i = ilo[rect_of] + local // wy[rect_of]
    j = jlo[rect_of] + local % wy[rect_of]
    if ncls == 4:
        c = ((i > ilo[rect_of]).astype(np.int64) << 1) | (j > jlo[rect_of])
    else:
        c = np.zeros(i.shape[0], np.int64)
    key = i * ny + j

    # new tiles get slots in order of first appearance
    slots = store.slots_of_keys(key)
    miss = slots < 0
    if miss.any():
        uk, first = np.unique(key[miss], return_index=True)
        uk = uk[np.argsort(first, kind="stable")]
        n0 = store.n_slots
        nn = uk.shape[0]
        _ensure_slots(store, n0 + nn)
        new_slots = np.arange(n0, n0 + nn, dtype=np.int64)
        store.slot_key[n0:n0 + nn] = uk
        bs = slice(n0 * ncls, (n0 + nn) * ncls)
        store.b_start[bs] = 0
        store.b_size[bs] = 0
        store.b_cap[bs] = 0
        store.b_sort[bs] = np.tile(store.cls_sort, nn)
        store.meta[0] = n0 + nn
        if store.dense:
            store.tile_slot[uk] = new_slots
        else:
            total = n0 + nn
            cap = store.hkeys.size
            if 2 * total > cap:
                cap = hash_capacity(total)
            store.hkeys, store.hvals = build_hash(store.slot_key[:total],
                                                  np.arange(total, dtype=np.int64), cap)
            store.meta[2] = total
        slots = store.slots_of_keys(key)

    b = slots * ncls + c
    order = np.argsort(b, kind="stable")
    bo = b[order]
    ub, bstart, bcount = np.unique(bo, return_index=True, return_counts=True)
    sz = store.b_size[ub]
    cap = store.b_cap[ub]
    need = sz + bcount
    newcap = cap.copy()
    grow = newcap < need
    while grow.any():
        newcap[grow] = np.maximum(init_cap, 2 * newcap[grow])
        grow = newcap < need
    moved = newcap != cap
    if moved.any():
        mb, msz, mcap = ub[moved], sz[moved], newcap[moved]
        used = int(store.meta[1])
        nstart = used + np.cumsum(mcap) - mcap
        _ensure_pool(store, used + int(mcap.sum()))
        src = _ranges(store.b_start[mb], msz)
        dst = _ranges(nstart, msz)
        for name in ("ids", "xl", "xu", "yl", "yu"):
            a = getattr(store, name)
            a[dst] = a[src]
        store.b_start[mb] = nstart
        store.b_cap[mb] = mcap
        store.meta[1] = used + int(mcap.sum())

    rank = np.arange(bo.shape[0]) - np.repeat(bstart, bcount)
    rsz = np.repeat(sz, bcount)
    dst = store.b_start[bo] + rsz + rank
    src = rect_of[order]
    store.ids[dst] = rects.ids[src]
    store.xl[dst] = rects.xl[src]
    store.xu[dst] = rects.xu[src]
    store.yl[dst] = rects.yl[src]
    store.yu[dst] = rects.yu[src]

    # sortedness: every appended entry with a predecessor must not precede it
    srt = store.b_sort[bo]
    chk = (srt != SORT_NONE) & ((rsz + rank) > 0)
    if chk.any():
        d = dst[chk]
        kx = np.where(srt[chk] == SORT_XL, store.xl[d], store.xu[d])
        kp = np.where(srt[chk] == SORT_XL, store.xl[d - 1], store.xu[d - 1])
        bad = (kp > kx) | ((kp == kx) & (store.ids[d - 1] > store.ids[d]))
        store.b_sort[bo[chk][bad]] = SORT_NONE
    store.b_size[ub] = need
    return pos + n, 0


# ---------------------------------------------------------------------------
# mini-join primitives

def _ytest(ryl, ryu, syl, syu, ymode):
    """(passes, comparisons) per pair."""
    if ymode == Y_S_BEFORE:
        return ryl <= syu, np.ones(ryl.shape[0], np.int64)
    if ymode == Y_R_BEFORE:
        return syl <= ryu, np.ones(ryl.shape[0], np.int64)
    a = ryl <= syl
    ab = a & (syl <= ryu)
    d = syl <= ryl
    ok = ab | (~ab & d & (ryl <= syu))
    return ok, 1 + a + (~ab) * (1 + d.astype(np.int64))


def _finish(R, S, rp, sp, ymode, cnt, ref=None):
    """Y-test candidate pool-position pairs and emit survivors."""
    cnt[TESTED] += rp.shape[0]
    ok, nc = _ytest(R[3][rp], R[4][rp], S[3][sp], S[4][sp], ymode)
    cnt[CMP] += int(nc.sum())
    rp, sp = rp[ok], sp[ok]
    if ref is not None:
        cnt[CMP] += 2 * rp.shape[0]
        ti, tj, nx, ny = ref
        rx = np.maximum(R[1][rp], S[1][sp])
        ry = np.maximum(R[3][rp], S[3][sp])
        keep = (tile_index_array(rx, nx) == ti) & (tile_index_array(ry, ny) == tj)
        cnt[DUPS] += int((~keep).sum())
        rp, sp = rp[keep], sp[keep]
    return np.stack([R[0][rp], S[0][sp]], axis=1)


def plane_sweep_k(R, ri, S, si, ymode, cnt, ref=None):
    nr, ns = ri.shape[0], si.shape[0]
    rxl, rxu = R[1][ri], R[2][ri]
    sxl, sxu = S[1][si], S[2][si]
    ba = np.searchsorted(sxl, rxl, "right")
    ab = np.searchsorted(rxl, sxl, "left")
    pr = np.flatnonzero(ba < ns)
    ps = np.flatnonzero(ab < nr)
    cmp = pr.shape[0] + ps.shape[0]
    # r-driven scans over S
    b0 = ba[pr]
    pass_r = np.searchsorted(sxl, rxu[pr], "right") - b0
    cmp += int(pass_r.sum()) + int(((b0 + pass_r) < ns).sum())
    r_a = np.repeat(pr, pass_r)
    r_b = _ranges(b0, pass_r)
    # s-driven scans over R
    a0 = ab[ps]
    pass_s = np.searchsorted(rxl, sxu[ps], "right") - a0
    cmp += int(pass_s.sum()) + int(((a0 + pass_s) < nr).sum())
    s_a = _ranges(a0, pass_s)
    s_b = np.repeat(ps, pass_s)
    cnt[CMP] += cmp
    rp = ri[np.concatenate([r_a, s_a])]
    sp = si[np.concatenate([r_b, s_b])]
    return _finish(R, S, rp, sp, ymode, cnt, ref)


def reduced_sweep_k(R, ri, S, si, outer_is_s, ymode, cnt):
    if outer_is_s:
        inner, outer, inner_pool, outer_pool = ri, si, R, S
    else:
        inner, outer, inner_pool, outer_pool = si, ri, S, R
    m = inner.shape[0]
    ixl = inner_pool[1][inner]
    passing = np.searchsorted(ixl, outer_pool[2][outer], "right")
    cnt[CMP] += int(passing.sum()) + int((passing < m).sum())
    op = np.repeat(outer, passing)
    ip = inner[_ranges(np.zeros(outer.shape[0], np.int64), passing)]
    if outer_is_s:
        return _finish(R, S, ip, op, ymode, cnt)
    return _finish(R, S, op, ip, ymode, cnt)


def batch_sweep_k(R, ri, S, si, outer_is_s, ymode, cnt):
    # ``inner`` drives the loop (sorted by xl); the pointer walks ``outer`` (sorted by xu)
    if outer_is_s:
        inner, outer, inner_pool, outer_pool = ri, si, R, S
    else:
        inner, outer, inner_pool, outer_pool = si, ri, S, R
    m = outer.shape[0]
    k = inner.shape[0]
    if k == 0:
        return np.empty((0, 2), np.uint64)
    p = np.searchsorted(outer_pool[2][outer], inner_pool[1][inner], "left")
    full = np.flatnonzero(p == m)
    if full.size:
        nproc = int(full[0])
        p_last = m
    else:
        nproc = k
        p_last = int(p[-1])
    cnt[CMP] += p_last + nproc
    pp = p[:nproc]
    cnts = m - pp
    ip = inner[np.repeat(np.arange(nproc), cnts)]
    op = outer[_ranges(pp, cnts)]
    if outer_is_s:
        return _finish(R, S, ip, op, ymode, cnt)
    return _finish(R, S, op, ip, ymode, cnt)


def _pool(arr):
    return (arr.ids, arr.xl, arr.xu, arr.yl, arr.yu)


def plane_sweep(Ra, Sa, ymode, cnt):
    return plane_sweep_k(_pool(Ra), np.arange(len(Ra)), _pool(Sa), np.arange(len(Sa)), ymode, cnt)


def reduced_sweep(Ra, Sa, ymode, cnt, outer_is_s=True):
    return reduced_sweep_k(_pool(Ra), np.arange(len(Ra)), _pool(Sa), np.arange(len(Sa)),
                           outer_is_s, ymode, cnt)


def batch_sweep(Ra, Sa, ymode, cnt, outer_is_s=True):
    return batch_sweep_k(_pool(Ra), np.arange(len(Ra)), _pool(Sa), np.arange(len(Sa)),
                         outer_is_s, ymode, cnt)


# ---------------------------------------------------------------------------
# tile-level dispatch

def _sorted_positions(start, size, b_sorted, want, ids, xl, xu):
    idx = np.arange(start, start + size)
    if want == SORT_NONE or b_sorted == want or size < 2:
        return idx
    idx = idx[np.argsort(ids[idx], kind="stable")]
    key = xl[idx] if want == SORT_XL else xu[idx]
    return idx[np.argsort(key, kind="stable")]


def _run_minijoin(Rv, rb, Sv, sb, rc, sc, opts, cnt):
    rbs, rbz, rbsort = Rv[:3]
    sbs, sbz, sbsort = Sv[:3]
    R, S = Rv[3:], Sv[3:]
    alg, ymode, outer_is_s = _kind_plan(rc, sc, opts)
    want_r = want_s = SORT_XL
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
    ri = _sorted_positions(rbs[rb], rbz[rb], rbsort[rb], want_r, R[0], R[1], R[2])
    si = _sorted_positions(sbs[sb], sbz[sb], sbsort[sb], want_s, S[0], S[1], S[2])
    cnt[MINIJOINS] += 1
    if alg == 0:
        return plane_sweep_k(R, ri, S, si, ymode, cnt)
    if alg == 1:
        return reduced_sweep_k(R, ri, S, si, outer_is_s, ymode, cnt)
    return batch_sweep_k(R, ri, S, si, outer_is_s, ymode, cnt)


def _concat(parts):
    return np.concatenate(parts) if parts else np.empty((0, 2), np.uint64)


def join_tiles(rstore, sstore, r_slots, s_slots, kinds, opts, cnt):
    Rv, Sv = rstore.join_view(), sstore.join_view()
    parts = []
    for t in range(r_slots.shape[0]):
        for rc, sc in kinds:
            rb = r_slots[t] * 4 + rc
            sb = s_slots[t] * 4 + sc
            if Rv[1][rb] == 0 or Sv[1][sb] == 0:
                continue
            parts.append(_run_minijoin(Rv, rb, Sv, sb, int(rc), int(sc), opts, cnt))
    out = _concat(parts)
    cnt[RESULTS] += out.shape[0]
    return out


def pbsm_tiles(rstore, sstore, r_slots, s_slots, keys, cnt):
    Rv, Sv = rstore.join_view(), sstore.join_view()
    R, S = Rv[3:], Sv[3:]
    nx, ny = rstore.nx, rstore.ny
    parts = []
    for t in range(r_slots.shape[0]):
        rb, sb = r_slots[t], s_slots[t]
        if Rv[1][rb] == 0 or Sv[1][sb] == 0:
            continue
        ri = _sorted_positions(Rv[0][rb], Rv[1][rb], Rv[2][rb], SORT_XL, R[0], R[1], R[2])
        si = _sorted_positions(Sv[0][sb], Sv[1][sb], Sv[2][sb], SORT_XL, S[0], S[1], S[2])
        cnt[MINIJOINS] += 1
        ref = (int(keys[t]) // ny, int(keys[t]) % ny, nx, ny)
        parts.append(plane_sweep_k(R, ri, S, si, Y_FULL, cnt, ref))
    out = _concat(parts)
    cnt[RESULTS] += out.shape[0]
    return out


def transform_tiles(rstore, sstore, r_slots, r_keys, fx, fy, kinds, opts, cnt):
    Rv, Sv = rstore.join_view(), sstore.join_view()
    cny, fny = rstore.ny, sstore.ny
    parts = []
    for t in range(r_slots.shape[0]):
        ci, cj = divmod(int(r_keys[t]), cny)
        i0, j0 = ci * fx, cj * fy
        for rc, sc in kinds:
            rb = r_slots[t] * 4 + rc
            if Rv[1][rb] == 0:
                continue
            ib = i0 + 1 if sc & 2 else i0 + fx
            jb = j0 + 1 if sc & 1 else j0 + fy
            I, J = np.meshgrid(np.arange(i0, ib), np.arange(j0, jb), indexing="ij")
            slots = sstore.slots_of_keys((I * fny + J).ravel())
            for slot in slots[slots >= 0]:
                sb = slot * 4 + sc
                if Sv[1][sb] == 0:
                    continue
                parts.append(_run_minijoin(Rv, rb, Sv, sb, int(rc), int(sc), opts, cnt))
    out = _concat(parts)
    cnt[RESULTS] += out.shape[0]
    return out
