import numpy as np
import pytest

from conftest import random_rects
from oracles import all_pairs, cell
from tlgrid import (EVALUATED_KINDS, SKIPPED_KINDS, ClassId, GridConfig, Metrics, OneLayerGrid, Rect,
                    RectArray, TwoLayerGrid, YTestMode, build_temp_reduced, classify,
                    join_identical_grids, pbsm_one_layer_join, plane_sweep, probe_join,
                    reduced_plane_sweep, reduced_plane_sweep_batch, rewindow_classes, tile_join,
                    transform_join)
from tlgrid import join as join_mod
from tlgrid.join import (OPTS, ReducedRect, kind_name, nested_loop_join, no_index_join, pair_set,
                         reindex_cost_report, reindex_join)
from tlgrid.store import TileStore

A, B, C, D = ClassId.A, ClassId.B, ClassId.C, ClassId.D
R2 = Rect(2, 0.4, 0.6, 0.4, 0.6)


def ra(*rects):
    return RectArray.from_rects(rects)


def grids(R, S, n, sort="join_ready"):
    cfg = GridConfig(n, n)
    return TwoLayerGrid.build(R, cfg, sort), TwoLayerGrid.build(S, cfg, sort)


@pytest.fixture
def inputs():
    return random_rects(800, seed=31, max_side=0.12), random_rects(700, seed=32, max_side=0.12,
                                                                  start_id=10_000)


def test_kind_sets():
    assert sorted(map(kind_name, EVALUATED_KINDS)) == sorted(
        ["AA", "AB", "BA", "AC", "CA", "AD", "DA", "BC", "CB"])
    assert sorted(map(kind_name, SKIPPED_KINDS)) == sorted(["BB", "BD", "DB", "CC", "CD", "DC", "DD"])


def test_plane_sweep_examples(backend):
    assert pair_set(plane_sweep(ra(Rect(1, 0.1, 0.3, 0.1, 0.3)), ra(Rect(2, 0.3, 0.5, 0.2, 0.4)))) == {(1, 2)}
    assert plane_sweep(ra(Rect(1, 0.1, 0.2, 0, 1)), ra(Rect(2, 0.5, 0.6, 0, 1))).shape == (0, 2)
    with pytest.raises(ValueError):
        plane_sweep(ra(Rect(1, 0.5, 0.6, 0, 1), Rect(2, 0.1, 0.2, 0, 1)), ra())


def _sorted_by(a, key):
    return a[np.argsort(getattr(a, key), kind="stable")]


def test_plane_sweep_random_tile(backend):
    R = _sorted_by(random_rects(200, seed=1, max_side=0.2), "xl")
    S = _sorted_by(random_rects(200, seed=2, max_side=0.2, start_id=500), "xl")
    out = plane_sweep(R, S)
    assert len(out) == len(pair_set(out))
    assert pair_set(out) == all_pairs(R, S)


def test_reduced_sweep_example(backend):
    r = Rect(1, 0.6, 0.8, 0.15, 0.3)
    s = Rect(2, 0.4, 0.7, 0.1, 0.2)
    cfg = GridConfig(2, 2)
    assert classify(r, cfg.tile_extent(1, 0)) == A and classify(s, cfg.tile_extent(1, 0)) == C
    out = reduced_plane_sweep(ra(r), ra(s), YTestMode.FULL)
    assert pair_set(out) == {(1, 2)}
    m = Metrics()
    assert reduced_plane_sweep(ra(r), ra(Rect(3, 0.1, 0.5, 0.1, 0.2)), m=m).shape == (0, 2)
    assert m.coordinate_comparisons == 1


def _class_conforming(n, seed):
    """R starts inside [0.5, 1) in x, S starts before 0.5 and reaches into it."""
    rng = np.random.default_rng(seed)
    rx = 0.5 + rng.random(n) * 0.4
    R = RectArray(np.arange(n, dtype=np.uint64), rx, rx + rng.random(n) * 0.1,
                  rng.random(n) * 0.5, rng.random(n) * 0.5 + 0.5)
    sx = rng.random(n) * 0.5
    S = RectArray(np.arange(n, 2 * n, dtype=np.uint64), sx, 0.5 + rng.random(n) * 0.5 * rng.random(n),
                  rng.random(n) * 0.5, rng.random(n) * 0.5 + 0.5)
    return _sorted_by(R, "xl"), S


def test_reduced_sweep_random(backend):
    R, S = _class_conforming(100, 4)
    want = all_pairs(R, S)
    assert pair_set(reduced_plane_sweep(R, S)) == want
    assert pair_set(reduced_plane_sweep(S, R, outer="r")) == {(b, a) for a, b in want}


def test_batch_fig6_one_x_comparison(backend):
    r = Rect(0, 0.6, 0.7, 0.2, 0.3)
    ss = ra(Rect(1, 0.1, 0.65, 0.25, 0.4), Rect(2, 0.2, 0.75, 0.1, 0.28), Rect(3, 0.3, 0.9, 0.0, 0.5))
    m = Metrics()
    out = reduced_plane_sweep_batch(ra(r), ss, YTestMode.S_STARTS_BEFORE_R, m)
    assert pair_set(out) == {(0, 1), (0, 2), (0, 3)}
    # one-sided y costs exactly one comparison per tested pair; the rest is x work
    assert m.coordinate_comparisons - m.pairs_tested == 1


def test_batch_empty_side(backend):
    m = Metrics()
    assert reduced_plane_sweep_batch(ra(Rect(0, 0.6, 0.7, 0.2, 0.3)), ra(), m=m).shape == (0, 2)
    assert m.coordinate_comparisons == 0


def test_batch_random_matches_and_saves_x_work(backend):
    R, S = _class_conforming(300, 7)
    S = _sorted_by(S, "xu")
    m_red, m_bat = Metrics(), Metrics()
    mode = YTestMode.S_STARTS_BEFORE_R
    a = reduced_plane_sweep(R, S, mode, m_red)
    b = reduced_plane_sweep_batch(R, S, mode, m_bat)
    assert pair_set(a) == pair_set(b)
    x_red = m_red.coordinate_comparisons - m_red.pairs_tested
    x_bat = m_bat.coordinate_comparisons - m_bat.pairs_tested
    assert x_bat < x_red


def test_tile_join_self_pair(backend):
    g = TwoLayerGrid.build([Rect(9, 0.1, 0.2, 0.1, 0.2)], GridConfig(1, 1), "join_ready")
    m = Metrics()
    assert pair_set(tile_join(g.tile(0, 0), g.tile(0, 0), "base", m)) == {(9, 9)}
    assert m.minijoins_executed == 1


def test_tile_join_counts_nine_minijoins(backend):
    # every class populated on both sides of tile (1, 1)
    rects = [Rect(0, 0.6, 0.7, 0.6, 0.7), Rect(1, 0.6, 0.7, 0.4, 0.7),
             Rect(2, 0.4, 0.7, 0.6, 0.7), Rect(3, 0.4, 0.7, 0.4, 0.7)]
    g = TwoLayerGrid.build(rects, GridConfig(2, 2), "join_ready")
    m = Metrics()
    tile_join(g.tile(1, 1), g.tile(1, 1), "all_opts", m)
    assert m.minijoins_executed == 9


@pytest.mark.parametrize("opts", list(OPTS))
def test_tile_join_random_opts_agree(backend, inputs, opts):
    R, S = inputs
    Rg, Sg = grids(R, S, 3)
    base = tile_join(Rg.tile(1, 1), Sg.tile(1, 1), "base")
    other = tile_join(Rg.tile(1, 1), Sg.tile(1, 1), opts)
    assert pair_set(base) == pair_set(other)


def test_r2_join_through_da(backend):
    s = Rect(7, 0.55, 0.65, 0.55, 0.65)
    Rg, Sg = grids([R2], [s], 2)
    assert join_identical_grids(Rg, Sg).tolist() == [[2, 7]]
    only_da = join_identical_grids(Rg, Sg, kinds=[(D, A)])
    assert only_da.tolist() == [[2, 7]]
    assert join_identical_grids(Rg, Sg, kinds=[k for k in EVALUATED_KINDS if k != (D, A)]).size == 0


def test_disjoint_tiles_join_empty(backend):
    Rg, Sg = grids([Rect(0, 0.1, 0.2, 0.1, 0.2)], [Rect(1, 0.7, 0.8, 0.7, 0.8)], 2)
    assert join_identical_grids(Rg, Sg).shape == (0, 2)


@pytest.mark.parametrize("n", [1, 4, 10, 25])
@pytest.mark.parametrize("opts", list(OPTS))
def test_grid_join_matches_oracle(backend, inputs, n, opts):
    R, S = inputs
    Rg, Sg = grids(R, S, n)
    out = join_identical_grids(Rg, Sg, opts)
    assert len(out) == len(pair_set(out))
    assert pair_set(out) == all_pairs(R, S)


def test_grid_join_unsorted_build_and_threads(backend, inputs):
    R, S = inputs
    Rg, Sg = grids(R, S, 8, sort="none")
    want = all_pairs(R, S)
    for opts in OPTS:
        assert pair_set(join_identical_grids(Rg, Sg, opts, threads=3)) == want


def test_grid_join_config_mismatch():
    with pytest.raises(ValueError):
        join_identical_grids(TwoLayerGrid.build([R2], GridConfig(2, 2)),
                             TwoLayerGrid.build([R2], GridConfig(4, 4)))


def test_skipped_kinds_only_repeat_results(backend, inputs):
    R, S = inputs
    Rg, Sg = grids(R, S, 6)
    full = pair_set(join_identical_grids(Rg, Sg))
    extra = pair_set(join_identical_grids(Rg, Sg, kinds=SKIPPED_KINDS))
    assert extra and extra <= full


def test_every_evaluated_kind_is_needed(backend):
    R = random_rects(300, seed=41, max_side=0.5)
    S = random_rects(300, seed=42, max_side=0.5, start_id=1000)
    Rg, Sg = grids(R, S, 4)
    full = pair_set(join_identical_grids(Rg, Sg))
    for kind in EVALUATED_KINDS:
        rest = [k for k in EVALUATED_KINDS if k != kind]
        assert pair_set(join_identical_grids(Rg, Sg, kinds=rest)) < full, kind_name(kind)


def test_comparison_monotonicity(backend, inputs):
    R, S = inputs
    Rg, Sg = grids(R, S, 6)
    cmp = {}
    for opts in OPTS:
        m = Metrics()
        join_identical_grids(Rg, Sg, opts, m)
        cmp[opts] = m.coordinate_comparisons
    assert cmp["all_opts"] <= cmp["sans_unnecessary"] < cmp["base"]
    assert cmp["sans_redundant"] < cmp["base"]
    assert cmp["all_opts"] < cmp["sans_unnecessary"]


def test_pbsm_examples(backend):
    s = Rect(7, 0.55, 0.65, 0.55, 0.65)
    cfg = GridConfig(2, 2)
    m = Metrics()
    out = pbsm_one_layer_join(OneLayerGrid.build([R2], cfg, "join_ready"),
                              OneLayerGrid.build([s], cfg, "join_ready"), m)
    assert out.tolist() == [[2, 7]] and m.duplicates_eliminated == 0
    m = Metrics()
    twin = Rect(8, 0.45, 0.55, 0.45, 0.55)
    out = pbsm_one_layer_join(OneLayerGrid.build([R2], cfg), OneLayerGrid.build([twin], cfg), m)
    assert out.tolist() == [[2, 8]]
    assert m.duplicates_eliminated == 3
    empty = pbsm_one_layer_join(OneLayerGrid.build([R2], cfg), OneLayerGrid.build([], cfg))
    assert empty.shape == (0, 2)


def test_pbsm_matches_oracle_and_counts_dups(backend, inputs):
    R, S = inputs
    cfg = GridConfig(7, 7)
    m = Metrics()
    out = pbsm_one_layer_join(OneLayerGrid.build(R, cfg, "join_ready"),
                              OneLayerGrid.build(S, cfg, "join_ready"), m, threads=2)
    want = all_pairs(R, S)
    assert pair_set(out) == want and len(out) == len(want)
    Rg, Sg = grids(R, S, 7)
    hits = 0
    for i, j in Rg.tile_keys():
        hits += len(all_pairs(RectArray.coerce(_flat(Rg, i, j)), RectArray.coerce(_flat(Sg, i, j))))
    assert m.duplicates_eliminated == hits - len(want)


def _flat(g, i, j):
    parts = g.tile(i, j).classes()
    out = parts[0]
    for p in parts[1:]:
        out = out.concat(p)
    return out


def test_rewindow_identity_tile():
    data = random_rects(300, seed=5, max_side=0.3)
    g = TwoLayerGrid.build(data, GridConfig(4, 4))
    cfg = GridConfig(4, 4)
    for i, j in g.tile_keys():
        got = rewindow_classes(cfg.tile_extent(i, j), g)
        for a, b in zip(got, g.tile(i, j).classes()):
            assert sorted(a.ids.tolist()) == sorted(b.ids.tolist())


def test_rewindow_draws_from_sixteen_fine_tiles(monkeypatch):
    fine = TwoLayerGrid.build(random_rects(100, seed=6), GridConfig(8, 8))
    seen = []
    orig = TileStore.slots_of_keys

    def spy(self, keys):
        seen.append(len(keys))
        return orig(self, keys)

    monkeypatch.setattr(TileStore, "slots_of_keys", spy)
    rewindow_classes(GridConfig(2, 2).tile_extent(1, 0), fine)
    # A draws from all 4x4 fine tiles, B one row, C one column, D one tile
    assert seen == [16, 4, 4, 1]


def test_rewindow_matches_reclassification():
    data = random_rects(1500, seed=8, max_side=0.3)
    fine = TwoLayerGrid.build(data, GridConfig(16, 16))
    coarse = GridConfig(4, 4)
    for i in range(4):
        for j in range(4):
            ext = coarse.tile_extent(i, j)
            want = [set() for _ in range(4)]
            for r in data.to_rects():
                if cell(r.xl, 4) <= i <= cell(r.xu, 4) and cell(r.yl, 4) <= j <= cell(r.yu, 4):
                    want[classify(r, ext)].add(r.id)
            got = rewindow_classes(ext, fine)
            assert [set(p.ids.tolist()) for p in got] == want


def test_rewindow_rejects_bad_nesting():
    fine = TwoLayerGrid.build([R2], GridConfig(12, 12))
    with pytest.raises(ValueError):
        rewindow_classes(GridConfig(4, 4).tile_extent(0, 0), fine)  # factor 3
    with pytest.raises(ValueError):
        rewindow_classes(GridConfig(5, 5).tile_extent(0, 0), fine)


@pytest.mark.parametrize("variant", ["materialized", "on_the_fly"])
@pytest.mark.parametrize("cn,fn", [(2, 8), (4, 4), (1, 16), (8, 2), (3, 12)])
def test_transform_join_matches_oracle(backend, inputs, variant, cn, fn):
    R, S = inputs
    Rg = TwoLayerGrid.build(R, GridConfig(cn, cn), "join_ready")
    Sg = TwoLayerGrid.build(S, GridConfig(fn, fn), "join_ready")
    out = transform_join(Rg, Sg, variant)
    assert len(out) == len(pair_set(out))
    assert pair_set(out) == all_pairs(R, S)


def test_transform_equal_grids_is_identical_join(backend, inputs):
    R, S = inputs
    Rg, Sg = grids(R, S, 4)
    assert pair_set(transform_join(Rg, Sg)) == pair_set(join_identical_grids(Rg, Sg))


def test_on_the_fly_builds_no_temporary_index(backend, inputs, monkeypatch):
    R, S = inputs
    Rg = TwoLayerGrid.build(R, GridConfig(2, 2), "join_ready")
    Sg = TwoLayerGrid.build(S, GridConfig(8, 8), "join_ready")
    want = pair_set(transform_join(Rg, Sg, "materialized"))

    def forbidden(*a, **k):
        raise AssertionError("temporary index allocated")

    monkeypatch.setattr(join_mod, "build_temp_coarse", forbidden)
    monkeypatch.setattr(TileStore, "from_entries", classmethod(forbidden))
    monkeypatch.setattr(TileStore, "build", classmethod(forbidden))
    assert pair_set(transform_join(Rg, Sg, "on_the_fly", threads=2)) == want
    with pytest.raises(AssertionError):
        transform_join(Rg, Sg, "materialized")


def test_transform_errors(inputs):
    R, S = inputs
    Rg = TwoLayerGrid.build(R, GridConfig(2, 2))
    with pytest.raises(ValueError):
        transform_join(Rg, TwoLayerGrid.build(S, GridConfig(6, 6)))
    with pytest.raises(ValueError):
        transform_join(Rg, TwoLayerGrid.build(S, GridConfig(4, 4)), "sideways")


def test_probe_examples(backend):
    S = [Rect(1, 0.1, 0.2, 0.1, 0.2), Rect(2, 0.15, 0.3, 0.0, 0.12), Rect(3, 0.25, 0.3, 0.25, 0.3),
         Rect(4, 0.8, 0.9, 0.8, 0.9)]
    Sg = TwoLayerGrid.build(S, GridConfig(4, 4))
    out = probe_join([Rect(50, 0.12, 0.28, 0.05, 0.27)], Sg)
    assert pair_set(out) == {(50, 1), (50, 2), (50, 3)}
    assert probe_join([], Sg).shape == (0, 2)


def test_probe_strategies_match_oracle(backend, inputs):
    R, S = inputs
    Sg = TwoLayerGrid.build(S, GridConfig(9, 9))
    a = probe_join(R, Sg, "for_loop")
    b = probe_join(R, Sg, "coarse_grid", k=10, threads=2)
    assert pair_set(a) == pair_set(b) == all_pairs(R, S)
    with pytest.raises(ValueError):
        probe_join(R, Sg, "coarse_grid", k=0)


def test_reduced_storage_r2():
    g = build_temp_reduced([R2], GridConfig(2, 2))
    assert g.entry(1, 1, D, 0) == ReducedRect(2, None, 0.6, None, 0.6)
    assert g.entry(0, 1, B, 0) == ReducedRect(2, 0.4, 0.6, None, 0.6)
    assert g.entry(0, 0, A, 0) == ReducedRect(2, 0.4, 0.6, 0.4, 0.6)
    assert g.stored_floats() == 4 + 3 + 4 + 2


def test_reduced_class_a_only_equals_full():
    data = [Rect(k, 0.1 * k + 0.01, 0.1 * k + 0.05, 0.01, 0.05) for k in range(9)]
    red = build_temp_reduced(data, GridConfig(10, 10))
    full = TwoLayerGrid.build(data, GridConfig(10, 10), "join_ready")
    for i, j in full.tile_keys():
        assert red.tile(i, j).a.to_rects() == full.tile(i, j).a.to_rects()


def test_reduced_rejects_opts_reading_dropped_fields(inputs):
    R, S = inputs
    with pytest.raises(ValueError):
        no_index_join(R, S, GridConfig(4, 4), "base")
    with pytest.raises(ValueError):
        no_index_join(R, S, GridConfig(4, 4), "sans_redundant")


@pytest.mark.parametrize("opts", ["sans_unnecessary", "all_opts"])
def test_no_index_join_matches_oracle(backend, inputs, opts):
    R, S = inputs
    out = no_index_join(R, S, GridConfig(6, 6), opts)
    assert pair_set(out) == all_pairs(R, S)


def test_reindex_paths(backend, inputs):
    R, S = inputs
    Rg = TwoLayerGrid.build(R, GridConfig(5, 5), "join_ready")
    Sg = TwoLayerGrid.build(S, GridConfig(7, 3), "join_ready")
    want = all_pairs(R, S)
    assert pair_set(reindex_join(Rg, Sg, "S")) == want
    assert pair_set(reindex_join(Rg, Sg, "R")) == want
    rep = reindex_cost_report(Rg, Sg)
    assert rep["suggested"] == "S" and rep["S"]["objects"] == len(S)


def test_nested_loop_oracle_agrees(inputs):
    R, S = inputs
    assert pair_set(nested_loop_join(R, S)) == all_pairs(R, S)
