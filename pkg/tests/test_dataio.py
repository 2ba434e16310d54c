import numpy as np
import pytest

from oracles import scan_window
from tlgrid import GenSpec, RectArray, gen_windows, generate, load_csv, normalize, write_csv
from tlgrid.dataio import DatasetStats, joint_bounds, read_csv, windows_array


def test_load_normalized_line(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("7,0.1,0.2,0.3,0.4\n")
    data, stats = load_csv(p)
    assert data.to_rects()[0].id == 7
    assert (data.xl[0], data.xu[0], data.yl[0], data.yu[0]) == (0.1, 0.3, 0.2, 0.4)
    assert stats.cardinality == 1


def test_load_scales_by_bbox(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("id,xl,yl,xu,yu\n1,0,0,50,25\n2,50,75,100,100\n")
    data, stats = load_csv(p)
    assert data.xu.tolist() == [0.5, 1.0] and data.yl.tolist() == [0.0, 0.75]
    assert stats.bbox == (0.0, 0.0, 100.0, 100.0)
    assert stats.avg_x_extent == pytest.approx(0.5)


@pytest.mark.parametrize("line,msg", [("7,0.3,0.2,0.1,0.4", "inverted"), ("7,0.1,0.2", "expected 5"),
                                      ("x,0.1,0.2,0.3,0.4", ":2:"), ("7,0.1,nan,0.3,0.4", "non-finite")])
def test_malformed_lines(tmp_path, line, msg):
    p = tmp_path / "bad.csv"
    p.write_text("1,0,0,1,1\n" + line + "\n")
    with pytest.raises(ValueError, match=msg):
        read_csv(p)


def test_header_flag(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("1,0,0,1,1\n2,0.1,0.1,0.2,0.2\n")
    assert len(read_csv(p)) == 2
    assert len(read_csv(p, header=True)) == 1


def test_csv_roundtrip(tmp_path):
    data = generate(GenSpec(500, 1e-6, seed=1))
    p = tmp_path / "g.csv"
    write_csv(p, data, header=True)
    back = read_csv(p)
    for a, b in zip(data.columns(), back.columns()):
        assert np.array_equal(a, b)


def test_normalize_idempotent_and_joint_bounds():
    raw = RectArray(np.arange(3, dtype=np.uint64), [-5, 0, 10], [0, 5, 15], [2, 3, 4], [3, 4, 8])
    once = normalize(raw)
    twice = normalize(once)
    for a, b in zip(once.columns(), twice.columns()):
        assert np.array_equal(a, b)
    assert once.xl.min() == 0.0 and once.xu.max() == 1.0
    other = RectArray(np.arange(1, dtype=np.uint64), [20], [30], [0], [1])
    box = joint_bounds(raw, other)
    assert box == (-5, 0, 30, 8)
    assert normalize(other, box).xu[0] == 1.0


def test_generate_fixed_area_unit_ratio():
    data = generate(GenSpec(100, 1e-10, ratio_range=(1.0, 1.0), seed=2))
    inside = (data.xl > 0) & (data.xu < 1) & (data.yl > 0) & (data.yu < 1)
    assert np.allclose((data.xu - data.xl)[inside], 1e-5, rtol=1e-6)
    assert np.allclose((data.yu - data.yl)[inside], 1e-5, rtol=1e-6)


def test_generate_points_and_determinism():
    pts = generate(GenSpec(1000, 0.0, seed=3))
    assert np.all(pts.xl == pts.xu) and np.all(pts.yl == pts.yu)
    a = generate(GenSpec(2000, 1e-8, "zipf", seed=9))
    b = generate(GenSpec(2000, 1e-8, "zipf", seed=9))
    for x, y in zip(a.columns(), b.columns()):
        assert x.tobytes() == y.tobytes()


def test_genspec_validation():
    with pytest.raises(ValueError):
        GenSpec(10, -1.0)
    with pytest.raises(ValueError):
        GenSpec(10, distribution="normal")
    with pytest.raises(ValueError):
        GenSpec(10, ratio_range=(0.0, 2.0))


def test_zipf_is_skewed():
    n = 50_000

    def densest_share(data):
        cx = np.minimum(((data.xl + data.xu) / 2 * 100).astype(int), 99)
        cy = np.minimum(((data.yl + data.yu) / 2 * 100).astype(int), 99)
        counts = np.sort(np.bincount(cx * 100 + cy, minlength=10000))[::-1]
        return counts[:100].sum()

    assert densest_share(generate(GenSpec(n, 1e-8, "zipf", seed=4))) > \
        densest_share(generate(GenSpec(n, 1e-8, "uniform", seed=4)))


@pytest.mark.parametrize("rel,side", [(1.0, 0.1), (0.01, 0.01)])
def test_window_side(rel, side):
    data = generate(GenSpec(1000, 1e-8, seed=5))
    w = windows_array(gen_windows(data, 200, rel, seed=1))
    inside = (w[:, 0] > 0) & (w[:, 1] < 1)
    assert np.allclose((w[:, 1] - w[:, 0])[inside], side)


def test_windows_always_hit():
    data = generate(GenSpec(3000, 1e-10, "zipf", seed=6))
    for w in gen_windows(data, 100, 0.01, seed=2):
        assert scan_window(data, (w.xl, w.xu, w.yl, w.yu))


def test_windows_reject_bad_input():
    with pytest.raises(ValueError):
        gen_windows(RectArray.empty(), 5)
    with pytest.raises(ValueError):
        gen_windows(generate(GenSpec(5, seed=0)), 5, 0.0)


def test_stats_of():
    data = RectArray(np.arange(2, dtype=np.uint64), [0, 0.5], [0.2, 0.9], [0, 0], [0.1, 0.3])
    s = DatasetStats.of(data)
    assert s.avg_x_extent == pytest.approx(0.3) and s.avg_y_extent == pytest.approx(0.2)
