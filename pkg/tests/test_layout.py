import numpy as np
import pytest

from linksched.layout import (ConfigurationError, Layout, LayoutConfig, cell_index,
                              cell_indices, generate_layout, read_layout,
                              sample_training_bounds, write_layout)


def test_default_layout_distances_in_range():
    cfg = LayoutConfig(500, 5, 50, 2, 65, seed=7)
    lay = generate_layout(cfg)
    assert lay.n_links == 50
    d = lay.link_distances
    assert d.min() >= 2 - 1e-9 and d.max() <= 65 + 1e-9
    assert np.all((lay.tx >= 0) & (lay.tx <= 500)) and np.all((lay.rx >= 0) & (lay.rx <= 500))


def test_degenerate_annulus():
    lay = generate_layout(LayoutConfig(dmin=30, dmax=30, seed=1))
    np.testing.assert_allclose(lay.link_distances, 30.0, atol=1e-9)


def test_single_link_cells_match_floor_division():
    lay = generate_layout(LayoutConfig(n_links=1, seed=3))
    expect = np.floor(lay.tx / 5).astype(int) + 1
    np.testing.assert_array_equal(lay.tx_cells, np.clip(expect, 1, 100))


def test_seeded_generation_is_reproducible():
    cfg = LayoutConfig(seed=11)
    a, b = generate_layout(cfg), generate_layout(cfg)
    np.testing.assert_array_equal(a.tx, b.tx)
    np.testing.assert_array_equal(a.rx, b.rx)


@pytest.mark.parametrize("pos,cell", [((0, 0), (1, 1)), ((499.9, 499.9), (100, 100)),
                                      ((12.5, 7.0), (3, 2)), ((500, 500), (100, 100))])
def test_cell_index(pos, cell):
    assert cell_index(pos, 5, 500) == cell


def test_cell_index_rejects_outside():
    with pytest.raises(ValueError):
        cell_indices(np.array([[-1.0, 3.0]]), 5, 500)


@pytest.mark.parametrize("kw", [dict(region_edge=502, cell_edge=5), dict(dmin=70, dmax=65),
                                dict(dmin=0), dict(n_links=-1), dict(radius_law="x"),
                                dict(dmax=600)])
def test_bad_config(kw):
    with pytest.raises(ConfigurationError):
        LayoutConfig(**kw)


def test_infeasible_annulus_raises():
    # 49 m links cannot fit inside a 30 m square, however often we retry
    with pytest.raises(ConfigurationError):
        generate_layout(LayoutConfig(region_edge=30, cell_edge=5, n_links=1, dmin=45, dmax=49))


def test_training_bounds_statistics():
    rng = np.random.default_rng(0)
    draws = np.array([sample_training_bounds(rng) for _ in range(100_000)])
    assert np.all((2 <= draws[:, 0]) & (draws[:, 0] <= draws[:, 1]) & (draws[:, 1] <= 70))
    assert abs(draws[:, 0].mean() - 36) < 1


def test_cross_distances_orientation():
    cfg = LayoutConfig()
    lay = Layout([[10, 10], [100, 10]], [[10, 20], [100, 40]], cfg)
    D = lay.cross_distances()
    np.testing.assert_allclose(np.diag(D), [10, 30])
    assert D[0, 1] == pytest.approx(np.hypot(90, 10))  # tx 2 to rx 1


def test_layout_round_trip(tmp_path):
    lay = generate_layout(LayoutConfig(n_links=7, seed=2))
    write_layout(tmp_path / "l.txt", lay)
    back = read_layout(tmp_path / "l.txt")
    np.testing.assert_allclose(back.tx, lay.tx, atol=1e-6)
    np.testing.assert_allclose(back.rx, lay.rx, atol=1e-6)
    assert back.config.region_edge == 500 and back.config.seed == 2
