import math

import numpy as np
import pytest

from linksched.channel import (ChannelParams, build_channel_matrix, gains_from_distances,
                               interference_range, noise_power_w, path_loss_db,
                               read_channel_csv, write_channel_csv)
from linksched.layout import Layout, LayoutConfig, generate_layout

P = ChannelParams()


def test_breakpoint_constants():
    assert P.wavelength == pytest.approx(0.124913524, rel=1e-8)
    assert P.breakpoint_m == pytest.approx(72.0499, abs=1e-3)


def test_slopes_around_breakpoint():
    rbp = P.breakpoint_m
    assert path_loss_db(rbp, P) - path_loss_db(rbp / 10, P) == pytest.approx(20.0, abs=1e-9)
    assert path_loss_db(10 * rbp, P) - path_loss_db(rbp, P) == pytest.approx(40.0, abs=1e-9)


def test_path_loss_rejects_nonpositive():
    with pytest.raises(ValueError):
        path_loss_db(0.0, P)
    # sub-meter distances are clamped to the 1 m floor
    assert path_loss_db(0.3, P) == path_loss_db(1.0, P)


def test_single_link_gain_by_hand():
    lay = Layout([[100, 100]], [[130, 140]], LayoutConfig())
    lam = 299792458 / 2.4e9
    rbp = 4 * 1.5 ** 2 / lam
    lbp = abs(20 * math.log10(lam ** 2 / (8 * math.pi * 1.5 ** 2)))
    loss = lbp + 6 + 20 * math.log10(50 / rbp)
    G = build_channel_matrix(lay, P)
    assert G.shape == (1, 1)
    assert G[0, 0] == pytest.approx(10 ** ((2.5 - loss) / 10), rel=1e-12)
    assert G[0, 0] == pytest.approx(7.0619e-8, rel=1e-4)


def test_antenna_gain_only_on_direct_links():
    d = np.array([[20.0, 40.0], [40.0, 20.0]])
    G = gains_from_distances(d, P)
    assert G[0, 0] / G[0, 1] == pytest.approx(10 ** ((path_loss_db(40, P) - path_loss_db(20, P) + 2.5) / 10))


def test_rayleigh_unit_mean():
    params = ChannelParams(fading="rayleigh")
    d = np.full((100_000, 2, 2), 30.0)
    ratio = gains_from_distances(d, params, np.random.default_rng(0)) / gains_from_distances(d, P)
    assert abs(ratio.mean() - 1) < 0.01


def test_mirror_symmetry():
    cfg = LayoutConfig()
    a = Layout([[100, 120], [400, 380]], [[110, 150], [390, 350]], cfg)
    G = build_channel_matrix(a, P)
    assert G[0, 0] == pytest.approx(G[1, 1], rel=1e-12)


def test_noise_power():
    assert 10 * math.log10(P.noise_power_w) + 30 == pytest.approx(-102.0103, abs=1e-4)
    assert P.noise_power_w == pytest.approx(6.2946e-14, rel=1e-4)
    one = ChannelParams(bandwidth_hz=1.0)
    assert noise_power_w(one) == pytest.approx(10 ** -19.9, rel=1e-12)
    two = ChannelParams(bandwidth_hz=1e7)
    assert 10 * math.log10(noise_power_w(two) / P.noise_power_w) == pytest.approx(3.0103, abs=1e-4)


def test_interference_range_sane():
    for d in (2.0, 30.0, 65.0):
        r = interference_range(P, d)
        assert 0 < r
        assert path_loss_db(r, P) == pytest.approx(path_loss_db(d, P) + 20 - 2.5, abs=1e-9)
    assert 100 <= interference_range(P, 30.0) <= 300


@pytest.mark.parametrize("kw", [dict(fading="x"), dict(bandwidth_hz=0), dict(snr_gap_db=-1),
                                dict(tx_power_dbm=float("nan"))])
def test_bad_params(kw):
    with pytest.raises(ValueError):
        ChannelParams(**kw)


def test_fading_needs_rng():
    with pytest.raises(ValueError):
        gains_from_distances(np.ones((2, 2)) * 10, ChannelParams(fading="rayleigh"))


def test_channel_csv_round_trip(tmp_path):
    G = build_channel_matrix(generate_layout(LayoutConfig(n_links=6, seed=4)), P)
    write_channel_csv(tmp_path / "g.csv", G)
    np.testing.assert_allclose(read_channel_csv(tmp_path / "g.csv"), G, rtol=1e-8)
