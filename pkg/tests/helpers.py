"""Shared builders for the test suite."""

import numpy as np

from linksched.channel import ChannelParams, build_channel_matrix
from linksched.layout import Layout, LayoutConfig, generate_layout

UNIT = ChannelParams(bandwidth_hz=1.0, snr_gap_db=0.0)


def unit_gains(snr_matrix, params=UNIT):
    """Gain matrix whose entries are ``snr_matrix`` times sigma^2 / p."""
    return np.asarray(snr_matrix, float) * params.noise_power_w / params.tx_power_w


def random_instance(n, seed, params=ChannelParams(), **kw):
    cfg = LayoutConfig(n_links=n, seed=seed, **kw)
    lay = generate_layout(cfg, np.random.default_rng(seed))
    return lay, build_channel_matrix(lay, params)


def twin_links(offset=1.0):
    """Two nearly co-located links pointing the same way: heavy mutual interference."""
    cfg = LayoutConfig()
    return Layout([[200, 200], [200 + offset, 200]], [[230, 200], [230 + offset, 200]], cfg)


def naive_rates(x, G, params):
    p, s2, gap, W = params.tx_power_w, params.noise_power_w, params.snr_gap, params.bandwidth_hz
    n = len(x)
    out = []
    for i in range(n):
        interf = sum(G[i, j] * p * x[j] for j in range(n) if j != i)
        out.append(W * np.log2(1 + G[i, i] * p * x[i] / (gap * (interf + s2))))
    return np.array(out)


CRITERIA_LINES: list = []


def report(number, ok, detail):
    """Record and print one acceptance line, then fail the test if the gate failed."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    CRITERIA_LINES.append(line)
    print(line)
    assert ok, line
