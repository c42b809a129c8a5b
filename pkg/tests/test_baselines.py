import numpy as np
import pytest

from helpers import random_instance, twin_links
from linksched.baselines import (GreedyLog, all_active, brute_force, greedy_sum_rate, max_weight,
                                 random_half, strongest_fraction, weighted_greedy)
from linksched.channel import ChannelParams, build_channel_matrix
from linksched.metrics import standalone_rates, sum_rate, weighted_sum_rate

P = ChannelParams()


def test_all_active():
    assert all_active(3).tolist() == [1, 1, 1]
    assert all_active(1).tolist() == [1]


def test_random_half():
    a = random_half(100_000, np.random.default_rng(0))
    assert abs(a.mean() - 0.5) < 0.005
    np.testing.assert_array_equal(random_half(20, np.random.default_rng(5)),
                                  random_half(20, np.random.default_rng(5)))
    assert random_half(0, np.random.default_rng(0)).size == 0


def test_strongest_fraction():
    G = np.diag([4.0, 1.0, 3.0, 2.0])
    assert strongest_fraction(G, 0.5).tolist() == [1, 0, 1, 0]
    assert strongest_fraction(G, 1.0).tolist() == [1, 1, 1, 1]
    with pytest.raises(ValueError):
        strongest_fraction(G, 0.0)


def test_greedy_single_and_twins():
    _, G = random_instance(1, 0)
    assert greedy_sum_rate(G, P).tolist() == [1]
    G2 = build_channel_matrix(twin_links(), P)
    assert greedy_sum_rate(G2, P).sum() == 1
    assert brute_force(G2, P)[0].sum() == 1


def test_greedy_beats_strongest_single_link():
    for seed in range(10):
        lay, G = random_instance(15, seed)
        x = greedy_sum_rate(G, P, lay.link_distances)
        assert sum_rate(x, G, P) >= standalone_rates(G, P).max() - 1e-6


def test_max_weight():
    assert max_weight([0.2, 0.9, 0.1]).tolist() == [0, 1, 0]
    assert max_weight([1, 1]).tolist() == [1, 0]
    assert max_weight([5]).tolist() == [1]


def test_weighted_greedy_dominant_link_first():
    lay, G = random_instance(6, 2)
    G = G.copy()
    G[3, 3] *= 1e4
    log = GreedyLog()
    weighted_greedy(G, P, np.ones(6), log)
    assert log.rows[0][:2] == (3, True)


def test_weighted_greedy_vs_max_weight():
    rng = np.random.default_rng(0)
    for seed in range(20):
        _, G = random_instance(int(rng.integers(2, 11)), seed)
        w = rng.random(G.shape[0])
        a = weighted_sum_rate(weighted_greedy(G, P, w), G, P, w)
        b = weighted_sum_rate(max_weight(w), G, P, w)
        assert a >= b - 1e-6


def test_greedy_log_audit(tmp_path):
    """Each acceptance strictly improved the objective at its decision step."""
    lay, G = random_instance(12, 4)
    w = np.random.default_rng(1).random(12)
    log = GreedyLog()
    x = weighted_greedy(G, P, w, log)
    prev = 0.0
    for link, accepted, obj in log.rows:
        if accepted:
            assert obj > prev
            prev = obj
    assert prev == pytest.approx(weighted_sum_rate(x, G, P, w), rel=1e-10)
    log.write_csv(tmp_path / "log.csv")
    assert (tmp_path / "log.csv").read_text().count("\n") == 13


def test_brute_force_exhaustive():
    lay, G = random_instance(8, 3)
    x, best = brute_force(G, P)
    assert best == pytest.approx(sum_rate(x, G, P))
    for cand in (greedy_sum_rate(G, P, lay.link_distances), all_active(8),
                 strongest_fraction(G, 0.5), random_half(8, np.random.default_rng(0))):
        assert best >= sum_rate(cand, G, P) - 1e-9
    _, G1 = random_instance(1, 0)
    assert brute_force(G1, P)[0].tolist() == [1]


def test_brute_force_tie_is_lexicographically_smallest():
    G = np.eye(2) * 1e-7
    G[0, 1] = G[1, 0] = 1e-3  # either link alone gives the same rate
    x, _ = brute_force(G, P)
    assert x.tolist() == [0, 1]


def test_brute_force_refuses_large():
    with pytest.raises(ValueError):
        brute_force(np.eye(21), P)
