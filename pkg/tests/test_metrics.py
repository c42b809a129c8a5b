import math

import numpy as np
import pytest

from helpers import UNIT, naive_rates, random_instance, unit_gains
from linksched.channel import ChannelParams
from linksched.metrics import (MeanRateTracker, link_rate, link_rates, log_utility,
                               reverse_sigmoid_weight, standalone_rates, sum_rate,
                               threshold_utility, update_ewma, weighted_sum_rate)


def test_inactive_link_has_zero_rate():
    _, G = random_instance(4, 0)
    x = np.array([1, 0, 1, 1.0])
    assert link_rate(1, x, G, ChannelParams()) == 0.0


def test_closed_form_single_link():
    G = unit_gains([[3.0]])
    assert link_rate(0, [1.0], G, UNIT) == pytest.approx(2.0, rel=1e-12)


def test_two_link_hand_sinr():
    G = unit_gains([[4.0, 1.0], [1.0, 4.0]])
    assert link_rate(0, [1, 1], G, UNIT) == pytest.approx(math.log2(3), rel=1e-12)


def test_sum_rate_cases():
    lay, G = random_instance(3, 5)
    P = ChannelParams()
    assert sum_rate(np.zeros(3), G, P) == 0
    x = np.array([0, 1, 0.0])
    assert weighted_sum_rate(x, G, P, np.ones(3)) == pytest.approx(standalone_rates(G, P)[1])
    xs = np.array([1, 1, 0.0])
    assert sum_rate(xs, G, P) == pytest.approx(naive_rates(xs, G, P).sum(), rel=1e-12)
    w = np.array([0.3, 2.0, 1.0])
    assert weighted_sum_rate(xs, G, P, w) == pytest.approx(w @ naive_rates(xs, G, P), rel=1e-12)


def test_batched_rates_match_single():
    _, G = random_instance(6, 9)
    P = ChannelParams()
    xs = np.random.default_rng(0).random((5, 6))
    batch = link_rates(xs, G, P)
    for k in range(5):
        np.testing.assert_allclose(batch[k], naive_rates(xs[k], G, P), rtol=1e-12)


def test_negative_weights_rejected():
    _, G = random_instance(3, 1)
    with pytest.raises(ValueError):
        weighted_sum_rate(np.ones(3), G, ChannelParams(), [1, -1, 1])


def test_ewma_cases():
    t = MeanRateTracker.start(np.array([2.0]), alpha=0.25)
    assert update_ewma(t, [4.0]).ewma[0] == pytest.approx(2.5)
    assert update_ewma(t, [2.0]).ewma[0] == 2.0
    for k in range(1, 30):
        t = update_ewma(t, [10.0])
        assert 10 - t.ewma[0] == pytest.approx(8 * 0.75 ** k)
    assert t.mean[0] == pytest.approx(10.0)
    with pytest.raises(ValueError):
        MeanRateTracker.start(np.ones(2), alpha=1.0)


def test_log_utility_cases():
    assert log_utility(np.full(5, 1e6)) == 0.0
    assert log_utility([math.e * 1e6, 1e6, 1e6]) == pytest.approx(1.0)
    r = np.random.default_rng(3).uniform(1e4, 5e7, 50)
    assert log_utility(r) == pytest.approx(sum(math.log(v / 1e6) for v in r), rel=1e-12)
    assert log_utility([1e6, 0.0]) == -math.inf


def test_reverse_sigmoid():
    assert reverse_sigmoid_weight(3.0, 3.0, 2.0) == pytest.approx(0.5)
    with np.errstate(over="raise"):
        w = reverse_sigmoid_weight(7.0, 5.0, 20.0)
        assert 0 <= w < 1e-16
        assert reverse_sigmoid_weight(-1e4, 0, 1.0) == 1.0
    r = np.array([0.5, 0.99, 1.01, 2.0])
    np.testing.assert_array_equal(np.round(reverse_sigmoid_weight(r, 1.0, 1e4)), [1, 1, 0, 0])


def test_threshold_utility_derivative_and_asymptote():
    theta, kappa, alpha, beta = 2.0, 3.0, 1.5, 0.2
    h = 1e-5
    for r in np.random.default_rng(1).uniform(0, 6, 20):
        num = (threshold_utility(r + h, theta, kappa, alpha, beta)
               - threshold_utility(r - h, theta, kappa, alpha, beta)) / (2 * h)
        assert num == pytest.approx(alpha * reverse_sigmoid_weight(r, theta, kappa), abs=1e-8)
    assert threshold_utility(1e3, theta, kappa, alpha, beta) == pytest.approx(alpha * theta + beta)
