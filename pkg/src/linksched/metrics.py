"""Rates, weighted sums, utilities and mean-rate trackers shared by all schedulers."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .channel import ChannelParams

log = logging.getLogger(__name__)

LOG_BASE = 2.0


def link_rates(x, gains: np.ndarray, params: ChannelParams) -> np.ndarray:
    """Per-link rates in bits/s. Works on a single schedule or a (..., N) batch."""
    x = np.asarray(x, dtype=float)
    p = params.tx_power_w
    direct = np.diagonal(gains, axis1=-2, axis2=-1)
    signal = direct * p * x
    cross = gains * (1.0 - np.eye(gains.shape[-1]))
    interference = np.einsum("...ij,...j->...i", cross, p * x)
    sinr = signal / (params.snr_gap * (interference + params.noise_power_w))
    return params.bandwidth_hz * np.log1p(sinr) / math.log(LOG_BASE)


def link_rate(i: int, x, gains: np.ndarray, params: ChannelParams) -> float:
    return float(link_rates(x, gains, params)[i])


def weighted_sum_rate(x, gains: np.ndarray, params: ChannelParams, w=None):
    rates = link_rates(x, gains, params)
    if w is None:
        return rates.sum(axis=-1)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    return (w * rates).sum(axis=-1)


def sum_rate(x, gains: np.ndarray, params: ChannelParams):
    return weighted_sum_rate(x, gains, params)


def standalone_rates(gains: np.ndarray, params: ChannelParams) -> np.ndarray:
    """Rate each link would get if it transmitted alone."""
    direct = np.diagonal(gains, axis1=-2, axis2=-1)
    snr = direct * params.tx_power_w / (params.snr_gap * params.noise_power_w)
    return params.bandwidth_hz * np.log1p(snr) / math.log(LOG_BASE)


@dataclass(frozen=True)
class MeanRateTracker:
    ewma: np.ndarray
    total: np.ndarray
    slots: int = 0
    alpha: float = 0.05

    @classmethod
    def start(cls, initial: np.ndarray, alpha: float = 0.05) -> "MeanRateTracker":
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        initial = np.asarray(initial, dtype=float)
        return cls(initial.copy(), np.zeros_like(initial), 0, alpha)

    @property
    def mean(self) -> np.ndarray:
        """Arithmetic mean of the observed instantaneous rates."""
        if self.slots == 0:
            return np.zeros_like(self.total)
        return self.total / self.slots


def update_ewma(tracker: MeanRateTracker, rates) -> MeanRateTracker:
    rates = np.asarray(rates, dtype=float)
    a = tracker.alpha
    return replace(tracker, ewma=(1 - a) * tracker.ewma + a * rates,
                   total=tracker.total + rates, slots=tracker.slots + 1)


def log_utility(mean_rates) -> float:
    """Sum of natural logs of mean rates in Mbps; -inf if any link starved."""
    r = np.asarray(mean_rates, dtype=float)
    if np.any(r <= 0):
        log.warning("%d link(s) with zero mean rate; log utility is -inf",
                    int(np.sum(r <= 0)))
        return -math.inf
    return float(np.sum(np.log(r / 1e6)))


def reverse_sigmoid_weight(mean_rate, theta: float, kappa: float):
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return expit(-kappa * (np.asarray(mean_rate, dtype=float) - theta))


def threshold_utility(mean_rate, theta: float, kappa: float, scale: float = 1.0,
                      offset: float = 0.0):
    """Utility whose derivative is ``scale`` times the reverse-sigmoid weight."""
    if kappa <= 0 or scale <= 0:
        raise ValueError("kappa and scale must be positive")
    r = np.asarray(mean_rate, dtype=float)
    return scale * r - (scale / kappa) * np.logaddexp(0.0, kappa * (r - theta)) + offset
