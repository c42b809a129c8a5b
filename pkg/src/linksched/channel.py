"""Distance-based channel gains: dual-slope LOS path loss, antenna gains and
optional Rayleigh fading."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .layout import Layout

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ChannelParams:
    carrier_hz: float = 2.4e9
    bandwidth_hz: float = 5e6
    antenna_height: float = 1.5
    antenna_gain_dbi: float = 2.5
    tx_power_dbm: float = 40.0
    noise_psd_dbm_hz: float = -169.0
    snr_gap_db: float = 6.0
    fading: str = "none"  # "none" | "rayleigh"
    # how many ends contribute antenna gain (1 or 2), and whether cross links get it
    antenna_gain_ends: int = 1
    antenna_gain_direct_only: bool = True
    min_distance: float = 1.0

    def __post_init__(self):
        vals = (self.carrier_hz, self.bandwidth_hz, self.antenna_height, self.antenna_gain_dbi,
                self.tx_power_dbm, self.noise_psd_dbm_hz, self.snr_gap_db)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("channel parameters must be finite")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth must be positive")
        if self.snr_gap_db < 0:
            raise ValueError("SNR gap must be >= 0 dB")
        if self.fading not in ("none", "rayleigh"):
            raise ValueError(f"unknown fading model {self.fading!r}")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def breakpoint_m(self) -> float:
        return 4 * self.antenna_height ** 2 / self.wavelength

    @property
    def breakpoint_loss_db(self) -> float:
        lam = self.wavelength
        return abs(20 * math.log10(lam ** 2 / (8 * math.pi * self.antenna_height ** 2)))

    @property
    def tx_power_w(self) -> float:
        return 10 ** (self.tx_power_dbm / 10 - 3)

    @property
    def noise_power_w(self) -> float:
        return noise_power_w(self)

    @property
    def snr_gap(self) -> float:
        return 10 ** (self.snr_gap_db / 10)


def noise_power_w(params: ChannelParams) -> float:
    return 10 ** ((params.noise_psd_dbm_hz + 10 * math.log10(params.bandwidth_hz)) / 10 - 3)


def path_loss_db(d, params: ChannelParams):
    """Path loss in dB: 20 dB/decade up to the breakpoint, 40 dB/decade beyond."""
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("path loss needs strictly positive distances")
    d = np.maximum(d, params.min_distance)
    rbp = params.breakpoint_m
    ratio = 20 * np.log10(d / rbp)
    loss = params.breakpoint_loss_db + 6 + ratio + np.where(d > rbp, ratio, 0.0)
    return loss if loss.ndim else float(loss)


def gains_from_distances(dist: np.ndarray, params: ChannelParams,
                         rng: np.random.Generator | None = None) -> np.ndarray:
    """Linear power gains for a (..., N, N) receiver-by-transmitter distance array."""
    dist = np.asarray(dist, dtype=float)
    if np.any(dist <= 0):
        raise ValueError("coincident transmitter and receiver")
    n = dist.shape[-1]
    gain_db = params.antenna_gain_ends * params.antenna_gain_dbi
    if params.antenna_gain_direct_only:
        antenna = np.eye(n) * gain_db
    else:
        antenna = np.full((n, n), gain_db)
    g = 10 ** ((antenna - path_loss_db(dist, params)) / 10)
    if params.fading == "rayleigh":
        if rng is None:
            raise ValueError("rayleigh fading needs an rng")
        g = g * rng.exponential(1.0, g.shape)
    return g


def build_channel_matrix(layout: Layout, params: ChannelParams,
                         rng: np.random.Generator | None = None) -> np.ndarray:
    """G[i, j] = power gain from transmitter j to receiver i."""
    return gains_from_distances(layout.cross_distances(), params, rng)


def interference_range(params: ChannelParams, link_distance: float, sir_db: float = 20.0) -> float:
    """Distance at which one interferer's received power is ``sir_db`` below the
    direct signal of a link of length ``link_distance``."""
    gain_db = params.antenna_gain_ends * params.antenna_gain_dbi
    direct_extra = gain_db if params.antenna_gain_direct_only else 0.0
    target = path_loss_db(link_distance, params) + sir_db - direct_extra
    rbp = params.breakpoint_m
    at_bp = params.breakpoint_loss_db + 6
    if target <= at_bp:
        return rbp * 10 ** ((target - at_bp) / 20)
    return rbp * 10 ** ((target - at_bp) / 40)


def write_channel_csv(path, gains: np.ndarray) -> None:
    np.savetxt(Path(path), np.asarray(gains), delimiter=",", fmt="%.9e")


def read_channel_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(Path(path), delimiter=","))
