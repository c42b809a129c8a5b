"""Reference schedulers: trivial policies, greedy heuristics and exhaustive search."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .channel import ChannelParams
from .metrics import standalone_rates, weighted_sum_rate

ACCEPT_TOL = 1e-9  # bits/s
BRUTE_FORCE_MAX_N = 20


class BaselineKind(Enum):
    ALL_ACTIVE = "all-active"
    RANDOM_HALF = "random"
    STRONGEST_FRACTION = "strongest"
    GREEDY_SUM_RATE = "greedy"
    MAX_WEIGHT = "max-weight"
    WEIGHTED_GREEDY = "weighted-greedy"
    BRUTE_FORCE = "brute-force"


@dataclass
class GreedyLog:
    """One row per candidate: (link, accepted, objective after the decision)."""
    rows: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["step", "link", "accepted", "objective"])
            for k, (link, acc, obj) in enumerate(self.rows):
                out.writerow([k, link, int(acc), f"{obj:.9e}"])


def all_active(n: int) -> np.ndarray:
    return np.ones(n)


def random_half(n: int, rng: np.random.Generator) -> np.ndarray:
    return (rng.random(n) < 0.5).astype(float)


def strongest_fraction(gains: np.ndarray, fraction: float) -> np.ndarray:
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    direct = np.diagonal(gains)
    n = len(direct)
    k = min(n, math.ceil(fraction * n - 1e-12))
    order = np.argsort(-direct, kind="stable")
    x = np.zeros(n)
    x[order[:k]] = 1.0
    return x


def _greedy(gains, params, w, order, log: GreedyLog | None):
    n = gains.shape[0]
    p = params.tx_power_w
    noise = params.noise_power_w
    gap = params.snr_gap
    scale = params.bandwidth_hz / math.log(2)
    direct = np.diagonal(gains) * p
    x = np.zeros(n)
    interf = np.zeros(n)  # cross interference seen by every receiver
    best = 0.0
    for k in order:
        trial_interf = interf + gains[:, k] * p
        trial_interf[k] = interf[k]
        trial = x.copy()
        trial[k] = 1.0
        rates = scale * np.log1p(direct * trial / (gap * (trial_interf + noise)))
        obj = float(np.dot(w, rates))
        accepted = obj > best + ACCEPT_TOL
        if accepted:
            x, interf, best = trial, trial_interf, obj
        if log is not None:
            log.rows.append((int(k), bool(accepted), best))
    return x


def greedy_sum_rate(gains: np.ndarray, params: ChannelParams, distances=None,
                    log: GreedyLog | None = None) -> np.ndarray:
    """Visit links shortest-first, keep each one only if the sum rate strictly grows.

    Without ``distances`` the visiting order falls back to descending direct gain,
    which coincides with distance order for a fading-free channel.
    """
    n = gains.shape[0]
    key = np.asarray(distances, float) if distances is not None else -np.diagonal(gains)
    order = np.argsort(key, kind="stable")
    return _greedy(gains, params, np.ones(n), order, log)


def max_weight(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    x = np.zeros(len(w))
    if len(w) and np.max(w) > 0:
        x[int(np.argmax(w))] = 1.0
    return x


def weighted_greedy(gains: np.ndarray, params: ChannelParams, w,
                    log: GreedyLog | None = None) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    order = np.argsort(-(w * standalone_rates(gains, params)), kind="stable")
    return _greedy(gains, params, w, order, log)


def brute_force(gains: np.ndarray, params: ChannelParams, w=None,
                max_n: int = BRUTE_FORCE_MAX_N, chunk: int = 1 << 14):
    """Exact maximizer over all 2^N schedules; ties go to the lexicographically smallest."""
    n = gains.shape[0]
    if n > max_n:
        raise ValueError(f"brute force refused for N={n} > {max_n}")
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    shifts = np.arange(n - 1, -1, -1)
    best_obj, best_x = -np.inf, np.zeros(n)
    for start in range(0, 1 << n, chunk):
        codes = np.arange(start, min(start + chunk, 1 << n))
        xs = ((codes[:, None] >> shifts) & 1).astype(float)
        objs = weighted_sum_rate(xs, gains, params, w)
        k = int(np.argmax(objs))
        if objs[k] > best_obj:
            best_obj, best_x = float(objs[k]), xs[k]
    return best_x, best_obj
