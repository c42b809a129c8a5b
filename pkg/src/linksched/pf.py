"""Proportional-fairness scheduling over time slots, including binary
reweighting of the PF weights for the sum-rate neural scheduler."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import all_active, max_weight, random_half, weighted_greedy
from .channel import ChannelParams
from .fplinq import fp_schedule
from .layout import Layout
from .metrics import (MeanRateTracker, link_rates, log_utility, standalone_rates,
                      update_ewma)
from .spatialnet import ModelWeights, feedback_schedule

SOLVERS = ("neural", "fp-weighted", "weighted-greedy", "max-weight", "random", "all-active")
DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class PfState:
    tracker: MeanRateTracker
    w: np.ndarray
    w_hat: np.ndarray
    slot: int = 0


def pf_weights(tracker: MeanRateTracker) -> np.ndarray:
    return 1.0 / tracker.ewma


def binarize_weights(w) -> np.ndarray:
    """Binary vector with the smallest angle to ``w``.

    The optimum is always a prefix of ``w`` sorted in descending order, so a
    linear scan over prefix lengths suffices.
    """
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be nonnegative and not all zero")
    order = np.argsort(-w, kind="stable")
    score = np.cumsum(w[order]) / np.sqrt(np.arange(1, len(w) + 1))
    k = int(np.argmax(score)) + 1
    out = np.zeros(len(w))
    out[order[:k]] = 1.0
    return out


def initial_state(gains: np.ndarray, params: ChannelParams,
                  alpha: float = DEFAULT_ALPHA) -> PfState:
    """Warm start: each link's EWMA begins at its standalone rate divided by N."""
    n = gains.shape[0]
    tracker = MeanRateTracker.start(standalone_rates(gains, params) / max(n, 1), alpha)
    w = pf_weights(tracker)
    return PfState(tracker, w, binarize_weights(w), 0)


def pf_step(layout: Layout, gains: np.ndarray, params: ChannelParams, state: PfState,
            solver: str, rng: np.random.Generator, model: ModelWeights | None = None,
            iters: int = 20, mix_prob: float = 0.5, fp_iters: int = 100):
    """Schedule one slot, then fold its instantaneous rates into the tracker."""
    w = pf_weights(state.tracker)
    w_hat = binarize_weights(w)
    n = gains.shape[0]
    if solver == "neural":
        if model is None:
            raise ValueError("neural solver needs model weights")
        x, _ = feedback_schedule(layout, model, iters, mix_prob, rng, subset=w_hat > 0)
    elif solver == "fp-weighted":
        x = fp_schedule(gains, params, w, fp_iters, record_trace=False).schedule
    elif solver == "weighted-greedy":
        x = weighted_greedy(gains, params, w)
    elif solver == "max-weight":
        x = max_weight(w)
    elif solver == "random":
        x = random_half(n, rng)
    elif solver == "all-active":
        x = all_active(n)
    else:
        raise ValueError(f"unknown solver {solver!r}; choose from {SOLVERS}")
    rates = link_rates(x, gains, params)
    tracker = update_ewma(state.tracker, rates)
    new = PfState(tracker, pf_weights(tracker), binarize_weights(pf_weights(tracker)),
                  state.slot + 1)
    return x, rates, new, w_hat


@dataclass
class PfResult:
    mean_rates: np.ndarray  # bits/s, arithmetic mean over slots
    utility: float
    schedules: np.ndarray  # (T, N)
    audit: list = field(default_factory=list)

    def cdf_rows(self):
        """(percentile, Mbps) pairs of the sorted mean rates."""
        r = np.sort(self.mean_rates) / 1e6
        n = len(r)
        return [(100.0 * (k + 1) / n, float(v)) for k, v in enumerate(r)]

    def write_cdf(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["percentile", "mean_rate_mbps"])
            for pct, v in self.cdf_rows():
                out.writerow([f"{pct:.4f}", f"{v:.6f}"])

    def write_audit(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["slot", "support_size", "scheduled", "utility_so_far"])
            for slot, support, sched, util in self.audit:
                out.writerow([slot, support, " ".join(map(str, sched)), f"{util:.6f}"])


def pf_simulate(layout: Layout, gains: np.ndarray, params: ChannelParams, solver: str,
                slots: int = 500, rng: np.random.Generator | None = None,
                model: ModelWeights | None = None, alpha: float = DEFAULT_ALPHA,
                audit: bool = False, **step_kw) -> PfResult:
    if slots < 1:
        raise ValueError("need at least one slot")
    rng = np.random.default_rng() if rng is None else rng
    state = initial_state(gains, params, alpha)
    scheds = []
    rows = []
    for t in range(slots):
        x, _, state, w_hat = pf_step(layout, gains, params, state, solver, rng, model, **step_kw)
        scheds.append(x)
        if audit:
            mean = state.tracker.mean
            util = log_utility(mean) if np.all(mean > 0) else -math.inf
            rows.append((t + 1, int(w_hat.sum()), np.flatnonzero(x).tolist(), util))
    mean = state.tracker.mean
    return PfResult(mean, log_utility(mean), np.array(scheds), rows)
