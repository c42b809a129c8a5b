"""Fractional-programming link scheduling (quadratic-transform coordinated ascent)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import ChannelParams
from .metrics import weighted_sum_rate


@dataclass
class FpResult:
    schedule: np.ndarray  # binary, (..., N)
    relaxed: np.ndarray  # [0, 1], (..., N)
    trace: np.ndarray  # (iterations, ...) weighted sum rate of the relaxed x


def quantize(x: np.ndarray, threshold: float = 0.5, rule: str = "threshold") -> np.ndarray:
    if rule == "threshold":
        return (x > threshold).astype(float)
    if rule == "half_max":
        peak = x.max(axis=-1, keepdims=True)
        return ((x >= peak / 2) & (peak > 0)).astype(float)
    raise ValueError(f"unknown quantization rule {rule!r}")


def fp_schedule(gains: np.ndarray, params: ChannelParams, w=None, max_iters: int = 100,
                threshold: float = 0.5, rule: str = "threshold",
                record_trace: bool = True) -> FpResult:
    """Coordinated ascent on the quadratic-transform surrogate, then quantize.

    ``gains`` may be a single (N, N) matrix or a (B, N, N) batch; ``w`` broadcasts
    against (..., N). The SNR gap is not applied inside the iteration.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    g = np.asarray(gains, dtype=float)
    n = g.shape[-1]
    w = np.ones(g.shape[:-1]) if w is None else np.broadcast_to(np.asarray(w, float), g.shape[:-1])
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    p = params.tx_power_w
    noise = params.noise_power_w
    direct = np.diagonal(g, axis1=-2, axis2=-1)
    cross = g * (1.0 - np.eye(n))
    gt = np.swapaxes(g, -1, -2)
    x = np.ones(g.shape[:-1])
    trace = []
    for _ in range(max_iters):
        px = p * x
        signal = direct * px
        interference = np.einsum("...ij,...j->...i", cross, px) + noise
        gamma = signal / interference
        total = interference + signal
        y = np.sqrt(w * (1 + gamma) * signal) / total
        num = y * np.sqrt(w * (1 + gamma) * direct * p)
        den = p * np.einsum("...ij,...j->...i", gt, y ** 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            root = np.where(den > 0, num / den, 0.0)
        x = np.minimum(root, 1.0) ** 2
        if record_trace:
            trace.append(weighted_sum_rate(x, g, params, w))
    return FpResult(quantize(x, threshold, rule), x, np.array(trace))


def fp_activation_fraction(schedules) -> float:
    """Mean fraction of active links over a set of binary schedules."""
    fracs = [np.mean(s) for s in schedules if len(s)]
    if not fracs:
        raise ValueError("empty evaluation set")
    return float(np.mean(fracs))


def write_trace_csv(path, trace: np.ndarray) -> None:
    with open(Path(path), "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["iteration", "weighted_sum_rate"])
        for k, v in enumerate(np.asarray(trace).reshape(len(trace), -1)[:, 0], start=1):
            out.writerow([k, f"{v:.9e}"])
