"""Unsupervised training of the spatial scheduler.

The objective is the relaxed sum rate at the last feedback iteration. Gradients
are accumulated by hand in reverse through every unrolled iteration; the
filter and the fully connected weights are shared by all iterations, so their
gradients are sums of per-iteration contributions. Symmetry-breaking masks
are drawn in the forward pass and held constant when differentiating.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel import ChannelParams, build_channel_matrix
from .fplinq import fp_schedule
from .layout import Layout, LayoutConfig, generate_layout, sample_training_bounds
from .metrics import sum_rate
from .spatialnet import (ModelWeights, LinkGeometry, draw_masks, link_geometry, run_feedback,
                         schedule_batch)

log = logging.getLogger(__name__)

FILTER_FLOOR = 1e-12


@dataclass
class TrainConfig:
    batch_size: int = 64
    total_layouts: int = 96_000
    unroll_min: int = 3
    unroll_max: int = 20
    learning_rate: float = 1e-3
    final_learning_rate: float | None = 1e-5  # linear decay target; None keeps it fixed
    optimizer: str = "adam"
    seed: int = 0
    checkpoint_every: int = 150  # batches
    eval_layouts: int = 100
    n_links: int = 50
    region_edge: float = 500.0
    cell_edge: float = 5.0
    filter_size: int = 63
    hidden: tuple = (30, 30)
    mix_prob: float = 0.5
    # "log": Adam moves log(filter), keeping entries positive across decades
    filter_param: str = "log"
    filter_lr_multiplier: float = 30.0
    out_dir: str | None = None

    def __post_init__(self):
        if not 1 <= self.unroll_min <= self.unroll_max <= 50:
            raise ValueError("unroll range must lie within [1, 50]")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.filter_param not in ("log", "linear"):
            raise ValueError(f"unknown filter parametrisation {self.filter_param!r}")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        self.hidden = tuple(self.hidden)

    @property
    def n_batches(self) -> int:
        return math.ceil(self.total_layouts / self.batch_size)

    def lr_at(self, batch: int) -> float:
        if self.final_learning_rate is None or self.n_batches <= 1:
            return self.learning_rate
        frac = batch / (self.n_batches - 1)
        return self.learning_rate + frac * (self.final_learning_rate - self.learning_rate)


def sum_rate_gradient(x: np.ndarray, gains: np.ndarray, params: ChannelParams) -> np.ndarray:
    """d(sum_i R_i)/dx for relaxed x, batched over the leading axis."""
    p = params.tx_power_w
    gap = params.snr_gap
    direct = np.diagonal(gains, axis1=-2, axis2=-1)
    cross = gains * (1.0 - np.eye(gains.shape[-1]))
    signal = direct * p * x
    denom = gap * (np.einsum("...ij,...j->...i", cross, p * x) + params.noise_power_w)
    q = 1.0 / (denom + signal) - 1.0 / denom
    c = params.bandwidth_hz / math.log(2)
    return c * p * (direct / (denom + signal) + gap * np.einsum("...ij,...i->...j", cross, q))


def _check(stage: str, *arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError(f"non-finite gradient in {stage}")


def backward(weights: ModelWeights, geom: LinkGeometry, tape: dict, gx: np.ndarray):
    """Reverse pass over a recorded unroll; returns (parameter grads, grad wrt x0)."""
    n_layers = len(weights.weights)
    g_w = [np.zeros_like(w) for w in weights.weights]
    g_b = [np.zeros_like(b) for b in weights.biases]
    a_tx, a_rx, dcs, imax, imin = tape["static"]
    g_atx = np.zeros_like(a_tx)
    g_arx = np.zeros_like(a_rx)
    g_dcs = np.zeros_like(dcs)
    rows = np.arange(len(dcs))
    act = geom.active
    for k, st in reversed(list(enumerate(tape["steps"]))):
        mf = st["mask"]
        gx = gx * act
        gy = gx * mf
        g_prev = gx * (1 - mf)
        y = st["y"]
        gz = gy * y * (1 - y)
        g_w[-1] += np.einsum("bnh,bn->h", st["h_last"], gz)[:, None]
        g_b[-1] += gz.sum()
        gh = gz[..., None] * weights.weights[-1][:, 0]
        for layer in range(n_layers - 2, -1, -1):
            gpre = gh * (st["pre"][layer] > 0)
            inp = st["feats"] if layer == 0 else np.maximum(st["pre"][layer - 1], 0.0)
            g_w[layer] += np.einsum("bni,bnj->ij", inp, gpre)
            g_b[layer] += gpre.sum(axis=(0, 1))
            gh = gpre @ weights.weights[layer].T
        _check(f"fully connected stage, iteration {k}", gh)
        ga, gr = gh[..., 0], gh[..., 1]
        x_prev = st["x_prev"]
        g_atx += ga[:, :, None] * x_prev[:, None, :]
        g_arx += gr[:, :, None] * x_prev[:, None, :]
        g_dcs += gh[..., 2]
        g_dcs[rows, imax] += gh[..., 3].sum(axis=1)
        g_dcs[rows, imin] += gh[..., 4].sum(axis=1)
        g_prev = (g_prev + gh[..., 5]
                  + np.einsum("bij,bi->bj", a_tx, ga) + np.einsum("bij,bi->bj", a_rx, gr))
        _check(f"feedback connection, iteration {k}", g_prev)
        gx = g_prev
    size = geom.sentinel + 1
    g_flat = (np.bincount(geom.tx_idx.ravel(), g_atx.ravel(), size)
              + np.bincount(geom.rx_idx.ravel(), g_arx.ravel(), size)
              + np.bincount(geom.dcs_idx.ravel(), g_dcs.ravel(), size))
    g_filter = g_flat[:-1].reshape(weights.filter.shape)
    _check("convolution filter", g_filter)
    grads = [g_filter]
    for w, b in zip(g_w, g_b):
        grads += [w, b]
    return grads, gx * act


def _as_batch(layouts: Layout | Sequence[Layout]) -> list:
    return [layouts] if isinstance(layouts, Layout) else list(layouts)


def _gains_for(layouts, gains, params):
    if gains is None:
        return np.stack([build_channel_matrix(lay, params) for lay in layouts])
    gains = np.asarray(gains, dtype=float)
    return gains[None] if gains.ndim == 2 else gains


def loss_and_gradients(layouts, weights: ModelWeights, unroll: int,
                       rng: np.random.Generator | None = None, gains=None,
                       params: ChannelParams = ChannelParams(), mix_prob: float = 0.5,
                       masks: np.ndarray | None = None, scale: float = 1.0):
    """Loss = -scale * (total relaxed sum rate over the batch), and its gradients
    aligned with ``weights.arrays()``."""
    layouts = _as_batch(layouts)
    g = _gains_for(layouts, gains, params)
    geom = link_geometry(layouts, weights.filter_size)
    if masks is None:
        rng = np.random.default_rng() if rng is None else rng
        masks = draw_masks(rng, unroll, geom.active.shape, mix_prob)
    tape: dict = {}
    x = run_feedback(weights, geom, masks, tape=tape)
    loss = -scale * float(sum_rate(x, g, params).sum())
    gx = -scale * sum_rate_gradient(x, g, params)
    _check("rate objective", gx)
    grads, _ = backward(weights, geom, tape, gx)
    return loss, grads


def gradients(layouts, weights: ModelWeights, unroll: int, rng=None, **kw):
    return loss_and_gradients(layouts, weights, unroll, rng, **kw)[1]


def relaxed_loss(layout, weights: ModelWeights, unroll: int,
                 rng: np.random.Generator | None = None, gains=None,
                 params: ChannelParams = ChannelParams(), mix_prob: float = 0.5,
                 masks: np.ndarray | None = None, scale: float = 1.0) -> float:
    """Negative relaxed sum rate (bits/s, times ``scale``) after ``unroll`` iterations."""
    layouts = _as_batch(layout)
    g = _gains_for(layouts, gains, params)
    geom = link_geometry(layouts, weights.filter_size)
    if masks is None:
        rng = np.random.default_rng() if rng is None else rng
        masks = draw_masks(rng, unroll, geom.active.shape, mix_prob)
    x = run_feedback(weights, geom, masks)
    return -scale * float(sum_rate(x, g, params).sum())


def finite_difference_check(weights: ModelWeights, layout, step: float = 1e-4,
                            n_params: int = 50, unroll: int = 3,
                            rng: np.random.Generator | None = None,
                            params: ChannelParams = ChannelParams(),
                            mix_prob: float = 0.5, floor: float = 1e-8) -> float:
    """Max relative error between analytic and central-difference gradients.

    Half the probes are filter entries the layout actually reads, half are
    fully connected parameters. The objective is normalised to bits/s/Hz per
    link so ``floor`` is an absolute scale for vanishing gradients.
    """
    if not 1e-6 <= step <= 1e-2:
        raise ValueError("step must lie in [1e-6, 1e-2]")
    rng = np.random.default_rng(0) if rng is None else rng
    layouts = _as_batch(layout)
    g = _gains_for(layouts, None, params)
    geom = link_geometry(layouts, weights.filter_size)
    masks = draw_masks(rng, unroll, geom.active.shape, mix_prob)
    scale = 1.0 / (params.bandwidth_hz * geom.active.size)
    kw = dict(gains=g, params=params, masks=masks, scale=scale)
    _, grads = loss_and_gradients(layouts, weights, unroll, **kw)

    used = np.unique(np.concatenate([geom.tx_idx.ravel(), geom.rx_idx.ravel(),
                                     geom.dcs_idx.ravel()]))
    used = used[used < geom.sentinel]
    n_filter = min(n_params // 2, used.size)
    probes = [(0, int(k)) for k in rng.choice(used, n_filter, replace=False)]
    fc_sizes = [a.size for a in weights.arrays()[1:]]
    flat_ids = rng.choice(sum(fc_sizes), n_params - n_filter, replace=False)
    offsets = np.cumsum([0] + fc_sizes)
    for fid in flat_ids:
        arr = int(np.searchsorted(offsets, fid, side="right"))
        probes.append((arr, int(fid - offsets[arr - 1])))

    worst = 0.0
    base = weights.arrays()
    for arr, idx in probes:
        vals = []
        for sign in (1, -1):
            pert = [a.copy() for a in base]
            pert[arr].flat[idx] += sign * step
            vals.append(relaxed_loss(layouts, weights.with_arrays(pert), unroll, **kw))
        numeric = (vals[0] - vals[1]) / (2 * step)
        analytic = grads[arr].flat[idx]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        worst = max(worst, err)
    return worst


class Adam:
    def __init__(self, shapes, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, arrays, grads, lr: float, multipliers=None):
        self.t += 1
        if multipliers is None:
            multipliers = [1.0] * len(arrays)
        b1, b2 = self.beta1, self.beta2
        out = []
        for k, (a, g) in enumerate(zip(arrays, grads)):
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1 ** self.t)
            vhat = self.v[k] / (1 - b2 ** self.t)
            out.append(a - lr * multipliers[k] * mhat / (np.sqrt(vhat) + self.eps))
        return out

    def save(self, path) -> None:
        np.savez(path, t=self.t, **{f"m{k}": m for k, m in enumerate(self.m)},
                 **{f"v{k}": v for k, v in enumerate(self.v)})

    @classmethod
    def load(cls, path, shapes) -> "Adam":
        opt = cls(shapes)
        with np.load(path) as data:
            opt.t = int(data["t"])
            opt.m = [data[f"m{k}"] for k in range(len(shapes))]
            opt.v = [data[f"v{k}"] for k in range(len(shapes))]
        return opt


def training_batch(cfg: TrainConfig, batch: int, params: ChannelParams):
    """Layouts, fading-free gains and unroll count for one batch, seeded by index."""
    rng = np.random.default_rng([cfg.seed, batch])
    layouts = []
    for _ in range(cfg.batch_size):
        dmin, dmax = sample_training_bounds(rng)
        lc = LayoutConfig(cfg.region_edge, cfg.cell_edge, cfg.n_links, dmin, dmax)
        layouts.append(generate_layout(lc, rng))
    gains = np.stack([build_channel_matrix(lay, params) for lay in layouts])
    unroll = int(rng.integers(cfg.unroll_min, cfg.unroll_max + 1))
    return layouts, gains, unroll, rng


def evaluation_set(n: int, seed: int, cfg: LayoutConfig, params: ChannelParams):
    rng = np.random.default_rng(seed)
    layouts = [generate_layout(cfg, rng) for _ in range(n)]
    gains = np.stack([build_channel_matrix(lay, params) for lay in layouts])
    return layouts, gains


def ratio_vs_fp(weights: ModelWeights, layouts, gains, params: ChannelParams,
                fp_rates=None, seed: int = 0, iters: int = 20) -> float:
    if fp_rates is None:
        fp_rates = sum_rate(fp_schedule(gains, params, record_trace=False).schedule, gains, params)
    sched = schedule_batch(layouts, weights, iters=iters, rng=np.random.default_rng(seed))
    return float(sum_rate(sched, gains, params).mean() / np.mean(fp_rates))


def _apply_step(weights: ModelWeights, grads, opt: Adam, lr: float, filter_param: str,
                filter_mult: float = 1.0):
    arrays = weights.arrays()
    if filter_param == "log":
        filt = np.maximum(arrays[0], FILTER_FLOOR)
        grads = [grads[0] * filt] + list(grads[1:])
        arrays = [np.log(filt)] + arrays[1:]
    new = opt.step(arrays, grads, lr, [filter_mult] + [1.0] * (len(arrays) - 1))
    if filter_param == "log":
        new[0] = np.exp(new[0])
    return weights.with_arrays(new)


@dataclass
class TrainResult:
    weights: ModelWeights
    log: list = field(default_factory=list)


def train(cfg: TrainConfig, params: ChannelParams = ChannelParams(),
          resume: str | None = None) -> TrainResult:
    """Stream fresh layouts and run Adam on the normalised relaxed sum rate.

    Batch k always draws from ``default_rng([seed, k])``, so a resumed run
    replays the same batches as an uninterrupted one.
    """
    out = Path(cfg.out_dir) if cfg.out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    if resume:
        weights = ModelWeights.load(Path(resume) / "model.ckpt")
        state = json.loads((Path(resume) / "state.json").read_text())
        start = state["next_batch"]
        opt = Adam.load(Path(resume) / "optimizer.npz", [a.shape for a in weights.arrays()])
        history = state.get("log", [])
    else:
        weights = ModelWeights.initialize(np.random.default_rng(cfg.seed), cfg.filter_size,
                                          cfg.hidden)
        start, history = 0, []
        opt = Adam([a.shape for a in weights.arrays()])
    eval_cfg = LayoutConfig(cfg.region_edge, cfg.cell_edge, cfg.n_links, 2.0, 65.0)
    ev_layouts, ev_gains = evaluation_set(cfg.eval_layouts, cfg.seed + 10_007, eval_cfg, params)
    fp_rates = sum_rate(fp_schedule(ev_gains, params, record_trace=False).schedule,
                        ev_gains, params)
    scale = 1.0 / (params.bandwidth_hz * cfg.n_links * cfg.batch_size)
    last_good = weights.copy()
    t0 = time.time()
    running = []
    for batch in range(start, cfg.n_batches):
        layouts, gains, unroll, rng = training_batch(cfg, batch, params)
        loss, grads = loss_and_gradients(layouts, weights, unroll, rng, gains=gains,
                                         params=params, mix_prob=cfg.mix_prob, scale=scale)
        if not math.isfinite(loss):
            if out:
                last_good.save(out / "model.ckpt")
            raise FloatingPointError(f"loss diverged at batch {batch}; last good weights kept")
        last_good = weights
        weights = _apply_step(weights, grads, opt, cfg.lr_at(batch), cfg.filter_param,
                              cfg.filter_lr_multiplier)
        running.append(loss)
        if (batch + 1) % cfg.checkpoint_every == 0 or batch + 1 == cfg.n_batches:
            ratio = ratio_vs_fp(weights, ev_layouts, ev_gains, params, fp_rates, seed=cfg.seed)
            row = dict(step=batch + 1, layouts=(batch + 1) * cfg.batch_size,
                       loss=float(np.mean(running)), eval_ratio=ratio,
                       seconds=round(time.time() - t0, 1))
            running = []
            history.append(row)
            log.info("batch %d loss %.4f eval %.2f%%", batch + 1, row["loss"], 100 * ratio)
            if out:
                weights.save(out / "model.ckpt")
                opt.save(out / "optimizer.npz")
                (out / "state.json").write_text(json.dumps(
                    dict(next_batch=batch + 1, config=asdict(cfg), log=history), indent=1))
                write_training_log(out / "train_log.csv", history)
    return TrainResult(weights, history)


def write_training_log(path, history) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["step", "layouts", "loss", "eval_ratio_vs_fp"])
        for row in history:
            out.writerow([row["step"], row["layouts"], f"{row['loss']:.6f}",
                          f"{row['eval_ratio']:.6f}"])
