"""Experiment orchestration: evaluation sets, benchmark tables, PF runs and
result persistence (CSV tables plus a JSON run manifest)."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import greedy_sum_rate, random_half, strongest_fraction
from .channel import ChannelParams, build_channel_matrix
from .fplinq import fp_activation_fraction, fp_schedule
from .layout import LayoutConfig, generate_layout
from .metrics import sum_rate
from .pf import pf_simulate
from .spatialnet import ModelWeights, schedule_batch

DISTANCE_TAGS = {
    "30-70": (30.0, 70.0),
    "2-65": (2.0, 65.0),
    "10-50": (10.0, 50.0),
    "fixed-30": (30.0, 30.0),
}
SUMRATE_SOLVERS = ("neural", "fp", "greedy", "strongest", "random", "all-active")
TABLE_FLOOR_MBPS = 1e-3
# desk-scale checkpoint shipped with the package
DEFAULT_MODEL_PATH = Path(__file__).parent / "data" / "model.ckpt"
# Keeps the (B, N, N) working arrays of the batched schedulers near 16 MB each.
PAIR_BUDGET = 2_000_000


@dataclass
class ExperimentSpec:
    name: str = "experiment"
    distance: str = "2-65"
    dmin: float | None = None
    dmax: float | None = None
    region_edge: float = 500.0
    cell_edge: float = 5.0
    n_links: int = 50
    solvers: tuple = ("fp", "greedy", "strongest", "random", "all-active")
    n_layouts: int = 500
    seed: int = 0
    fading: bool = False
    model_path: str | None = None
    out_dir: str | None = None
    nn_iters: int = 20
    fp_iters: int = 100
    mix_prob: float = 0.5

    def __post_init__(self):
        if self.n_layouts < 1:
            raise ValueError("evaluation set size must be >= 1")
        if not self.solvers:
            raise ValueError("need at least one solver")
        self.solvers = tuple(self.solvers)
        if self.distance != "custom" and self.distance not in DISTANCE_TAGS:
            raise ValueError(f"unknown distance tag {self.distance!r}")

    @property
    def bounds(self) -> tuple[float, float]:
        if self.distance == "custom":
            if self.dmin is None or self.dmax is None:
                raise ValueError("custom distance needs dmin and dmax")
            return self.dmin, self.dmax
        return DISTANCE_TAGS[self.distance]

    def layout_config(self) -> LayoutConfig:
        dmin, dmax = self.bounds
        return LayoutConfig(self.region_edge, self.cell_edge, self.n_links, dmin, dmax, self.seed)

    def config_hash(self) -> str:
        fields = {k: v for k, v in asdict(self).items() if k != "out_dir"}
        blob = json.dumps(fields, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)  # (solver, metric, value, percent_of_fp)
    metadata: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)  # solver -> per-layout values

    def value(self, solver: str, metric: str | None = None) -> float:
        for s, m, v, _ in self.rows:
            if s == solver and (metric is None or m == metric):
                return v
        raise KeyError(solver)

    def percent(self, solver: str) -> float:
        for s, _, _, pct in self.rows:
            if s == solver:
                return pct
        raise KeyError(solver)

    def write(self, out_dir, stem: str) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tag = self.metadata.get("config_hash", "")
        with open(out / f"{stem}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            fh.write(f"# config_hash={tag}\n")
            w.writerow(["solver", "metric", "value", "percent_of_fp"])
            for s, m, v, pct in self.rows:
                w.writerow([s, m, f"{v:.6f}", "" if pct is None else f"{pct:.4f}"])
        with open(out / f"{stem}_per_layout.csv", "w", newline="") as fh:
            fh.write(f"# config_hash={tag}\n")
            names = list(self.raw)
            w = csv.writer(fh)
            w.writerow(["layout"] + names)
            for k in range(len(next(iter(self.raw.values()), []))):
                w.writerow([k] + [f"{self.raw[s][k]:.6f}" for s in names])
        (out / f"{stem}_manifest.json").write_text(json.dumps(self.metadata, indent=1,
                                                              default=str))


def _metadata(spec: ExperimentSpec, params: ChannelParams, **extra) -> dict:
    return dict(spec=asdict(spec), channel=asdict(params), config_hash=spec.config_hash(),
                code_version=__version__, created=time.strftime("%Y-%m-%dT%H:%M:%S"), **extra)


def _chunks(n_items: int, n_links: int):
    step = max(1, PAIR_BUDGET // max(n_links * n_links, 1))
    for a in range(0, n_items, step):
        yield slice(a, min(a + step, n_items))


def build_evaluation_set(spec: ExperimentSpec, params: ChannelParams):
    """Layouts, true gains (faded if requested) and fading-free gains."""
    rng = np.random.default_rng(spec.seed)
    cfg = spec.layout_config()
    layouts = [generate_layout(cfg, rng) for _ in range(spec.n_layouts)]
    clean = ChannelParams(**{**asdict(params), "fading": "none"})
    base = [build_channel_matrix(lay, clean) for lay in layouts]
    if spec.fading:
        fade_rng = np.random.default_rng([spec.seed, 1])
        gains = [g * fade_rng.exponential(1.0, g.shape) for g in base]
    else:
        gains = base
    return layouts, gains, base


def batched_fp(gains: list, params: ChannelParams, iters: int = 100) -> list:
    out = []
    for sl in _chunks(len(gains), gains[0].shape[0]):
        res = fp_schedule(np.stack(gains[sl]), params, max_iters=iters, record_trace=False)
        out.extend(res.schedule)
    return out


def batched_neural(layouts: list, model: ModelWeights, iters: int, mix_prob: float,
                   seed: int) -> list:
    rng = np.random.default_rng([seed, 2])
    out = []
    for sl in _chunks(len(layouts), layouts[0].n_links):
        out.extend(schedule_batch(layouts[sl], model, iters, mix_prob, rng))
    return out


def load_model(path) -> ModelWeights:
    if path is None:
        raise FileNotFoundError("neural solver requested but no checkpoint path given")
    return ModelWeights.load(path)


def run_sumrate_benchmark(spec: ExperimentSpec, params: ChannelParams = ChannelParams(),
                          model: ModelWeights | None = None,
                          strongest_fraction_value: float | None = None) -> ResultTable:
    """Mean sum rate (Mbps) of each solver and its percentage of FP's mean."""
    if "neural" in spec.solvers and model is None:
        model = load_model(spec.model_path)
    layouts, gains, base = build_evaluation_set(spec, params)
    fp = batched_fp(gains, params, spec.fp_iters)
    rate = lambda scheds: np.array([sum_rate(x, g, params) for x, g in zip(scheds, gains)])
    raw = {"fp": rate(fp)}
    extra = {}
    for solver in spec.solvers:
        if solver == "fp":
            continue
        if solver == "fp-nofade":
            scheds = batched_fp(base, params, spec.fp_iters)
        elif solver == "greedy":
            scheds = [greedy_sum_rate(g, params, lay.link_distances)
                      for g, lay in zip(gains, layouts)]
        elif solver == "strongest":
            frac = strongest_fraction_value
            if frac is None:
                frac = fp_activation_fraction(fp)
            extra["strongest_fraction"] = frac
            scheds = [strongest_fraction(g, frac) for g in gains]
        elif solver == "random":
            rng = np.random.default_rng([spec.seed, 3])
            scheds = [random_half(g.shape[0], rng) for g in gains]
        elif solver == "all-active":
            scheds = [np.ones(g.shape[0]) for g in gains]
        elif solver == "neural":
            scheds = batched_neural(layouts, model, spec.nn_iters, spec.mix_prob, spec.seed)
        else:
            raise ValueError(f"unknown solver {solver!r}")
        raw[solver] = rate(scheds)
    fp_mean = raw["fp"].mean()
    order = [s for s in spec.solvers if s != "fp"] + ["fp"]
    rows = [(s, "mean_sum_rate_mbps", raw[s].mean() / 1e6, 100.0 * raw[s].mean() / fp_mean)
            for s in order]
    table = ResultTable(rows, _metadata(spec, params, fp_activation_fraction=
                                        fp_activation_fraction(fp), **extra),
                        {s: raw[s] / 1e6 for s in order})
    if spec.out_dir:
        table.write(spec.out_dir, f"{spec.name}_sumrate")
    return table


def run_pf_benchmark(spec: ExperimentSpec, params: ChannelParams = ChannelParams(),
                     model: ModelWeights | None = None, slots: int = 500) -> ResultTable:
    """Mean log utility over layouts for each PF solver; CDFs written per solver."""
    if "neural" in spec.solvers and model is None:
        model = load_model(spec.model_path)
    layouts, gains, _ = build_evaluation_set(spec, params)
    utils: dict = {}
    means: dict = {}
    clamped = False
    for solver in spec.solvers:
        utils[solver], means[solver] = [], []
        for k, (lay, g) in enumerate(zip(layouts, gains)):
            rng = np.random.default_rng([spec.seed, 4, k])
            res = pf_simulate(lay, g, params, solver, slots, rng, model,
                              iters=spec.nn_iters, mix_prob=spec.mix_prob,
                              fp_iters=spec.fp_iters)
            u = res.utility
            if not math.isfinite(u):
                u = float(np.sum(np.log(np.maximum(res.mean_rates / 1e6, TABLE_FLOOR_MBPS))))
                clamped = True
            utils[solver].append(u)
            means[solver].append(res.mean_rates)
    ref = "fp-weighted" if "fp-weighted" in utils else None
    rows = []
    for s in spec.solvers:
        u = float(np.mean(utils[s]))
        pct = 100.0 * u / np.mean(utils[ref]) if ref else None
        rows.append((s, "mean_log_utility", u, pct))
    meta = _metadata(spec, params, slots=slots,
                     utility_floor_mbps=TABLE_FLOOR_MBPS if clamped else None)
    table = ResultTable(rows, meta, {s: np.array(utils[s]) for s in spec.solvers})
    table.raw_mean_rates = means
    if spec.out_dir:
        table.write(spec.out_dir, f"{spec.name}_pf")
        for s in spec.solvers:
            rates = np.sort(np.concatenate(means[s])) / 1e6
            with open(Path(spec.out_dir) / f"{spec.name}_cdf_{s}.csv", "w", newline="") as fh:
                fh.write(f"# config_hash={meta['config_hash']}\n")
                w = csv.writer(fh)
                w.writerow(["percentile", "mean_rate_mbps"])
                for i, v in enumerate(rates):
                    w.writerow([f"{100.0 * (i + 1) / len(rates):.4f}", f"{v:.6f}"])
    return table


def estimate_complexity(n_links: int, grid: int = 100, filter_size: int = 63,
                        layers=(6, 30, 30, 1)) -> int:
    """Operation count: grid convolution plus one fully connected pass per link."""
    if min(grid, filter_size, *layers) <= 0 or n_links < 0:
        raise ValueError("dimensions must be positive")
    fc = sum(a * b for a, b in zip(layers[:-1], layers[1:]))
    return grid ** 2 * filter_size ** 2 + n_links * fc


def percentile_gap(mean_a: np.ndarray, mean_b: np.ndarray, q: float = 10.0) -> float:
    """q-th percentile of pooled mean rates of A minus that of B (Mbps)."""
    return float(np.percentile(mean_a, q) - np.percentile(mean_b, q)) / 1e6
