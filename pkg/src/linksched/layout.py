"""Random D2D layouts and their quantization onto the density-grid cell lattice."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_RX_RETRIES = 1000
MAX_TX_RESAMPLES = 1000


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class LayoutConfig:
    region_edge: float = 500.0
    cell_edge: float = 5.0
    n_links: int = 50
    dmin: float = 2.0
    dmax: float = 65.0
    seed: int = 0
    # "area": receiver uniform over the annulus; "radius": radius uniform in [dmin, dmax]
    radius_law: str = "radius"

    def __post_init__(self):
        if not self.region_edge > 0 or not self.cell_edge > 0:
            raise ConfigurationError("region_edge and cell_edge must be positive")
        ratio = self.region_edge / self.cell_edge
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigurationError(
                f"region_edge/cell_edge = {ratio} is not a positive integer")
        if self.n_links < 0:
            raise ConfigurationError("n_links must be nonnegative")
        if not 0 < self.dmin <= self.dmax < self.region_edge:
            raise ConfigurationError(
                f"need 0 < dmin <= dmax < region_edge, got {self.dmin}, {self.dmax}")
        if self.radius_law not in ("area", "radius"):
            raise ConfigurationError(f"unknown radius_law {self.radius_law!r}")

    @property
    def n_cells(self) -> int:
        return int(round(self.region_edge / self.cell_edge))


@dataclass
class Layout:
    tx: np.ndarray  # (N, 2) meters
    rx: np.ndarray  # (N, 2) meters
    config: LayoutConfig
    tx_cells: np.ndarray = field(init=False)  # (N, 2) int, 1-based
    rx_cells: np.ndarray = field(init=False)

    def __post_init__(self):
        self.tx = np.asarray(self.tx, dtype=float).reshape(-1, 2)
        self.rx = np.asarray(self.rx, dtype=float).reshape(-1, 2)
        if self.tx.shape != self.rx.shape:
            raise ValueError("tx and rx must have the same shape")
        self.tx_cells = cell_indices(self.tx, self.config.cell_edge, self.config.region_edge)
        self.rx_cells = cell_indices(self.rx, self.config.cell_edge, self.config.region_edge)

    @property
    def n_links(self) -> int:
        return len(self.tx)

    @property
    def link_distances(self) -> np.ndarray:
        return np.linalg.norm(self.rx - self.tx, axis=1)

    def cross_distances(self) -> np.ndarray:
        """D[i, j] = distance from transmitter j to receiver i."""
        diff = self.rx[:, None, :] - self.tx[None, :, :]
        return np.sqrt((diff ** 2).sum(axis=-1))

    def permuted(self, perm) -> "Layout":
        perm = np.asarray(perm)
        return Layout(self.tx[perm], self.rx[perm], self.config)


def cell_index(pos, cell_edge: float, region_edge: float) -> tuple[int, int]:
    """1-based (s, t) cell of a point; the top edge folds into the last cell."""
    s, t = cell_indices(np.asarray(pos, dtype=float).reshape(1, 2), cell_edge, region_edge)[0]
    return int(s), int(t)


def cell_indices(points: np.ndarray, cell_edge: float, region_edge: float) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if np.any(points < 0) or np.any(points > region_edge) or not np.all(np.isfinite(points)):
        raise ValueError("position outside the deployment region")
    m = int(round(region_edge / cell_edge))
    idx = np.floor(points / cell_edge).astype(int) + 1
    return np.clip(idx, 1, m)


def _draw_radius(cfg: LayoutConfig, rng: np.random.Generator, size: int) -> np.ndarray:
    if cfg.radius_law == "area":
        return np.sqrt(rng.uniform(cfg.dmin ** 2, cfg.dmax ** 2, size))
    return rng.uniform(cfg.dmin, cfg.dmax, size)


def generate_layout(cfg: LayoutConfig, rng: np.random.Generator | None = None) -> Layout:
    """Uniform transmitters, receivers rejection-sampled on the distance annulus.

    A receiver that fails ``MAX_RX_RETRIES`` draws gets a fresh transmitter.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    ell, n = cfg.region_edge, cfg.n_links
    tx = rng.uniform(0.0, ell, (n, 2))
    rx = np.empty((n, 2))
    pending = np.arange(n)
    tries = np.zeros(n, dtype=int)
    resamples = np.zeros(n, dtype=int)
    while pending.size:
        r = _draw_radius(cfg, rng, pending.size)
        phi = rng.uniform(0.0, 2 * math.pi, pending.size)
        cand = tx[pending] + np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
        ok = np.all((cand >= 0) & (cand <= ell), axis=1)
        rx[pending[ok]] = cand[ok]
        pending = pending[~ok]
        tries[pending] += 1
        stuck = pending[tries[pending] >= MAX_RX_RETRIES]
        if stuck.size:
            resamples[stuck] += 1
            if np.any(resamples[stuck] > MAX_TX_RESAMPLES):
                raise ConfigurationError(
                    f"could not place a receiver at distance [{cfg.dmin}, {cfg.dmax}] "
                    f"inside a {ell} m region")
            tx[stuck] = rng.uniform(0.0, ell, (stuck.size, 2))
            tries[stuck] = 0
    return Layout(tx, rx, cfg)


def sample_training_bounds(rng: np.random.Generator) -> tuple[float, float]:
    dmin = rng.uniform(2.0, 70.0)
    dmax = rng.uniform(dmin, 70.0)
    return float(dmin), float(dmax)


def write_layout(path, layout: Layout) -> None:
    cfg = layout.config
    lines = [f"# region_edge={cfg.region_edge!r} cell_edge={cfg.cell_edge!r} "
             f"n_links={layout.n_links} seed={cfg.seed} dmin={cfg.dmin!r} dmax={cfg.dmax!r}"]
    for (a, b), (c, d) in zip(layout.tx, layout.rx):
        lines.append(f"{a:.6f},{b:.6f},{c:.6f},{d:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_layout(path) -> Layout:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError(f"{path}: missing layout header")
    meta = dict(item.split("=", 1) for item in text[0][1:].split())
    rows = np.array([[float(v) for v in line.split(",")] for line in text[1:] if line.strip()])
    rows = rows.reshape(-1, 4)
    if len(rows) != int(meta["n_links"]):
        raise ValueError(f"{path}: header says {meta['n_links']} links, found {len(rows)}")
    ell = float(meta["region_edge"])
    cfg = LayoutConfig(region_edge=ell, cell_edge=float(meta["cell_edge"]),
                       n_links=len(rows), seed=int(meta["seed"]),
                       dmin=float(meta.get("dmin", 1e-9)),
                       dmax=float(meta.get("dmax", ell / 2)))
    return Layout(rows[:, :2], rows[:, 2:], cfg)
