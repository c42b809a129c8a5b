"""Spatial-convolution neural scheduler: density grids, convolution features,
the per-link fully connected stage and the feedback loop with stochastic
symmetry breaking.

Convolutions are evaluated only at the cells that host transmitters or
receivers. Because a density grid is a sum of point masses, the value of the
zero-padded convolution at a link's cell equals a sum of filter entries over
the counterpart devices inside the filter window; :class:`LinkGeometry` caches
the flat filter index of every such pair so one feedback iteration is a pair
of (N, N) matrix-vector products.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .layout import Layout

FORMAT_VERSION = "spatialnet-1"
N_FEATURES = 6


@dataclass
class ModelWeights:
    filter: np.ndarray  # (J, J)
    weights: list  # [(h0, h1), (h1, h2), (h2, 1)]
    biases: list  # [(h1,), (h2,), (1,)]
    version: str = FORMAT_VERSION
    activations: tuple = field(default=("relu", "relu", "sigmoid"))

    def __post_init__(self):
        self.filter = np.asarray(self.filter, dtype=float)
        j = self.filter.shape[0]
        if self.filter.shape != (j, j) or j % 2 == 0:
            raise ValueError("filter must be square with odd size")
        dims = [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]
        if dims[0] != N_FEATURES or dims[-1] != 1:
            raise ValueError(f"layer sizes {dims} must run from {N_FEATURES} to 1")
        for w, b, (a, c) in zip(self.weights, self.biases, zip(dims, dims[1:])):
            if w.shape != (a, c) or b.shape != (c,):
                raise ValueError("inconsistent layer shapes")

    @property
    def filter_size(self) -> int:
        return self.filter.shape[0]

    @property
    def layer_sizes(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @classmethod
    def initialize(cls, rng: np.random.Generator, filter_size: int = 63,
                   hidden: Sequence[int] = (30, 30)) -> "ModelWeights":
        dims = [N_FEATURES, *hidden, 1]
        ws, bs = [], []
        for a, b in zip(dims, dims[1:]):
            bound = 1.0 / np.sqrt(a)
            ws.append(rng.uniform(-bound, bound, (a, b)))
            bs.append(rng.uniform(-bound, bound, b))
        filt = 1e-2 * rng.uniform(0.0, 1.0, (filter_size, filter_size))
        return cls(filt, ws, bs)

    @classmethod
    def zeros(cls, filter_size: int = 63, hidden: Sequence[int] = (30, 30)) -> "ModelWeights":
        dims = [N_FEATURES, *hidden, 1]
        return cls(np.zeros((filter_size, filter_size)),
                   [np.zeros((a, b)) for a, b in zip(dims, dims[1:])],
                   [np.zeros(b) for b in dims[1:]])

    def arrays(self) -> list:
        """All trainable arrays in a fixed order: filter, then (W, b) per layer."""
        out = [self.filter]
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_arrays(self, arrays) -> "ModelWeights":
        arrays = list(arrays)
        return ModelWeights(arrays[0], arrays[1::2], arrays[2::2], self.version, self.activations)

    def copy(self) -> "ModelWeights":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def save(self, path) -> None:
        lines = [f"# {self.version}",
                 f"filter_size {self.filter_size}",
                 "layers " + " ".join(str(d) for d in self.layer_sizes),
                 "activations " + " ".join(self.activations)]
        fmt = "{:.9g}".format
        lines.append("filter")
        lines += [" ".join(fmt(v) for v in row) for row in self.filter]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            lines.append(f"weight {k}")
            lines += [" ".join(fmt(v) for v in row) for row in w]
            lines.append(f"bias {k}")
            lines.append(" ".join(fmt(v) for v in b))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "ModelWeights":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"checkpoint not found: {path}")
        lines = iter(path.read_text().splitlines())
        version = next(lines).lstrip("# ").strip()
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version!r}")
        j = int(next(lines).split()[1])
        dims = [int(v) for v in next(lines).split()[1:]]
        acts = tuple(next(lines).split()[1:])

        def block(rows):
            return np.array([[float(v) for v in next(lines).split()] for _ in range(rows)])

        assert next(lines) == "filter"
        filt = block(j)
        ws, bs = [], []
        for k, (a, _) in enumerate(zip(dims, dims[1:])):
            assert next(lines) == f"weight {k}"
            ws.append(block(a))
            assert next(lines) == f"bias {k}"
            bs.append(block(1)[0])
        return cls(filt, ws, bs, version, acts)


class DensityGrids(NamedTuple):
    T: np.ndarray
    R: np.ndarray


def build_density_grids(layout: Layout, x) -> DensityGrids:
    x = np.asarray(x, dtype=float)
    if x.shape != (layout.n_links,):
        raise ValueError("schedule length must equal the number of links")
    m = layout.config.n_cells
    T = np.zeros((m, m))
    R = np.zeros((m, m))
    np.add.at(T, (layout.tx_cells[:, 0] - 1, layout.tx_cells[:, 1] - 1), x)
    np.add.at(R, (layout.rx_cells[:, 0] - 1, layout.rx_cells[:, 1] - 1), x)
    return DensityGrids(T, R)


def conv_at(grid: np.ndarray, filt: np.ndarray, cell) -> float:
    """Zero-padded correlation of ``grid`` with ``filt`` centred on 1-based ``cell``."""
    j = filt.shape[0]
    if j % 2 == 0 or filt.shape != (j, j):
        raise ValueError("filter must be square with odd size")
    c = j // 2
    s, t = cell[0] - 1, cell[1] - 1
    m0, m1 = grid.shape
    r0, r1 = max(0, s - c), min(m0, s + c + 1)
    q0, q1 = max(0, t - c), min(m1, t + c + 1)
    window = grid[r0:r1, q0:q1]
    sub = filt[r0 - s + c:r1 - s + c, q0 - t + c:q1 - t + c]
    return float(np.sum(window * sub))


def _filter_entry(filt: np.ndarray, offset) -> float:
    c = filt.shape[0] // 2
    u, v = c + offset[0], c + offset[1]
    if 0 <= u < filt.shape[0] and 0 <= v < filt.shape[1]:
        return float(filt[u, v])
    return 0.0


def link_interference_features(layout: Layout, grids: DensityGrids, filt: np.ndarray,
                               x, i: int) -> tuple[float, float]:
    """(TxINT_i, RxINT_i) with the link's own pair removed."""
    tx, rx = layout.tx_cells[i], layout.rx_cells[i]
    txint = conv_at(grids.R, filt, tx) - x[i] * _filter_entry(filt, rx - tx)
    rxint = conv_at(grids.T, filt, rx) - x[i] * _filter_entry(filt, tx - rx)
    return txint, rxint


def direct_channel_strength(filt: np.ndarray, layout: Layout, i: int) -> float:
    off = layout.rx_cells[i] - layout.tx_cells[i]
    c = filt.shape[0] // 2
    if np.any(np.abs(off) > c):
        raise ValueError(f"link {i}: receiver offset {tuple(off)} lies outside the "
                         f"{filt.shape[0]}x{filt.shape[0]} filter support")
    return float(filt[c + off[0], c + off[1]])


def fc_forward(features, weights: ModelWeights) -> np.ndarray:
    """Per-link fully connected stage; ``features`` is (..., 6)."""
    h = np.asarray(features, dtype=float)
    for w, b in zip(weights.weights[:-1], weights.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
    return expit(h @ weights.weights[-1] + weights.biases[-1])[..., 0]


@dataclass
class LinkGeometry:
    """Cached filter indices for a batch of equal-size layouts.

    ``tx_idx[b, i, j]`` is the flat filter index of receiver j seen from
    transmitter i; ``rx_idx[b, i, j]`` the index of transmitter j seen from
    receiver i. Pairs outside the window, and each link's own pair, point to
    the sentinel slot J*J (always zero).
    """
    tx_idx: np.ndarray
    rx_idx: np.ndarray
    dcs_idx: np.ndarray
    active: np.ndarray  # (B, N) float mask of links taking part
    filter_size: int

    @property
    def sentinel(self) -> int:
        return self.filter_size ** 2


def _pair_index(src: np.ndarray, dst: np.ndarray, j: int) -> np.ndarray:
    c = j // 2
    off = dst[:, None, :, :] - src[:, :, None, :]  # (B, N_src, N_dst, 2)
    inside = np.all(np.abs(off) <= c, axis=-1)
    flat = (off[..., 0] + c) * j + (off[..., 1] + c)
    return np.where(inside, flat, j * j)


def link_geometry(layouts: Layout | Sequence[Layout], filter_size: int,
                  active=None) -> LinkGeometry:
    if isinstance(layouts, Layout):
        layouts = [layouts]
    tx = np.stack([lay.tx_cells for lay in layouts])
    rx = np.stack([lay.rx_cells for lay in layouts])
    b, n = tx.shape[:2]
    j = filter_size
    c = j // 2
    off = rx - tx
    if np.any(np.abs(off) > c):
        raise ValueError("a link's receiver lies outside the filter support of its "
                         "transmitter; layout incompatible with this model")
    dcs_idx = (off[..., 0] + c) * j + (off[..., 1] + c)
    tx_idx = _pair_index(tx, rx, j)
    rx_idx = _pair_index(rx, tx, j)
    diag = np.arange(n)
    tx_idx[:, diag, diag] = j * j
    rx_idx[:, diag, diag] = j * j
    act = np.ones((b, n)) if active is None else np.asarray(active, float).reshape(b, n)
    return LinkGeometry(tx_idx, rx_idx, dcs_idx, act, j)


def padded_filter(filt: np.ndarray) -> np.ndarray:
    return np.append(filt.ravel(), 0.0)


def static_features(flat_filter: np.ndarray, geom: LinkGeometry):
    """Filter gathers that stay fixed across feedback iterations."""
    a_tx = flat_filter[geom.tx_idx]
    a_rx = flat_filter[geom.rx_idx]
    dcs = flat_filter[geom.dcs_idx]
    act = geom.active > 0
    imax = np.argmax(np.where(act, dcs, -np.inf), axis=1)
    imin = np.argmin(np.where(act, dcs, np.inf), axis=1)
    return a_tx, a_rx, dcs, imax, imin


def assemble_features(static, x: np.ndarray) -> np.ndarray:
    a_tx, a_rx, dcs, imax, imin = static
    rows = np.arange(len(dcs))
    n = x.shape[1]
    return np.stack([np.einsum("bij,bj->bi", a_tx, x),
                     np.einsum("bij,bj->bi", a_rx, x),
                     dcs,
                     np.repeat(dcs[rows, imax][:, None], n, 1),
                     np.repeat(dcs[rows, imin][:, None], n, 1),
                     x], axis=-1)


def run_feedback(weights: ModelWeights, geom: LinkGeometry, masks: np.ndarray,
                 tape: dict | None = None, trajectory: list | None = None,
                 x0: np.ndarray | None = None) -> np.ndarray:
    """Unrolled feedback iterations, by default from the all-ones (active-subset) start.

    ``masks[t, b, i]`` is True when link i adopts its fresh output at iteration t.
    Returns the relaxed activation after the last iteration.
    """
    static = static_features(padded_filter(weights.filter), geom)
    act = geom.active
    x = act.copy() if x0 is None else np.asarray(x0, float) * act
    if tape is not None:
        tape["static"] = static
        tape["steps"] = []
    if trajectory is not None:
        trajectory.append(x.copy())
    for m in masks:
        feats = assemble_features(static, x)
        h = feats
        pre = []
        for w, b in zip(weights.weights[:-1], weights.biases[:-1]):
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0.0)
        y = expit(h @ weights.weights[-1] + weights.biases[-1])[..., 0]
        mf = m.astype(float)
        if tape is not None:
            tape["steps"].append(dict(x_prev=x, feats=feats, pre=pre, h_last=h, y=y, mask=mf))
        x = (mf * y + (1 - mf) * x) * act
        if trajectory is not None:
            trajectory.append(x.copy())
    return x


def draw_masks(rng: np.random.Generator, iters: int, shape, mix_prob: float) -> np.ndarray:
    return rng.random((iters, *shape)) < mix_prob


def feedback_schedule(layout: Layout, weights: ModelWeights, iters: int = 20,
                      mix_prob: float = 0.5, rng: np.random.Generator | None = None,
                      subset=None, threshold: float = 0.5):
    """Schedule one layout from locations only.

    Links outside ``subset`` (a boolean mask) are pinned to zero and excluded
    from the grids and from DCS max/min. Returns (binary schedule, trajectory)
    with the trajectory holding x before the first and after every iteration.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    geom = link_geometry(layout, weights.filter_size, subset)
    masks = draw_masks(rng, iters, geom.active.shape, mix_prob)
    traj: list = []
    x = run_feedback(weights, geom, masks, trajectory=traj)[0]
    return (x > threshold).astype(float), np.array(traj)[:, 0]


def schedule_batch(layouts: Sequence[Layout], weights: ModelWeights, iters: int = 20,
                   mix_prob: float = 0.5, rng: np.random.Generator | None = None,
                   threshold: float = 0.5, return_relaxed: bool = False):
    """Vectorised :func:`feedback_schedule` over equal-size layouts."""
    rng = np.random.default_rng() if rng is None else rng
    geom = link_geometry(layouts, weights.filter_size)
    masks = draw_masks(rng, iters, geom.active.shape, mix_prob)
    x = run_feedback(weights, geom, masks)
    sched = (x > threshold).astype(float)
    return (sched, x) if return_relaxed else sched


def radial_decay_correlation(filt: np.ndarray) -> float:
    """Spearman correlation between distance from the centre and filter value."""
    from scipy.stats import spearmanr

    j = filt.shape[0]
    c = j // 2
    u, v = np.meshgrid(np.arange(j) - c, np.arange(j) - c, indexing="ij")
    rho = spearmanr(np.hypot(u, v).ravel(), filt.ravel()).statistic
    return float(rho)
