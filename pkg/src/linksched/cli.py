"""Command-line entry point: ``linksched <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .channel import ChannelParams, build_channel_matrix, write_channel_csv
from .harness import (DEFAULT_MODEL_PATH, DISTANCE_TAGS, ExperimentSpec, estimate_complexity, run_pf_benchmark,
                      run_sumrate_benchmark)
from .layout import ConfigurationError, LayoutConfig, generate_layout, write_layout
from .spatialnet import ModelWeights
from .training import TrainConfig, finite_difference_check, train

EXIT_CONFIG = 2
EXIT_ASSERT = 3


def _spec_args(p: argparse.ArgumentParser, solvers: str) -> None:
    p.add_argument("--name", default="experiment")
    p.add_argument("--distance", default="2-65", choices=[*DISTANCE_TAGS, "custom"])
    p.add_argument("--dmin", type=float)
    p.add_argument("--dmax", type=float)
    p.add_argument("--region", type=float, default=500.0, help="region edge in meters")
    p.add_argument("--n-links", type=int, default=50)
    p.add_argument("--layouts", type=int, default=500, help="evaluation set size")
    p.add_argument("--solvers", default=solvers, help="comma-separated solver list")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fading", action="store_true")
    p.add_argument("--model", default=str(DEFAULT_MODEL_PATH),
                   help="checkpoint for the neural solver (default: bundled desk model)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--assert", dest="asserts", action="append", default=[],
                   metavar="SOLVER:MIN[:MAX]",
                   help="fail with exit code 3 unless the solver's percent-of-FP is in range")


def _spec(a) -> ExperimentSpec:
    return ExperimentSpec(name=a.name, distance=a.distance, dmin=a.dmin, dmax=a.dmax,
                          region_edge=a.region, n_links=a.n_links,
                          solvers=tuple(s for s in a.solvers.split(",") if s),
                          n_layouts=a.layouts, seed=a.seed, fading=a.fading,
                          model_path=a.model, out_dir=a.out)


def _check_asserts(table, asserts) -> int:
    failed = False
    for item in asserts:
        parts = item.split(":")
        solver, lo = parts[0], float(parts[1])
        hi = float(parts[2]) if len(parts) > 2 else float("inf")
        pct = table.percent(solver)
        ok = lo <= pct <= hi
        failed |= not ok
        print(f"{'PASS' if ok else 'FAIL'} {solver}: {pct:.2f}% in [{lo}, {hi}]")
    return EXIT_ASSERT if failed else 0


def _print_table(table) -> None:
    for solver, metric, value, pct in table.rows:
        pct_s = "" if pct is None else f"{pct:8.2f}%"
        print(f"{solver:16s} {metric:20s} {value:12.4f} {pct_s}")


def cmd_generate(a) -> int:
    lo, hi = (a.dmin, a.dmax) if a.distance == "custom" else DISTANCE_TAGS[a.distance]
    cfg = LayoutConfig(a.region, 5.0, a.n_links, lo, hi, a.seed)
    params = ChannelParams(fading="rayleigh" if a.fading else "none")
    rng = np.random.default_rng(a.seed)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(a.layouts):
        lay = generate_layout(cfg, rng)
        write_layout(out / f"layout_{k:05d}.txt", lay)
        if a.channels:
            write_channel_csv(out / f"channel_{k:05d}.csv", build_channel_matrix(lay, params, rng))
    print(f"wrote {a.layouts} layouts to {out}")
    return 0


def cmd_train(a) -> int:
    cfg = TrainConfig(batch_size=a.batch_size, total_layouts=a.total_layouts,
                      learning_rate=a.lr, final_learning_rate=a.final_lr, seed=a.seed,
                      checkpoint_every=a.checkpoint_every, eval_layouts=a.eval_layouts,
                      out_dir=a.out)
    result = train(cfg, resume=a.resume)
    last = result.log[-1] if result.log else {}
    print(json.dumps(last))
    return 0


def cmd_eval_sumrate(a) -> int:
    table = run_sumrate_benchmark(_spec(a))
    _print_table(table)
    return _check_asserts(table, a.asserts)


def cmd_eval_pf(a) -> int:
    table = run_pf_benchmark(_spec(a), slots=a.slots)
    _print_table(table)
    return _check_asserts(table, a.asserts)


def cmd_gradcheck(a) -> int:
    rng = np.random.default_rng(a.seed)
    weights = ModelWeights.load(a.model) if a.model else ModelWeights.initialize(rng)
    lay = generate_layout(LayoutConfig(a.region, 5.0, a.n_links, 2.0, 65.0, a.seed), rng)
    err = finite_difference_check(weights, lay, a.step, a.params, a.unroll, rng)
    ok = err < a.tol
    print(f"{'PASS' if ok else 'FAIL'} max relative error {err:.3e} (tolerance {a.tol:g})")
    return 0 if ok else EXIT_ASSERT


def cmd_complexity(a) -> int:
    layers = tuple(int(v) for v in a.layers.split(","))
    print(estimate_complexity(a.n_links, a.grid, a.filter_size, layers))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linksched", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write random layouts (and channel CSVs)")
    p.add_argument("--out", required=True)
    p.add_argument("--layouts", type=int, default=10)
    p.add_argument("--n-links", type=int, default=50)
    p.add_argument("--region", type=float, default=500.0)
    p.add_argument("--distance", default="2-65", choices=[*DISTANCE_TAGS, "custom"])
    p.add_argument("--dmin", type=float)
    p.add_argument("--dmax", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fading", action="store_true")
    p.add_argument("--channels", action="store_true", help="also write gain matrices")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="unsupervised training of the spatial scheduler")
    p.add_argument("--out", required=True)
    p.add_argument("--total-layouts", type=int, default=TrainConfig.total_layouts)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--final-lr", type=float, default=TrainConfig.final_learning_rate)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-every", type=int, default=TrainConfig.checkpoint_every)
    p.add_argument("--eval-layouts", type=int, default=TrainConfig.eval_layouts)
    p.add_argument("--resume", help="directory of a previous run to continue")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-sumrate", help="sum-rate benchmark table")
    _spec_args(p, "neural,fp,greedy,strongest,random,all-active")
    p.set_defaults(func=cmd_eval_sumrate)

    p = sub.add_parser("eval-pf", help="proportional-fairness benchmark table")
    _spec_args(p, "neural,fp-weighted,weighted-greedy,max-weight,random,all-active")
    p.add_argument("--slots", type=int, default=500)
    p.set_defaults(func=cmd_eval_pf)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--model")
    p.add_argument("--n-links", type=int, default=5)
    p.add_argument("--region", type=float, default=500.0)
    p.add_argument("--unroll", type=int, default=3)
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--params", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("complexity", help="operation count of the neural scheduler")
    p.add_argument("--n-links", type=int, required=True)
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--filter-size", type=int, default=63)
    p.add_argument("--layers", default="6,30,30,1")
    p.set_defaults(func=cmd_complexity)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
