"""Command-line interface.

Subcommands: generate, sample, detect, bounds, experiment, render.
Exit codes: 0 on success, 1 on configuration errors, 2 when some trials
of an experiment failed.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .errors import GredError


def _cmd_generate(args) -> int:
    from .config import ExperimentConfig
    from .experiment import truth_layout
    from .graphgen import build_graph

    config = ExperimentConfig.load(args.config)
    truth = truth_layout(config)
    g = config.graph
    graph = build_graph(domain=g.domain, p=g.p, d=g.d, w_min=g.w_min,
                        w_max=g.w_max, seed=g.seed, layout=truth)
    graph.save(args.out)
    hist = graph.degree_histogram()
    print(f"wrote {args.out}: p={graph.p}, edges={len(graph.edges)}, degrees={hist}")
    return 0


def _cmd_sample(args) -> int:
    from .config import ExperimentConfig
    from .experiment import truth_layout
    from .gaussian import sample
    from .graphgen import SpatialGraph, build_precision

    config = ExperimentConfig.load(args.config)
    graph = SpatialGraph.load(args.graph)
    precision = build_precision(graph, [r.theta for r in config.graph.regions],
                                cross_coupling=config.graph.cross_coupling)
    n = args.n or config.sampling.n
    seed = args.seed if args.seed is not None else config.sampling.seed
    mat = sample(precision, n, seed)
    mat.save(args.out)
    if args.csv:
        mat.to_csv(args.csv)
    print(f"wrote {args.out}: n={mat.n}, p={mat.p}, seed={mat.seed}")
    return 0


def _cmd_detect(args) -> int:
    from .config import ExperimentConfig
    from .detect import run_basic, run_convex
    from .experiment import detector_params, truth_layout
    from .gaussian import SampleMatrix
    from .graphgen import SpatialGraph

    config = ExperimentConfig.load(args.config)
    graph = SpatialGraph.load(args.graph)
    samples = SampleMatrix.load(args.samples)
    truth = truth_layout(config)
    params = detector_params(config, truth)
    if args.variant == "convex":
        res = run_convex(samples, graph.coords, params, domain=config.graph.domain,
                         convexify_when=config.detector.convexify_when)
    else:
        res = run_basic(samples, graph.coords, params, domain=config.graph.domain)
    res.save(args.out)
    print(f"wrote {args.out}: regions={res.n_regions}, "
          f"gray cells={len(res.gray_cells)}, snapshots={len(res.snapshots)}")
    if args.render:
        from .render import render_result
        paths = render_result(res, os.path.join(args.out, "figures"), truth=truth)
        print(f"rendered {len(paths)} figures")
    return 0


def _cmd_bounds(args) -> int:
    from .bounds import BoundInputs, bounds_table
    from .render import plot_bounds_table

    thetas = tuple(args.thetas)
    S = len(thetas)
    inputs = BoundInputs(
        p=args.p_values[0], d=args.d, xi=args.xi, rho=args.rho, eta=args.eta,
        thetas=thetas, betas=tuple([args.beta] * S), nus=tuple([1.0 / S] * S),
        adjacency=tuple((s, t) for s in range(S) for t in range(S) if s != t))
    rows = bounds_table(inputs, args.p_values)
    writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            w.writeheader()
            for row in rows:
                w.writerow(row)
    if args.figure:
        plot_bounds_table(rows, args.figure)
    return 0


def _cmd_experiment(args) -> int:
    from .config import ExperimentConfig
    from .experiment import (area_error_series, read_metrics, run_experiment,
                             write_series)
    from .render import plot_error_series

    config = ExperimentConfig.load(args.config)
    result = run_experiment(config, outdir=args.out)
    series = {}
    for variant, path in result.metrics_paths.items():
        rows = read_metrics(path)
        if rows:
            series[variant] = area_error_series(rows)
            write_series(os.path.join(result.outdir, f"series_{variant}.csv"),
                         series[variant])
    if series:
        plot_error_series(series, os.path.join(result.outdir, "area_error.svg"))
    for err in result.trial_errors:
        print(f"trial error: {err}", file=sys.stderr)
    print(f"experiment bundle in {result.outdir}")
    return 0 if result.fully_ok else 2


def _cmd_render(args) -> int:
    from .geometry import RegionLayout
    from .render import render_state

    layout = RegionLayout.load(args.layout)
    truth = RegionLayout.load(args.truth) if args.truth else None
    assignments = {}
    for idx, reg in enumerate(layout.regions):
        for cell in reg.poly.cells:
            assignments[cell] = idx
    cells = [c for reg in layout.regions for c in reg.poly.cells]
    lo_i = min(c[0] for c in cells)
    lo_j = min(c[1] for c in cells)
    hi_i = max(c[0] for c in cells) + 1
    hi_j = max(c[1] for c in cells) + 1
    w = layout.lattice.width
    ox, oy = layout.lattice.origin
    domain = (ox + lo_i * w, oy + lo_j * w, ox + hi_i * w, oy + hi_j * w)
    render_state(layout.lattice, assignments, domain, args.out, truth=truth)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gred", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a labeled spatial graph")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="graph.json")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("sample", help="draw samples from the model of a graph")
    p.add_argument("--config", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", default="samples.bin")
    p.add_argument("--csv", default=None, help="also export samples as CSV")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("detect", help="run region detection on saved samples")
    p.add_argument("--config", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--variant", choices=["basic", "convex"], default="basic")
    p.add_argument("--out", default="detection")
    p.add_argument("--render", action="store_true")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("bounds", help="print a CSV table of sample-count bounds over p")
    p.add_argument("--p-values", type=int, nargs="+",
                   default=[1000, 10_000, 100_000, 1_000_000, 10_000_000])
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--xi", type=float, default=0.5)
    p.add_argument("--rho", type=float, default=0.02)
    p.add_argument("--eta", type=float, default=1250.0)
    p.add_argument("--beta", type=float, default=4.5)
    p.add_argument("--thetas", type=float, nargs="+",
                   default=[0.04, 0.056, 0.069, 0.08])
    p.add_argument("--out", default=None, help="also write the CSV here")
    p.add_argument("--figure", default=None, help="write a log-log figure here")
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("experiment", help="run a full detection experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override the output directory")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("render", help="render a saved layout as a figure")
    p.add_argument("--layout", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--out", default="layout.svg")
    p.set_defaults(func=_cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GredError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
