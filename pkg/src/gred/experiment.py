"""Experiment orchestration: generate, sample, detect, measure, persist.

A run produces a directory with the generated graph, a manifest capturing
every seed and derived parameter, one metrics CSV per detector variant
(fixed column schema), snapshot records, and optional rendered figures.
Re-running from a saved manifest reproduces the numeric outputs exactly;
wall-time fields are recorded as 0 when ``record_timings`` is off so the
CSV bytes are reproducible too.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import os
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .config import DetectorConfig, ExperimentConfig
from .detect import (DetectionResult, DetectionState, GredParams, Snapshot,
                     _build_lattice, default_tau0, default_zeta, run_basic,
                     run_convex, state_to_layout)
from .gaussian import sample
from .geometry import Lattice, RegionLayout, layout_from_rects, resample_layout, \
    symmetric_difference_area
from .graphgen import SpatialGraph, build_graph, build_precision, rect_area

METRICS_COLUMNS = ["trial", "iter", "sub", "tau", "region", "sym_diff_area",
                   "gray_area", "ahat_over_a", "ms"]


@dataclass
class MetricsRecord:
    """One row of the metrics CSV (fixed schema)."""

    trial: int
    iter: int
    sub: int
    tau: float
    region: str
    sym_diff_area: float
    gray_area: float
    ahat_over_a: float
    ms: float

    def row(self) -> list:
        return [self.trial, self.iter, self.sub, repr(self.tau), self.region,
                repr(self.sym_diff_area), repr(self.gray_area),
                repr(self.ahat_over_a), repr(self.ms)]


def truth_layout(config: ExperimentConfig) -> RegionLayout:
    """Ground-truth layout on the generation lattice of width rho * A^xi."""
    det = config.detector
    area = rect_area(config.graph.domain)
    r = det.rho * area ** det.xi
    lattice = Lattice.axis_aligned(origin=config.graph.domain[:2], width=r)
    return layout_from_rects(
        lattice,
        [(reg.label, reg.theta, reg.rect) for reg in config.graph.regions],
        rho=det.rho, xi=det.xi, domain_area=area)


def detector_params(config: ExperimentConfig, truth: RegionLayout) -> GredParams:
    det = config.detector
    g = config.graph
    eta = g.p / rect_area(g.domain)
    tau0 = det.tau0 if det.tau0 is not None else default_tau0(truth)
    zeta = det.zeta if det.zeta is not None else default_zeta([r.theta for r in g.regions])
    frame = ((g.domain[0], g.domain[1]), (1.0, 0.0)) if det.known_frame else None
    return GredParams(tau0=tau0, zeta=zeta, d=g.d, rho=det.rho, xi=det.xi, eta=eta,
                      refine_factor=det.refine_factor, theta_floor=det.theta_floor,
                      known_frame=frame, k_min=det.k_min)


def snapshot_metrics(snapshots: Sequence[Snapshot], truth: RegionLayout,
                     params: GredParams, domain, trial: int,
                     wall_ms: Dict[Tuple[int, int], float]) -> List[MetricsRecord]:
    """Per-region error rows for every snapshot of one detection run."""
    records: List[MetricsRecord] = []
    base = _build_lattice(params, domain)
    true_mean_area = truth.total_area / len(truth.regions)
    for snap in snapshots:
        state = DetectionState(
            lattice=Lattice(base.origin, base.axis, snap.tau),
            domain=domain, assignments=snap.assignments, estimates=snap.estimates,
            cell_vertices={}, iteration=snap.iteration, subiteration=snap.subiteration)
        layout = state_to_layout(state, params)
        gray = len(state.gray_cells()) * snap.tau ** 2
        if layout is None:
            records.append(MetricsRecord(trial, snap.iteration, snap.subiteration,
                                         snap.tau, "none", truth.total_area, gray,
                                         0.0, wall_ms.get((snap.iteration, snap.subiteration), 0.0)))
            continue
        ahat = (sum(r.poly.area for r in layout.regions) / len(layout.regions)
                / true_mean_area)
        errs = symmetric_difference_area(truth, layout)
        ms = wall_ms.get((snap.iteration, snap.subiteration), 0.0)
        for label in sorted(errs):
            records.append(MetricsRecord(trial, snap.iteration, snap.subiteration,
                                         snap.tau, label, errs[label], gray, ahat, ms))
    return records


def write_metrics(path, records: Sequence[MetricsRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for rec in records:
            writer.writerow(rec.row())


def read_metrics(path) -> List[dict]:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


@dataclass
class ExperimentResult:
    outdir: str
    manifest_path: str
    metrics_paths: Dict[str, str]
    trial_errors: List[str]
    results: Dict[str, List[DetectionResult]]

    @property
    def fully_ok(self) -> bool:
        return not self.trial_errors


def run_experiment(config: ExperimentConfig, outdir: Optional[str] = None,
                   graph_cache: Optional[str] = None) -> ExperimentResult:
    """Run the configured experiment and write the artifact bundle.

    The graph is generated once (or loaded from ``graph_cache`` when that
    file exists); each trial samples with seed ``sampling.seed + trial``
    and runs the configured detector variant(s).  Failures inside a trial
    are recorded and the remaining trials still run.
    """
    outdir = outdir or os.environ.get("GRED_OUTPUT_DIR") or config.outputs.directory
    os.makedirs(outdir, exist_ok=True)
    truth = truth_layout(config)
    params = detector_params(config, truth)

    g = config.graph
    if graph_cache and os.path.exists(graph_cache):
        graph = SpatialGraph.load(graph_cache)
    else:
        graph = build_graph(domain=g.domain, p=g.p, d=g.d, w_min=g.w_min,
                            w_max=g.w_max, seed=g.seed, layout=truth)
        if graph_cache:
            graph.save(graph_cache)
    graph.save(os.path.join(outdir, "graph.json"))
    truth.save(os.path.join(outdir, "truth_layout.json"))
    precision = build_precision(graph, [r.theta for r in g.regions],
                                cross_coupling=g.cross_coupling)

    variants = ["basic", "convex"] if config.detector.variant == "both" \
        else [config.detector.variant]
    all_records: Dict[str, List[MetricsRecord]] = {v: [] for v in variants}
    results: Dict[str, List[DetectionResult]] = {v: [] for v in variants}
    trial_errors: List[str] = []
    timings: List[dict] = []

    for trial in range(config.trials):
        seed = config.sampling.seed + trial
        try:
            samples = sample(precision, config.sampling.n, seed)
        except Exception as exc:  # sampling failed: record and move on
            trial_errors.append(f"trial {trial}: sampling failed: {exc}")
            continue
        for variant in variants:
            t0 = time.perf_counter()
            try:
                if variant == "basic":
                    res = run_basic(samples, graph.coords, params, domain=g.domain)
                else:
                    res = run_convex(samples, graph.coords, params, domain=g.domain,
                                     convexify_when=config.detector.convexify_when)
            except Exception as exc:
                trial_errors.append(f"trial {trial}: {variant} detection failed: {exc}")
                continue
            elapsed_ms = (time.perf_counter() - t0) * 1000.0
            results[variant].append(res)
            timings.append({"trial": trial, "variant": variant, "ms": elapsed_ms})
            per_snap = elapsed_ms / max(len(res.snapshots), 1)
            wall = {(s.iteration, s.subiteration):
                    (per_snap if config.outputs.record_timings else 0.0)
                    for s in res.snapshots}
            all_records[variant].extend(
                snapshot_metrics(res.snapshots, truth, params, g.domain, trial, wall))
            res.save(os.path.join(outdir, f"trial{trial:03d}_{variant}"))

    metrics_paths = {}
    for variant in variants:
        path = os.path.join(outdir, f"metrics_{variant}.csv")
        write_metrics(path, all_records[variant])
        metrics_paths[variant] = path

    manifest = {
        "version": __version__,
        "config": config.to_json_dict(),
        "derived": {
            "tau0": params.tau0, "zeta": params.zeta, "eta": params.eta,
            "halting_width": params.halting_width(g.p),
            "trial_seeds": [config.sampling.seed + t for t in range(config.trials)],
        },
        "timings_ms": timings if config.outputs.record_timings else [],
        "trial_errors": trial_errors,
    }
    manifest_path = os.path.join(outdir, "manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=1)

    if config.outputs.render:
        from .render import render_result
        for variant in variants:
            for t, res in enumerate(results[variant]):
                render_result(res, os.path.join(outdir, f"render_trial{t:03d}_{variant}"),
                              truth=truth)
    return ExperimentResult(outdir=outdir, manifest_path=manifest_path,
                            metrics_paths=metrics_paths, trial_errors=trial_errors,
                            results=results)


def rerun_from_manifest(manifest_path: str, outdir: str) -> ExperimentResult:
    """Reproduce an experiment from its manifest into a fresh directory."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    config = ExperimentConfig.from_json_dict(manifest["config"])
    return run_experiment(config, outdir=outdir)


def area_error_series(records: Sequence[dict]) -> List[dict]:
    """Aggregate metrics rows into per-subiteration mean/std trajectories.

    Rows are grouped by (iter, sub); the symmetric-difference error is
    first summed over regions within a trial.  Returns one dict per group
    with mean and standard deviation across trials of the total error and
    of the detected-to-true area ratio.
    """
    if not records:
        raise ValueError("no metrics records")
    per_trial: Dict[Tuple[int, int], Dict[int, dict]] = {}
    for row in records:
        key = (int(row["iter"]), int(row["sub"]))
        trial = int(row["trial"])
        slot = per_trial.setdefault(key, {}).setdefault(
            trial, {"err": 0.0, "gray": float(row["gray_area"]),
                    "ahat": float(row["ahat_over_a"]), "tau": float(row["tau"])})
        slot["err"] += float(row["sym_diff_area"])
    out = []
    for key in sorted(per_trial):
        trials = per_trial[key]
        errs = np.array([t["err"] for t in trials.values()])
        ahats = np.array([t["ahat"] for t in trials.values()])
        grays = np.array([t["gray"] for t in trials.values()])
        out.append({
            "iter": key[0], "sub": key[1],
            "tau": next(iter(trials.values()))["tau"],
            "n_trials": len(trials),
            "sym_diff_mean": float(errs.mean()), "sym_diff_std": float(errs.std()),
            "ahat_over_a_mean": float(ahats.mean()), "ahat_over_a_std": float(ahats.std()),
            "gray_area_mean": float(grays.mean()),
        })
    return out


def write_series(path, series: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(series[0].keys()))
        writer.writeheader()
        for row in series:
            writer.writerow(row)


def compare_variants(series_by_variant: Dict[str, Sequence[dict]],
                     threshold: float) -> List[dict]:
    """Subiterations needed by each variant to reach a total error level."""
    out = []
    for variant, series in series_by_variant.items():
        reached = None
        for i, row in enumerate(series):
            if row["sym_diff_mean"] <= threshold:
                reached = i
                break
        out.append({"variant": variant, "threshold": threshold,
                    "subiterations_to_reach": reached,
                    "final_error": series[-1]["sym_diff_mean"] if series else None})
    return out
