"""Matplotlib rendering of detection states and error trajectories.

Figures are written to files (SVG for state panels, so the lattice stays
a vector drawing); nothing here opens a window.
"""
from __future__ import annotations

import os
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.collections import LineCollection, PatchCollection
from matplotlib.patches import Rectangle

from .detect import DetectionResult, Snapshot
from .geometry import Lattice, RegionLayout

_COLORS = plt.get_cmap("tab10").colors


def _boundary_segments(layout: RegionLayout):
    """World-coordinate boundary edges of every region in a layout."""
    segs = []
    lat = layout.lattice
    for reg in layout.regions:
        cells = reg.poly.cells
        for (i, j) in cells:
            # four sides, each drawn when the neighbor is missing
            for (di, dj), (c0, c1) in (
                ((0, -1), ((0, 0), (1, 0))),
                ((1, 0), ((1, 0), (1, 1))),
                ((0, 1), ((1, 1), (0, 1))),
                ((-1, 0), ((0, 1), (0, 0))),
            ):
                if (i + di, j + dj) not in cells:
                    corners = lat.cell_corners((i, j))
                    base = corners[0]
                    ex = corners[1] - corners[0]
                    ey = corners[3] - corners[0]
                    p0 = base + c0[0] * ex + c0[1] * ey
                    p1 = base + c1[0] * ex + c1[1] * ey
                    segs.append((tuple(p0), tuple(p1)))
    return segs


def render_state(lattice: Lattice, assignments: Dict, domain,
                 path: str, truth: Optional[RegionLayout] = None,
                 title: Optional[str] = None) -> str:
    """Draw one detection state: lattice, colored regions, gray cells.

    ``assignments`` maps cells to region ids; all other lattice cells
    inside the domain are drawn gray.  True region boundaries, when given,
    are overlaid as black lines.  Returns the written path.
    """
    x0, y0, x1, y1 = domain
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.set_xlim(x0, x1)
    ax.set_ylim(y0, y1)
    ax.set_aspect("equal")
    w = lattice.width

    patches, colors = [], []
    lo = lattice.cells_of([[x0 + 1e-9, y0 + 1e-9]])[0]
    hi = lattice.cells_of([[x1 - 1e-9, y1 - 1e-9]])[0]
    for i in range(int(lo[0]), int(hi[0]) + 1):
        for j in range(int(lo[1]), int(hi[1]) + 1):
            corners = lattice.cell_corners((i, j))
            rid = assignments.get((i, j))
            patches.append(Rectangle(corners[0], w, w))
            if rid is None:
                colors.append((0.75, 0.75, 0.75, 1.0))
            else:
                c = _COLORS[rid % len(_COLORS)]
                colors.append((c[0], c[1], c[2], 0.85))
    ax.add_collection(PatchCollection(patches, facecolors=colors,
                                      edgecolors=(0.4, 0.3, 0.5, 0.5), linewidths=0.3))
    if truth is not None:
        ax.add_collection(LineCollection(_boundary_segments(truth),
                                         colors="black", linewidths=1.2))
    if title:
        ax.set_title(title)
    fig.savefig(path, format=os.path.splitext(path)[1].lstrip(".") or "svg")
    plt.close(fig)
    return path


def render_result(result: DetectionResult, outdir: str,
                  truth: Optional[RegionLayout] = None) -> Sequence[str]:
    """Render every snapshot of a detection run as iter{t}_{sub}.svg."""
    os.makedirs(outdir, exist_ok=True)
    if result.final_state is None:
        return []
    base = result.final_state.lattice
    paths = []
    for snap in result.snapshots:
        lat = Lattice(base.origin, base.axis, snap.tau)
        path = os.path.join(outdir, f"iter{snap.iteration}_{snap.subiteration}.svg")
        render_state(lat, snap.assignments, result.final_state.domain, path,
                     truth=truth, title=f"iteration {snap.iteration}"
                                        f" ({snap.stage} {snap.subiteration}),"
                                        f" tau={snap.tau:g}")
        paths.append(path)
    return paths


def plot_error_series(series_by_variant: Dict[str, Sequence[dict]], path: str) -> str:
    """Mean area-error trajectories, one line per variant."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    for variant, series in series_by_variant.items():
        xs = range(len(series))
        ax1.plot(xs, [row["sym_diff_mean"] for row in series], marker="o",
                 markersize=3, label=variant)
        ax2.plot(xs, [row["ahat_over_a_mean"] for row in series], marker="o",
                 markersize=3, label=variant)
    ax1.set_xlabel("subiteration")
    ax1.set_ylabel("total symmetric-difference area")
    ax2.set_xlabel("subiteration")
    ax2.set_ylabel("detected / true mean region area")
    ax2.axhline(1.0, color="gray", linewidth=0.8, linestyle="--")
    for ax in (ax1, ax2):
        ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_bounds_table(rows: Sequence[dict], path: str) -> str:
    """Log-log view of the necessary and sufficient sample counts."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ps = [row["p"] for row in rows]
    for key, label in (("theorem1_necessary", "necessary, whole graph"),
                       ("theorem2_necessary_polyomino", "necessary, regions (polyomino)"),
                       ("theorem2_necessary_polygon", "necessary, regions (polygon)"),
                       ("gred_sufficient", "sufficient, greedy detector")):
        ax.loglog(ps, [row[key] for row in rows], marker="o", markersize=3, label=label)
    ax.set_xlabel("p")
    ax.set_ylabel("samples n")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
