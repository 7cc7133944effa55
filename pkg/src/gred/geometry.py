"""Square lattices, polyominoes, and labeled region layouts.

A lattice maps between world coordinates and integer cell indices, a
polyomino is a finite edge-connected set of cells, and a region layout
bundles disjoint labeled polyominoes with their coupling parameters.
All types are immutable after construction and all operations are pure.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

Cell = Tuple[int, int]

EDGE_NEIGHBOR_OFFSETS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True)
class Lattice:
    """Axis frame for a square tiling of the plane.

    ``origin`` is the reference node, ``axis`` the unit direction of the
    first lattice axis, and ``width`` the cell side length.  Cells are
    half-open squares ``[i*w, (i+1)*w) x [j*w, (j+1)*w)`` in the frame
    spanned by ``axis`` and its 90-degree rotation, so every point in the
    plane belongs to exactly one cell.
    """

    origin: Tuple[float, float]
    axis: Tuple[float, float]
    width: float

    def __post_init__(self):
        ax, ay = self.axis
        if abs(math.hypot(ax, ay) - 1.0) > 1e-12:
            raise ValueError(f"lattice axis must be a unit vector, got {self.axis}")
        if not self.width > 0:
            raise ValueError(f"lattice width must be positive, got {self.width}")

    @classmethod
    def axis_aligned(cls, origin: Tuple[float, float] = (0.0, 0.0), width: float = 1.0) -> "Lattice":
        return cls(origin=(float(origin[0]), float(origin[1])), axis=(1.0, 0.0), width=float(width))

    @classmethod
    def from_angle(cls, origin: Tuple[float, float], angle: float, width: float) -> "Lattice":
        return cls(origin=(float(origin[0]), float(origin[1])),
                   axis=(math.cos(angle), math.sin(angle)), width=float(width))

    @property
    def angle(self) -> float:
        return math.atan2(self.axis[1], self.axis[0])

    def _frame(self) -> Tuple[np.ndarray, np.ndarray]:
        ex = np.array(self.axis)
        ey = np.array((-self.axis[1], self.axis[0]))
        return ex, ey

    def to_frame(self, points: np.ndarray) -> np.ndarray:
        """Map world points (n, 2) to fractional cell coordinates."""
        pts = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(self.origin)
        ex, ey = self._frame()
        return np.column_stack((pts @ ex, pts @ ey)) / self.width

    def cells_of(self, points: np.ndarray) -> np.ndarray:
        """Integer cell indices (n, 2) for the given world points."""
        return np.floor(self.to_frame(points)).astype(np.int64)

    def cell_of(self, point: Sequence[float]) -> Cell:
        ij = self.cells_of(np.asarray(point, dtype=float).reshape(1, 2))[0]
        return int(ij[0]), int(ij[1])

    def cell_center(self, cell: Cell) -> np.ndarray:
        ex, ey = self._frame()
        i, j = cell
        return (np.asarray(self.origin)
                + (i + 0.5) * self.width * ex
                + (j + 0.5) * self.width * ey)

    def cell_corners(self, cell: Cell) -> np.ndarray:
        """Corner coordinates (4, 2), counterclockwise from the cell origin."""
        ex, ey = self._frame()
        i, j = cell
        base = np.asarray(self.origin) + i * self.width * ex + j * self.width * ey
        w = self.width
        return np.array([base, base + w * ex, base + w * (ex + ey), base + w * ey])

    def refined(self, factor: int) -> "Lattice":
        """Same frame with the width divided by ``factor``.

        Cell (i, j) splits into the factor^2 children (factor*i + a, factor*j + b).
        """
        if factor < 2:
            raise ValueError("refinement factor must be >= 2")
        return Lattice(self.origin, self.axis, self.width / factor)


def _connected(cells: frozenset) -> bool:
    start = next(iter(cells))
    seen = {start}
    stack = [start]
    while stack:
        i, j = stack.pop()
        for di, dj in EDGE_NEIGHBOR_OFFSETS:
            nb = (i + di, j + dj)
            if nb in cells and nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(cells)


@dataclass(frozen=True)
class Polyomino:
    """Edge-connected set of lattice cells with side length ``width``."""

    cells: frozenset
    width: float = 1.0

    def __post_init__(self):
        if not self.cells:
            raise ValueError("polyomino must contain at least one cell")
        if not self.width > 0:
            raise ValueError("cell width must be positive")
        object.__setattr__(self, "cells", frozenset((int(i), int(j)) for i, j in self.cells))
        if not _connected(self.cells):
            raise ValueError("polyomino cells must be edge-connected")

    @property
    def area(self) -> float:
        return len(self.cells) * self.width ** 2

    @property
    def perimeter(self) -> float:
        exposed = 0
        for i, j in self.cells:
            for di, dj in EDGE_NEIGHBOR_OFFSETS:
                if (i + di, j + dj) not in self.cells:
                    exposed += 1
        return exposed * self.width

    @property
    def bounding_box(self) -> Tuple[int, int, int, int]:
        """(imin, jmin, imax, jmax), inclusive cell index bounds."""
        si = [c[0] for c in self.cells]
        sj = [c[1] for c in self.cells]
        return min(si), min(sj), max(si), max(sj)


def perimeter_area(poly: Polyomino) -> Tuple[float, float]:
    """Perimeter (exposed cell sides) and area of a polyomino."""
    return poly.perimeter, poly.area


def is_convex(poly: Polyomino) -> bool:
    """True iff every occupied row and column of cells is contiguous."""
    rows: Dict[int, List[int]] = {}
    cols: Dict[int, List[int]] = {}
    for i, j in poly.cells:
        rows.setdefault(j, []).append(i)
        cols.setdefault(i, []).append(j)
    for coords in list(rows.values()) + list(cols.values()):
        if max(coords) - min(coords) + 1 != len(coords):
            return False
    return True


def convexify(poly: Polyomino) -> Polyomino:
    """Minimal row- and column-convex superset of ``poly``.

    Alternates filling the occupied span of every row and every column
    until a fixed point; every added cell is forced, so the result is the
    minimal convex superset and the operation is idempotent.
    """
    cells = set(poly.cells)
    changed = True
    while changed:
        changed = False
        rows: Dict[int, List[int]] = {}
        for i, j in cells:
            rows.setdefault(j, []).append(i)
        for j, iis in rows.items():
            for i in range(min(iis), max(iis) + 1):
                if (i, j) not in cells:
                    cells.add((i, j))
                    changed = True
        cols: Dict[int, List[int]] = {}
        for i, j in cells:
            cols.setdefault(i, []).append(j)
        for i, jjs in cols.items():
            for j in range(min(jjs), max(jjs) + 1):
                if (i, j) not in cells:
                    cells.add((i, j))
                    changed = True
    return Polyomino(frozenset(cells), poly.width)


def min_inscribed_square_side(area: float, perimeter: float) -> float:
    """Guaranteed inscribed-square side 2*A/P for a convex polyomino."""
    if area <= 0 or perimeter <= 0:
        raise ValueError("area and perimeter must be positive")
    return 2.0 * area / perimeter


def boundary_sides(poly: Polyomino) -> List[float]:
    """Lengths of the maximal straight runs of the boundary, in world units.

    The boundary of a polyomino is one or more rectilinear loops (holes
    produce extra loops).  Each loop is traced with the interior kept on
    the left; consecutive collinear unit edges are merged into sides.
    """
    cells = poly.cells
    # Directed boundary edges: moving in direction d from node keeps an
    # occupied cell on the left and an empty cell on the right.
    # Directions: 0=+x, 1=+y, 2=-x, 3=-y.  Node (x, y) is a lattice corner.
    def left_right(node, d):
        x, y = node
        if d == 0:
            return (x, y), (x, y - 1)
        if d == 1:
            return (x - 1, y), (x, y)
        if d == 2:
            return (x - 1, y - 1), (x - 1, y)
        return (x, y - 1), (x - 1, y - 1)

    def step(node, d):
        x, y = node
        return ((x + 1, y), (x, y + 1), (x - 1, y), (x, y - 1))[d]

    edges = set()
    for i, j in cells:
        if (i, j - 1) not in cells:
            edges.add(((i, j), 0))        # bottom side, walked +x
        if (i + 1, j) not in cells:
            edges.add(((i + 1, j), 1))    # right side, walked +y
        if (i, j + 1) not in cells:
            edges.add(((i + 1, j + 1), 2))  # top side, walked -x
        if (i - 1, j) not in cells:
            edges.add(((i, j + 1), 3))    # left side, walked -y

    sides: List[float] = []
    while edges:
        start = min(edges)
        loop_dirs: List[int] = []
        node, d = start
        while True:
            edges.discard((node, d))
            loop_dirs.append(d)
            node = step(node, d)
            # Prefer turning left, then straight, then right: keeps the trace
            # tight at corner-touching pinch nodes.
            for nd in ((d + 1) % 4, d, (d + 3) % 4):
                lc, rc = left_right(node, nd)
                if lc in cells and rc not in cells:
                    d = nd
                    break
            else:
                raise AssertionError("boundary trace lost")  # pragma: no cover
            if (node, d) == start:
                break
        runs: List[int] = []
        run = 1
        for k in range(1, len(loop_dirs)):
            if loop_dirs[k] == loop_dirs[k - 1]:
                run += 1
            else:
                runs.append(run)
                run = 1
        runs.append(run)
        # the trace may start mid-side: merge the wrap-around run
        if len(runs) > 1 and loop_dirs[-1] == loop_dirs[0]:
            runs[0] += runs.pop()
        sides.extend(r * poly.width for r in runs)
    return sides


@dataclass(frozen=True)
class Region:
    label: str
    theta: float
    poly: Polyomino


@dataclass(frozen=True)
class LayoutReport:
    """Geometric validation flags for a region layout."""

    betas: Dict[str, float]
    beta_min: float
    beta_ok: bool                  # min beta strictly above 4
    r: Optional[float]
    sides_divisible: Optional[bool]
    side_residuals: Dict[str, float]


@dataclass(frozen=True)
class RegionLayout:
    """Disjoint labeled polyominoes on one lattice with coupling values."""

    lattice: Lattice
    regions: Tuple[Region, ...]
    rho: Optional[float] = None
    xi: Optional[float] = None
    domain_area: Optional[float] = None

    def __post_init__(self):
        seen: Dict[Cell, str] = {}
        labels = set()
        for reg in self.regions:
            if reg.label in labels:
                raise ValueError(f"duplicate region label {reg.label!r}")
            labels.add(reg.label)
            if abs(reg.poly.width - self.lattice.width) > 1e-12 * self.lattice.width:
                raise ValueError("polyomino width must match the lattice width")
            for c in reg.poly.cells:
                if c in seen:
                    raise ValueError(f"regions {seen[c]!r} and {reg.label!r} overlap at cell {c}")
                seen[c] = reg.label

    @property
    def total_area(self) -> float:
        return sum(r.poly.area for r in self.regions)

    @property
    def thetas(self) -> Dict[str, float]:
        return {r.label: r.theta for r in self.regions}

    def betas(self) -> Dict[str, float]:
        return {r.label: r.poly.perimeter / math.sqrt(r.poly.area) for r in self.regions}

    @property
    def r(self) -> Optional[float]:
        """Boundary length quantum rho * A^xi (A = domain area)."""
        if self.rho is None or self.xi is None:
            return None
        area = self.domain_area if self.domain_area is not None else self.total_area
        return self.rho * area ** self.xi

    def region(self, label: str) -> Region:
        for reg in self.regions:
            if reg.label == label:
                return reg
        raise KeyError(label)

    def validate(self) -> LayoutReport:
        betas = self.betas()
        beta_min = min(betas.values())
        r = self.r
        residuals: Dict[str, float] = {}
        divisible: Optional[bool] = None
        if r is not None:
            divisible = True
            for reg in self.regions:
                worst = 0.0
                for side in boundary_sides(reg.poly):
                    frac = side / r
                    worst = max(worst, abs(frac - round(frac)))
                residuals[reg.label] = worst
                if worst > 1e-9:
                    divisible = False
        return LayoutReport(betas=betas, beta_min=beta_min, beta_ok=beta_min > 4.0,
                            r=r, sides_divisible=divisible, side_residuals=residuals)

    # -- serialization (bit-exact round trip: floats go through repr) --

    def to_json_dict(self) -> dict:
        return {
            "lattice": {
                "origin": list(self.lattice.origin),
                "axis": list(self.lattice.axis),
                "angle": self.lattice.angle,
                "width": self.lattice.width,
            },
            "rho": self.rho,
            "xi": self.xi,
            "domain_area": self.domain_area,
            "regions": [
                {"label": reg.label, "theta": reg.theta,
                 "cells": sorted([list(c) for c in reg.poly.cells])}
                for reg in self.regions
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "RegionLayout":
        lat = Lattice(origin=tuple(d["lattice"]["origin"]),
                      axis=tuple(d["lattice"]["axis"]),
                      width=d["lattice"]["width"])
        regions = tuple(
            Region(label=str(r["label"]), theta=float(r["theta"]),
                   poly=Polyomino(frozenset(tuple(c) for c in r["cells"]), lat.width))
            for r in d["regions"]
        )
        return cls(lattice=lat, regions=regions, rho=d.get("rho"), xi=d.get("xi"),
                   domain_area=d.get("domain_area"))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "RegionLayout":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def layout_from_rects(lattice: Lattice, specs: Iterable[Tuple[str, float, Tuple[float, float, float, float]]],
                      rho: Optional[float] = None, xi: Optional[float] = None,
                      domain_area: Optional[float] = None) -> RegionLayout:
    """Build a layout from axis-frame rectangles (xmin, ymin, xmax, ymax).

    Each rectangle is converted to the set of lattice cells whose centers
    it contains, so rectangle edges should align with the lattice for an
    exact tiling.
    """
    regions = []
    for label, theta, (x0, y0, x1, y1) in specs:
        cells = set()
        lo = lattice.cells_of(np.array([[x0, y0]]))[0]
        hi = lattice.cells_of(np.array([[x1, y1]]))[0]
        for i in range(lo[0] - 1, hi[0] + 2):
            for j in range(lo[1] - 1, hi[1] + 2):
                cx, cy = lattice.cell_center((i, j))
                if x0 <= cx < x1 and y0 <= cy < y1:
                    cells.add((i, j))
        if not cells:
            raise ValueError(f"rectangle for region {label!r} contains no cell centers")
        regions.append(Region(label=str(label), theta=float(theta),
                              poly=Polyomino(frozenset(cells), lattice.width)))
    return RegionLayout(lattice=lattice, regions=tuple(regions), rho=rho, xi=xi,
                        domain_area=domain_area)


def resample_layout(layout: RegionLayout, lattice: Lattice) -> RegionLayout:
    """Re-express a layout on another lattice by cell-center membership."""
    regions = []
    for reg in layout.regions:
        corners = np.vstack([layout.lattice.cell_corners(c) for c in reg.poly.cells])
        lo = lattice.cells_of(corners).min(axis=0)
        hi = lattice.cells_of(corners).max(axis=0)
        cells = set()
        for i in range(int(lo[0]) - 1, int(hi[0]) + 2):
            for j in range(int(lo[1]) - 1, int(hi[1]) + 2):
                center = lattice.cell_center((i, j))
                if tuple(layout.lattice.cell_of(center)) in reg.poly.cells:
                    cells.add((i, j))
        if cells:
            regions.append(Region(label=reg.label, theta=reg.theta,
                                  poly=Polyomino(frozenset(cells), lattice.width)))
    return RegionLayout(lattice=lattice, regions=tuple(regions),
                        rho=layout.rho, xi=layout.xi, domain_area=layout.domain_area)


def symmetric_difference_area(a: RegionLayout, b: RegionLayout) -> Dict[str, float]:
    """Per-label symmetric-difference area between two layouts.

    Region labels need not agree: regions are matched greedily by maximal
    cell overlap.  Matched pairs are reported under the label from ``a``;
    regions left unmatched on either side are reported in full under a
    reserved ``unmatched:`` label instead of being dropped.  If the
    lattices differ, ``b`` is resampled onto ``a``'s lattice first.
    """
    if (b.lattice.width != a.lattice.width or b.lattice.origin != a.lattice.origin
            or b.lattice.axis != a.lattice.axis):
        b = resample_layout(b, a.lattice)
    w2 = a.lattice.width ** 2
    overlaps = []
    for ra in a.regions:
        for rb in b.regions:
            ov = len(ra.poly.cells & rb.poly.cells)
            if ov:
                overlaps.append((ov, ra.label, rb.label))
    overlaps.sort(key=lambda t: (-t[0], t[1], t[2]))
    matched_a: Dict[str, str] = {}
    matched_b = set()
    for ov, la, lb in overlaps:
        if la not in matched_a and lb not in matched_b:
            matched_a[la] = lb
            matched_b.add(lb)
    out: Dict[str, float] = {}
    for ra in a.regions:
        if ra.label in matched_a:
            cb = b.region(matched_a[ra.label]).poly.cells
            out[ra.label] = len(ra.poly.cells ^ cb) * w2
        else:
            out[f"unmatched:a:{ra.label}"] = len(ra.poly.cells) * w2
    for rb in b.regions:
        if rb.label not in matched_b:
            out[f"unmatched:b:{rb.label}"] = len(rb.poly.cells) * w2
    return out
