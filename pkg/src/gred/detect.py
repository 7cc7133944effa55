"""Greedy region detection on a refining square lattice.

The detector estimates the local coupling inside lattice cells, declares
seeds where a 9-cell corner-touching neighborhood agrees within the
threshold, grows regions by attaching adjacent cells whose estimates
match the region estimate, refines the lattice, and halts when the cell
width reaches the boundary length quantum.  A convex variant fills the
row/column gaps of every detected region.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import ConfigError
from .estimation import estimate_theta
from .geometry import (Cell, EDGE_NEIGHBOR_OFFSETS, Lattice, Polyomino, Region,
                       RegionLayout, convexify, is_convex)
from .graphgen import Rect, rect_area

#: corner-touching ring around a seed candidate: a diamond of 8 cells whose
#: squares meet the candidate's square, and each other, only at corner nodes
#: (bounding box 5 cells, inside the required 6-cell square).
SEED_RING_OFFSETS: Tuple[Cell, ...] = (
    (0, 2), (0, -2), (2, 0), (-2, 0), (1, 1), (1, -1), (-1, 1), (-1, -1),
)

GRAY = -1


@dataclass
class GredParams:
    """Detector configuration.

    ``tau0`` is the initial cell width, ``zeta`` the agreement threshold,
    ``d`` the degree used by the coupling estimator, ``rho``/``xi`` the
    boundary-regularity constants fixing the halting width, and ``eta``
    the vertex density.  ``known_frame`` optionally pins the lattice
    origin and axis; otherwise the lattice is anchored at the lower-left
    corner of the domain, axis aligned.
    """

    tau0: float
    zeta: float
    d: int
    rho: float
    xi: float
    eta: float
    refine_factor: int = 2
    theta_floor: Optional[float] = None
    known_frame: Optional[Tuple[Tuple[float, float], Tuple[float, float]]] = None
    k_min: int = 10
    seed_ring: Tuple[Cell, ...] = SEED_RING_OFFSETS
    update_region_estimates: bool = True
    max_passes_per_level: int = 10_000

    def __post_init__(self):
        if self.tau0 <= 0 or self.zeta <= 0:
            raise ConfigError("tau0 and zeta must be positive")
        if self.refine_factor < 2:
            raise ConfigError("refine_factor must be >= 2")
        if not (0.0 < self.xi <= 0.5):
            raise ConfigError(f"xi must lie in (0, 1/2], got {self.xi}")
        if self.rho <= 0 or self.eta <= 0:
            raise ConfigError("rho and eta must be positive")
        if self.d < 1:
            raise ConfigError("d must be >= 1")

    def halting_width(self, p: int) -> float:
        """Minimal admissible lattice width rho * (p / eta)^xi."""
        return self.rho * (p / self.eta) ** self.xi


def default_tau0(layout: RegionLayout) -> float:
    """Initial width (1/3) min_s A_s / P_s from the true regions."""
    return min(r.poly.area / r.poly.perimeter for r in layout.regions) / 3.0


def default_zeta(thetas: Sequence[float]) -> float:
    """Half the minimal coupling gap."""
    vals = sorted(set(float(t) for t in thetas))
    if len(vals) < 2:
        raise ConfigError("need at least two distinct couplings for a default threshold")
    return min(b - a for a, b in zip(vals, vals[1:])) / 2.0


@dataclass(frozen=True)
class Seed:
    cell: Cell
    theta_hat: float
    region_id: int


@dataclass(frozen=True)
class Snapshot:
    """State record after one growth pass or stage."""

    iteration: int
    subiteration: int
    tau: float
    assignments: Dict[Cell, int]
    estimates: Dict[int, float]
    stage: str


@dataclass
class DetectionState:
    """Mutable detector state at one lattice resolution."""

    lattice: Lattice
    domain: Rect
    assignments: Dict[Cell, int]
    estimates: Dict[int, float]
    cell_vertices: Dict[Cell, np.ndarray]
    iteration: int = 0
    subiteration: int = 0
    convexify_stable: bool = True

    def domain_cells(self) -> Set[Cell]:
        """Cells whose square intersects the domain with positive area."""
        x0, y0, x1, y1 = self.domain
        eps = 1e-9 * self.lattice.width
        corners = np.array([[x0 + eps, y0 + eps], [x1 - eps, y0 + eps],
                            [x0 + eps, y1 - eps], [x1 - eps, y1 - eps]])
        cells = self.lattice.cells_of(corners)
        lo = cells.min(axis=0)
        hi = cells.max(axis=0)
        out = set()
        for i in range(int(lo[0]), int(hi[0]) + 1):
            for j in range(int(lo[1]), int(hi[1]) + 1):
                out.add((i, j))
        return out

    def gray_cells(self) -> List[Cell]:
        return sorted(self.domain_cells() - set(self.assignments))


@dataclass
class DetectionResult:
    """Final layout, gray cells, and the per-subiteration history."""

    layout: Optional[RegionLayout]
    gray_cells: List[Cell]
    snapshots: List[Snapshot]
    diagnostics: dict
    final_state: Optional[DetectionState] = None

    @property
    def n_regions(self) -> int:
        return 0 if self.layout is None else len(self.layout.regions)

    def save(self, directory) -> None:
        import os
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "snapshots.jsonl"), "w") as fh:
            for snap in self.snapshots:
                fh.write(json.dumps({
                    "iteration": snap.iteration, "subiteration": snap.subiteration,
                    "tau": snap.tau, "stage": snap.stage,
                    "assignments": [[list(c), r] for c, r in sorted(snap.assignments.items())],
                    "estimates": {str(k): v for k, v in sorted(snap.estimates.items())},
                }) + "\n")
        if self.layout is not None:
            self.layout.save(os.path.join(directory, "final_layout.json"))
        with open(os.path.join(directory, "detection.json"), "w") as fh:
            json.dump({"gray_cells": [list(c) for c in self.gray_cells],
                       "diagnostics": self.diagnostics}, fh, indent=1)


def _build_lattice(params: GredParams, domain: Rect) -> Lattice:
    if params.known_frame is not None:
        origin, axis = params.known_frame
        return Lattice(origin=tuple(origin), axis=tuple(axis), width=params.tau0)
    return Lattice.axis_aligned(origin=(domain[0], domain[1]), width=params.tau0)


def _index_cells(lattice: Lattice, coords: np.ndarray) -> Dict[Cell, np.ndarray]:
    cells = lattice.cells_of(coords)
    order = np.lexsort((cells[:, 1], cells[:, 0]))
    out: Dict[Cell, np.ndarray] = {}
    sorted_cells = cells[order]
    breaks = np.flatnonzero(np.any(np.diff(sorted_cells, axis=0) != 0, axis=1)) + 1
    for chunk in np.split(order, breaks):
        if len(chunk):
            c = cells[chunk[0]]
            out[(int(c[0]), int(c[1]))] = chunk
    return out


def _cell_theta(samples, state: DetectionState, cell: Cell,
                params: GredParams) -> Optional[float]:
    """Floored cell estimate, or None when the cell is unresolvable."""
    idx = state.cell_vertices.get(cell)
    if idx is None or len(idx) < max(params.k_min, 1):
        return None
    est = estimate_theta(samples, idx, params.d, floor=params.theta_floor, cell=cell)
    return est.theta_hat


def _region_theta(samples, state: DetectionState, cells: Sequence[Cell],
                  params: GredParams) -> Optional[float]:
    idx = [state.cell_vertices[c] for c in cells if c in state.cell_vertices]
    if not idx:
        return None
    merged = np.concatenate(idx)
    est = estimate_theta(samples, merged, params.d, floor=params.theta_floor)
    return est.theta_hat


class _UnionFind:
    def __init__(self):
        self.parent: Dict[int, int] = {}

    def add(self, x: int) -> None:
        self.parent.setdefault(x, x)

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        keep, drop = min(ra, rb), max(ra, rb)
        self.parent[drop] = keep
        return keep


def seed_scan(samples, coords: np.ndarray, params: GredParams,
              domain: Optional[Rect] = None) -> List[Seed]:
    """Find seed cells on the initial lattice.

    A candidate qualifies when its own estimate and the estimates of the
    8 ring cells all exist and their range is at most zeta.  Accepted
    seeds whose 9-cell patterns intersect and whose center estimates
    differ by at most zeta are merged into one region id; ids are assigned
    in sorted cell order.
    """
    state = _initial_state(samples, coords, params, domain)
    return _seed_scan_state(samples, state, params)


def _initial_state(samples, coords: np.ndarray, params: GredParams,
                   domain: Optional[Rect]) -> DetectionState:
    coords = np.asarray(coords, dtype=float)
    if domain is None:
        domain = (float(coords[:, 0].min()), float(coords[:, 1].min()),
                  float(coords[:, 0].max()), float(coords[:, 1].max()))
    lattice = _build_lattice(params, domain)
    return DetectionState(lattice=lattice, domain=domain, assignments={},
                          estimates={}, cell_vertices=_index_cells(lattice, coords))


def _seed_scan_state(samples, state: DetectionState, params: GredParams) -> List[Seed]:
    theta_cache: Dict[Cell, Optional[float]] = {}

    def theta(cell: Cell) -> Optional[float]:
        if cell not in theta_cache:
            theta_cache[cell] = _cell_theta(samples, state, cell, params)
        return theta_cache[cell]

    accepted: List[Tuple[Cell, float]] = []
    for cell in sorted(state.cell_vertices):
        values = [theta(cell)]
        for di, dj in params.seed_ring:
            values.append(theta((cell[0] + di, cell[1] + dj)))
        if any(v is None for v in values):
            continue
        if max(values) - min(values) <= params.zeta:
            accepted.append((cell, values[0]))

    # merge seeds with intersecting patterns and compatible estimates
    pattern = [(0, 0)] + list(params.seed_ring)
    diffs = {(o1[0] - o2[0], o1[1] - o2[1]) for o1 in pattern for o2 in pattern}
    uf = _UnionFind()
    for i in range(len(accepted)):
        uf.add(i)
    for i in range(len(accepted)):
        ci, ti = accepted[i]
        for j in range(i + 1, len(accepted)):
            cj, tj = accepted[j]
            if (ci[0] - cj[0], ci[1] - cj[1]) in diffs and abs(ti - tj) <= params.zeta:
                uf.union(i, j)
    groups: Dict[int, List[int]] = {}
    for i in range(len(accepted)):
        groups.setdefault(uf.find(i), []).append(i)
    seeds: List[Seed] = []
    for rid, root in enumerate(sorted(groups, key=lambda r: accepted[r][0])):
        for i in groups[root]:
            seeds.append(Seed(cell=accepted[i][0], theta_hat=accepted[i][1], region_id=rid))
    seeds.sort(key=lambda s: s.cell)
    return seeds


def _apply_seeds(state: DetectionState, seeds: List[Seed], samples,
                 params: GredParams) -> None:
    for s in seeds:
        state.assignments[s.cell] = s.region_id
    members: Dict[int, List[Cell]] = {}
    for s in seeds:
        members.setdefault(s.region_id, []).append(s.cell)
    for rid, cells in members.items():
        est = _region_theta(samples, state, cells, params)
        state.estimates[rid] = est if est is not None else 0.0


def grow_pass(state: DetectionState, samples, params: GredParams) -> bool:
    """One growth sweep; returns True when any cell was attached.

    Every unassigned domain cell edge-adjacent to a region is tested
    against the region estimates frozen at the start of the pass; a cell
    whose in-domain edge neighbors all belong to one region is attached
    unconditionally, estimate or not.  Attachments (and the region merges
    induced by cells matching several regions) are committed in sorted
    cell order, so the result does not depend on evaluation order.
    """
    domain_cells = state.domain_cells()
    frozen = dict(state.estimates)
    uf = _UnionFind()
    for rid in frozen:
        uf.add(rid)

    decisions: List[Tuple[Cell, List[int]]] = []
    for cell in sorted(domain_cells - set(state.assignments)):
        neighbor_rids = []
        in_domain = 0
        for di, dj in EDGE_NEIGHBOR_OFFSETS:
            nb = (cell[0] + di, cell[1] + dj)
            if nb not in domain_cells:
                continue
            in_domain += 1
            neighbor_rids.append(state.assignments.get(nb))
        present = [r for r in neighbor_rids if r is not None]
        if not present:
            continue
        if in_domain > 0 and len(present) == in_domain and len(set(present)) == 1:
            decisions.append((cell, [present[0]]))
            continue
        th = _cell_theta(samples, state, cell, params)
        if th is None:
            continue
        passing = sorted({r for r in present if abs(th - frozen[r]) <= params.zeta})
        if passing:
            decisions.append((cell, passing))

    changed = False
    for cell, rids in decisions:
        root = uf.find(rids[0])
        for r in rids[1:]:
            root = uf.union(root, r)
        state.assignments[cell] = root
        changed = True

    # Glue regions whose grown fronts touch while agreeing within zeta;
    # two fronts can become adjacent in one commit without any shared test
    # cell, so attachment alone cannot join them.
    merged = _merge_touching(state, frozen, uf, params.zeta)

    if changed or merged:
        remap = {rid: uf.find(rid) for rid in frozen}
        if any(k != v for k, v in remap.items()):
            state.assignments = {c: remap.get(r, r) for c, r in state.assignments.items()}
        _refresh_estimates(state, samples, params, frozen, remap=remap)
    return changed or merged


def _merge_touching(state: DetectionState, frozen: Dict[int, float],
                    uf: "_UnionFind", zeta: float) -> bool:
    """Union edge-adjacent regions whose frozen estimates differ <= zeta."""
    def root_estimate(rid: int) -> float:
        # the union keeps the minimal id, whose frozen estimate stands in
        # for the merged region within this pass
        return frozen[uf.find(rid)]

    merged = False
    while True:
        hit = False
        for cell in sorted(state.assignments):
            ra = uf.find(state.assignments[cell])
            for di, dj in EDGE_NEIGHBOR_OFFSETS:
                nb = (cell[0] + di, cell[1] + dj)
                rb_raw = state.assignments.get(nb)
                if rb_raw is None:
                    continue
                rb = uf.find(rb_raw)
                if rb == ra:
                    continue
                if abs(root_estimate(ra) - root_estimate(rb)) <= zeta:
                    ra = uf.union(ra, rb)
                    hit = True
                    merged = True
        if not hit:
            return merged


def _recompute_estimates(state: DetectionState, samples, params: GredParams) -> None:
    """Re-pool region estimates from the current member cells."""
    old = dict(state.estimates)
    members: Dict[int, List[Cell]] = {}
    for cell, rid in state.assignments.items():
        members.setdefault(rid, []).append(cell)
    state.estimates = {}
    for rid, cells in members.items():
        est = _region_theta(samples, state, sorted(cells), params)
        state.estimates[rid] = est if est is not None else old.get(rid, 0.0)


def _refresh_estimates(state: DetectionState, samples, params: GredParams,
                       frozen: Dict[int, float], remap: Dict[int, int]) -> None:
    members: Dict[int, List[Cell]] = {}
    for cell, rid in state.assignments.items():
        members.setdefault(rid, []).append(cell)
    new_estimates: Dict[int, float] = {}
    for rid, cells in members.items():
        if params.update_region_estimates:
            est = _region_theta(samples, state, sorted(cells), params)
        else:
            est = None
        if est is None:
            # no resolvable vertices (or updates disabled): carry the old value
            olds = [frozen[r] for r, root in remap.items() if root == rid and r in frozen]
            est = min(olds) if olds else frozen.get(rid, 0.0)
        new_estimates[rid] = est
    state.estimates = new_estimates


def refine(state: DetectionState, params: GredParams, coords: np.ndarray,
           p: Optional[int] = None) -> bool:
    """Halve (by ``refine_factor``) the lattice width; True when halted instead.

    Children inherit the parent's assignment.  Refinement is refused when
    the new width would drop below the halting width rho * (p / eta)^xi.
    """
    p = len(coords) if p is None else p
    f = params.refine_factor
    new_width = state.lattice.width / f
    if new_width < params.halting_width(p) * (1.0 - 1e-9):
        return True
    new_lattice = state.lattice.refined(f)
    new_assign: Dict[Cell, int] = {}
    for (i, j), rid in state.assignments.items():
        for a in range(f):
            for b in range(f):
                new_assign[(f * i + a, f * j + b)] = rid
    state.lattice = new_lattice
    state.assignments = new_assign
    state.cell_vertices = _index_cells(new_lattice, np.asarray(coords, dtype=float))
    state.iteration += 1
    state.subiteration = 0
    return False


def _snapshot(state: DetectionState, stage: str) -> Snapshot:
    return Snapshot(iteration=state.iteration, subiteration=state.subiteration,
                    tau=state.lattice.width, assignments=dict(state.assignments),
                    estimates=dict(state.estimates), stage=stage)


def state_to_layout(state: DetectionState, params: GredParams) -> Optional[RegionLayout]:
    """Convert assignments to a region layout of connected polyominoes.

    A region whose cells ended up in several connected components (possible
    when merged seeds never joined) is split, largest component first.
    """
    members: Dict[int, Set[Cell]] = {}
    for cell, rid in state.assignments.items():
        members.setdefault(rid, set()).add(cell)
    if not members:
        return None
    regions = []
    for rid in sorted(members):
        comps = _components(members[rid])
        comps.sort(key=lambda c: (-len(c), min(c)))
        for ci, comp in enumerate(comps):
            label = str(rid) if ci == 0 else f"{rid}.{ci}"
            regions.append(Region(label=label, theta=state.estimates.get(rid, 0.0),
                                  poly=Polyomino(frozenset(comp), state.lattice.width)))
    return RegionLayout(lattice=state.lattice, regions=tuple(regions),
                        rho=params.rho, xi=params.xi,
                        domain_area=rect_area(state.domain))


def _components(cells: Set[Cell]) -> List[Set[Cell]]:
    remaining = set(cells)
    comps = []
    while remaining:
        start = min(remaining)
        comp = {start}
        stack = [start]
        remaining.discard(start)
        while stack:
            i, j = stack.pop()
            for di, dj in EDGE_NEIGHBOR_OFFSETS:
                nb = (i + di, j + dj)
                if nb in remaining:
                    remaining.discard(nb)
                    comp.add(nb)
                    stack.append(nb)
        comps.append(comp)
    return comps


def _convexify_state(state: DetectionState, max_rounds: int = 50) -> bool:
    """Replace every region by its row/column gap filling, dividing overlaps.

    Each connected component is convexified; a cell claimed by several
    convexified regions (including cells the regions already own) goes to
    the claimant with the nearest centroid, lower region id on ties.  The
    nearest-centroid rule cuts every row and column linearly, which keeps
    the divided shapes row/column convex in all non-pathological overlaps;
    the fill/divide cycle repeats until stable.  Centroids are frozen at
    entry so the division is deterministic and cannot oscillate with it.
    Returns True when any cell changed hands or was added.  If the cycle
    fails to stabilize the last state is kept and flagged via the
    ``convexify_stable`` attribute.
    """
    centroids = {}
    for cell, rid in state.assignments.items():
        centroids.setdefault(rid, []).append(cell)
    centroids = {rid: np.mean(np.array(cells, dtype=float), axis=0)
                 for rid, cells in centroids.items()}
    changed_any = False
    state.convexify_stable = True
    for _ in range(max_rounds):
        members: Dict[int, Set[Cell]] = {}
        for cell, rid in state.assignments.items():
            members.setdefault(rid, set()).add(cell)
        claims: Dict[Cell, List[int]] = {}
        for rid in sorted(members):
            for comp in _components(members[rid]):
                filled = convexify(Polyomino(frozenset(comp), state.lattice.width)).cells
                for cell in filled:
                    claims.setdefault(cell, []).append(rid)
        new_assign: Dict[Cell, int] = {}
        for cell, rids in claims.items():
            if len(rids) == 1:
                new_assign[cell] = rids[0]
            else:
                pos = np.array(cell, dtype=float)
                rids.sort(key=lambda r: (float(np.sum((centroids[r] - pos) ** 2)), r))
                new_assign[cell] = rids[0]
        if new_assign == state.assignments:
            return changed_any
        state.assignments = new_assign
        changed_any = True
    state.convexify_stable = False
    return changed_any


def run_basic(samples, coords: np.ndarray, params: GredParams,
              domain: Optional[Rect] = None) -> DetectionResult:
    """Run the basic detector: seed scan, grow to fixed point, refine, halt."""
    return _run(samples, coords, params, domain, convexify_when=None)


def run_convex(samples, coords: np.ndarray, params: GredParams,
               domain: Optional[Rect] = None,
               convexify_when: str = "each_iteration") -> DetectionResult:
    """Run the convex variant: like the basic one plus region gap filling.

    ``convexify_when`` is ``"each_iteration"`` (after growth converges at
    every lattice width) or ``"at_end"`` (once, before emitting the
    result).  Output regions are convex polyominoes.
    """
    if convexify_when not in ("each_iteration", "at_end"):
        raise ConfigError(f"convexify_when must be 'each_iteration' or 'at_end', "
                          f"got {convexify_when!r}")
    return _run(samples, coords, params, domain, convexify_when=convexify_when)


def _run(samples, coords: np.ndarray, params: GredParams, domain: Optional[Rect],
         convexify_when: Optional[str]) -> DetectionResult:
    t_start = time.perf_counter()
    coords = np.asarray(coords, dtype=float)
    state = _initial_state(samples, coords, params, domain)
    seeds = _seed_scan_state(samples, state, params)
    diagnostics: dict = {
        "n_seeds": len(seeds),
        "n_seed_regions": len({s.region_id for s in seeds}),
        "passes": [],
    }
    if not seeds:
        diagnostics["reason"] = "no seeds found at the initial width"
        return DetectionResult(layout=None, gray_cells=sorted(state.domain_cells()),
                               snapshots=[], diagnostics=diagnostics, final_state=state)
    _apply_seeds(state, seeds, samples, params)
    snapshots = [_snapshot(state, "seeds")]

    while True:
        passes = 0
        while passes < params.max_passes_per_level:
            changed = grow_pass(state, samples, params)
            if not changed:
                break
            state.subiteration += 1
            passes += 1
            snapshots.append(_snapshot(state, "grow"))
        diagnostics["passes"].append({"iteration": state.iteration, "grow_passes": passes})
        if convexify_when == "each_iteration":
            if _convexify_state(state):
                _recompute_estimates(state, samples, params)
                state.subiteration += 1
                snapshots.append(_snapshot(state, "convexify"))
        halted = refine(state, params, coords)
        if halted:
            break
    if convexify_when == "at_end":
        if _convexify_state(state):
            _recompute_estimates(state, samples, params)
            state.subiteration += 1
            snapshots.append(_snapshot(state, "convexify"))
    layout = state_to_layout(state, params)
    diagnostics["wall_seconds"] = time.perf_counter() - t_start
    diagnostics["final_tau"] = state.lattice.width
    diagnostics["n_regions"] = 0 if layout is None else len(layout.regions)
    diagnostics["convexify_stable"] = state.convexify_stable
    return DetectionResult(layout=layout, gray_cells=state.gray_cells(),
                           snapshots=snapshots, diagnostics=diagnostics,
                           final_state=state)
