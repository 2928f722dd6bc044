"""The generatrix: cells lifted to affine pieces of a convex piecewise-linear function."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .complex import Chain
from .errors import InconsistentLift, InvalidWaypoint, NotAdjacent, OutsidePatch
from .geometry import geo_tol
from .scaling import Scaling
from .tiling import TilingPatch

LIFT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LiftedCell:
    """The affine function ``gradient . x + offset`` over one cell."""

    cell_index: int
    gradient: np.ndarray
    offset: float

    def __call__(self, x) -> np.ndarray | float:
        val = np.asarray(x, dtype=float) @ self.gradient + self.offset
        return float(val) if np.ndim(val) == 0 else val

    def normal(self) -> np.ndarray:
        """Normal of the lifted cell in E^{d+1}; the flat base cell gives (0, ..., 0, -1)."""
        return np.append(self.gradient, -1.0)

    def agrees_with(self, other: "LiftedCell", tol: float = LIFT_TOL) -> float:
        return float(max(np.abs(self.gradient - other.gradient).max(), abs(self.offset - other.offset)))


@dataclass(frozen=True, eq=False)
class Generatrix:
    patch: TilingPatch
    lifted: tuple[LiftedCell, ...]
    base_cell_index: int
    scaling: Scaling | None
    _tree: object = field(default=None, repr=False)

    @property
    def gradients(self) -> np.ndarray:
        return np.array([c.gradient for c in self.lifted])

    @property
    def offsets(self) -> np.ndarray:
        return np.array([c.offset for c in self.lifted])

    def locate(self, x, tol: float | None = None) -> int:
        tol = geo_tol() if tol is None else tol
        x = np.asarray(x, dtype=float)
        cells = self.patch.complex.cells
        k = min(len(cells), 2 ** self.patch.dim + 4)
        _, idx = self._tree.query(x, k=k)
        for i in np.atleast_1d(idx):
            if cells[i].contains(x, tol):
                return int(i)
        for i, c in enumerate(cells):
            if c.contains(x, tol):
                return i
        raise OutsidePatch(f"point {x.tolist()} is not covered by the patch")

    def containing_cells(self, x, tol: float | None = None) -> list[int]:
        tol = 1e2 * geo_tol() if tol is None else tol
        return [i for i, c in enumerate(self.patch.complex.cells) if c.contains(x, tol)]

    def __call__(self, x) -> float:
        return evaluate_G(self, x)


def _make_generatrix(patch, lifted, base, scaling) -> Generatrix:
    return Generatrix(patch, tuple(lifted), base, scaling, cKDTree(patch.complex.centers))


def lift_to_neighbor(source: LiftedCell, patch: TilingPatch, target: int, scaling: Scaling) -> LiftedCell:
    cx = patch.complex
    fid = cx.facet_between(source.cell_index, target)
    if fid is None:
        raise NotAdjacent(f"cells {source.cell_index} and {target} share no facet")
    rec = cx.facets[fid]
    n = rec.oriented_normal(source.cell_index)
    gradient = source.gradient + scaling[fid] * n
    x = rec.barycenter
    offset = source(x) - gradient @ x
    return LiftedCell(target, gradient, offset)


def _tree_path(parent: dict[int, int], cell: int) -> list[int]:
    path = [cell]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def build_generatrix(patch: TilingPatch, scaling: Scaling, base_cell: int | None = None) -> Generatrix:
    """Breadth-first lifting from the flat base cell, re-checking every cell reached twice."""
    cx = patch.complex
    base = patch.base_cell_index if base_cell is None else base_cell
    d = patch.dim
    lifted: dict[int, LiftedCell] = {base: LiftedCell(base, np.zeros(d), 0.0)}
    parent: dict[int, int | None] = {base: None}
    scale = max(1.0, float(np.abs(patch.complex.centers).max()))
    queue = deque([base])
    while queue:
        u = queue.popleft()
        for v in sorted(cx.neighbors(u)):
            candidate = lift_to_neighbor(lifted[u], patch, v, scaling)
            if v not in lifted:
                lifted[v] = candidate
                parent[v] = u
                queue.append(v)
                continue
            gap = candidate.agrees_with(lifted[v])
            if gap > LIFT_TOL * scale:
                cycle = _tree_path(parent, u) + _tree_path(parent, v)[::-1]
                raise InconsistentLift(
                    f"cell {v} lifted differently along two chains (gap {gap:.3g})",
                    cell=v, chain=cycle, residual=gap,
                )
    if len(lifted) != len(cx.cells):
        missing = sorted(set(range(len(cx.cells))) - set(lifted))
        raise OutsidePatch(f"cells {missing[:5]} are not connected to the base cell")
    return _make_generatrix(patch, [lifted[i] for i in range(len(cx.cells))], base, scaling)


def evaluate_G(generatrix: Generatrix, x) -> float:
    return generatrix.lifted[generatrix.locate(x)](x)


def lift_along_chain(patch: TilingPatch, scaling: Scaling, chain) -> LiftedCell:
    """Lift of the last cell of a chain starting at a flat first cell."""
    seq = list(chain.indices if isinstance(chain, Chain) else chain)
    cell = LiftedCell(seq[0], np.zeros(patch.dim), 0.0)
    for nxt in seq[1:]:
        cell = lift_to_neighbor(cell, patch, nxt, scaling)
    return cell


def chain_value_oracle(patch: TilingPatch, scaling: Scaling, chain, x, waypoints=None) -> float:
    """G(x) from the telescoping chain formula alone.

    G(x) = x . sum_i m_i - sum_i x_i . m_{i-1}, with m_i = s(P_i cap P_{i+1}) n_{i,i+1}
    and waypoints x_i on the shared facets.
    """
    cx = patch.complex
    seq = list(chain.indices if isinstance(chain, Chain) else chain)
    tol = 1e2 * geo_tol() * max(1.0, float(np.abs(cx.centers).max()))
    increments, facets = [], []
    for a, b in zip(seq, seq[1:]):
        fid = cx.facet_between(a, b)
        if fid is None:
            raise NotAdjacent(f"cells {a} and {b} share no facet")
        facets.append(fid)
        increments.append(scaling[fid] * cx.facets[fid].oriented_normal(a))
    if waypoints is None:
        waypoints = [cx.facets[f].barycenter for f in facets]
    waypoints = [np.asarray(w, dtype=float) for w in waypoints]
    if len(waypoints) != len(facets):
        raise InvalidWaypoint("one waypoint per step of the chain is required")
    for (a, b), w in zip(zip(seq, seq[1:]), waypoints):
        if not (cx.cells[a].contains(w, tol) and cx.cells[b].contains(w, tol)):
            raise InvalidWaypoint(f"waypoint {w.tolist()} is not on the facet between {a} and {b}")
    x = np.asarray(x, dtype=float)
    if not cx.cells[seq[-1]].contains(x, tol):
        raise InvalidWaypoint("x is not in the final cell of the chain")
    total = np.zeros(patch.dim)
    value = 0.0
    for w, m in zip(waypoints, increments):
        value -= w @ m
        total = total + m
    return float(x @ total + value)


def random_chain(patch: TilingPatch, start: int, target: int, rng: np.random.Generator) -> list[int]:
    """A chain from ``start`` to ``target`` through a random intermediate cell,
    each leg following a randomized breadth-first tree."""
    cx = patch.complex
    via = int(rng.integers(len(cx.cells)))

    def leg(a, b):
        parent = {a: None}
        queue = deque([a])
        while queue:
            u = queue.popleft()
            if u == b:
                break
            nbrs = list(cx.neighbors(u))
            rng.shuffle(nbrs)
            for v in nbrs:
                if v not in parent:
                    parent[v] = u
                    queue.append(v)
        return _tree_path(parent, b)

    return leg(start, via) + leg(via, target)[1:]


@dataclass
class ChainReport:
    chains: int
    max_gap: float
    worst_cell: int | None

    @property
    def passed(self) -> bool:
        return self.max_gap <= LIFT_TOL


def check_chain_independence(generatrix: Generatrix, chains_per_cell: int = 100, seed: int = 0) -> ChainReport:
    """Relift every cell along random chains and compare with the stored lift."""
    rng = np.random.default_rng(seed)
    patch, s = generatrix.patch, generatrix.scaling
    scale = max(1.0, float(np.abs(patch.complex.centers).max()))
    worst, where, count = 0.0, None, 0
    for cell in range(len(patch.complex.cells)):
        stored = generatrix.lifted[cell]
        for _ in range(chains_per_cell):
            chain = random_chain(patch, generatrix.base_cell_index, cell, rng)
            gap = lift_along_chain(patch, s, chain).agrees_with(stored) / scale
            count += 1
            if gap > worst:
                worst, where = gap, cell
    return ChainReport(count, worst, where)


def random_point_in_cell(patch: TilingPatch, cell: int, rng: np.random.Generator) -> np.ndarray:
    verts = patch.complex.cells[cell].vertices
    w = rng.dirichlet(np.ones(len(verts)))
    return w @ verts


@dataclass
class ConvexityReport:
    facets_checked: int
    min_margin: float
    worst_facet: int | None
    violations: list[int]
    samples: int
    max_midpoint_excess: float
    midpoint_failures: int

    @property
    def passed(self) -> bool:
        return not self.violations and self.midpoint_failures == 0


def facet_margins(generatrix: Generatrix, facet_id: int) -> tuple[float, float]:
    """(min margin over both cells' off-facet vertices, margin at the neighbor's center)."""
    cx = generatrix.patch.complex
    rec = cx.facets[facet_id]
    a, b = rec.cells
    ha, hb = generatrix.lifted[a], generatrix.lifted[b]
    on_facet = rec.vertex_ids
    margins = []
    for own, other, cell in ((ha, hb, a), (hb, ha, b)):
        ids = cx.cell_vertex_ids[cell]
        off = [k for k, v in enumerate(ids.tolist()) if v not in on_facet]
        pts = cx.cells[cell].vertices[off]
        margins.append(float((own(pts) - other(pts)).min()))
    center_margin = hb(cx.cells[b].centroid) - ha(cx.cells[b].centroid)
    return min(margins), float(center_margin)


def check_convexity(generatrix: Generatrix, samples: int = 1000, seed: int = 0, tol: float = 1e-9) -> ConvexityReport:
    """Per-facet dihedral test plus randomized midpoint convexity."""
    cx = generatrix.patch.complex
    worst, where, violations = np.inf, None, []
    checked = 0
    for fid in cx.interior_facets:
        m, _ = facet_margins(generatrix, fid)
        checked += 1
        if m < worst:
            worst, where = m, fid
        if m <= 0:
            violations.append(fid)
    rng = np.random.default_rng(seed)
    done, excess, failures, attempts = 0, -np.inf, 0, 0
    while done < samples and attempts < 20 * samples:
        attempts += 1
        i, j = rng.integers(len(cx.cells), size=2)
        x = random_point_in_cell(generatrix.patch, int(i), rng)
        y = random_point_in_cell(generatrix.patch, int(j), rng)
        mid = 0.5 * (x + y)
        try:
            gm = evaluate_G(generatrix, mid)
        except OutsidePatch:
            continue
        e = gm - 0.5 * (evaluate_G(generatrix, x) + evaluate_G(generatrix, y))
        excess = max(excess, e)
        if e > tol:
            failures += 1
        done += 1
    return ConvexityReport(checked, float(worst), where, violations, done, float(excess), failures)


@dataclass
class NonnegativeReport:
    min_height: float
    argmin_cell: int

    @property
    def passed(self) -> bool:
        return self.min_height >= -1e-12


def check_nonnegative(generatrix: Generatrix) -> NonnegativeReport:
    cx = generatrix.patch.complex
    best, where = np.inf, -1
    for i, cell in enumerate(cx.cells):
        h = float(np.min(generatrix.lifted[i](cell.vertices)))
        if h < best:
            best, where = h, i
    return NonnegativeReport(best, where)


def continuity_residual(generatrix: Generatrix) -> float:
    """Largest jump between adjacent affine pieces over shared facet vertices."""
    cx = generatrix.patch.complex
    worst = 0.0
    for fid in cx.interior_facets:
        rec = cx.facets[fid]
        a, b = rec.cells
        pts = cx.vertices[sorted(rec.vertex_ids)]
        worst = max(worst, float(np.abs(generatrix.lifted[a](pts) - generatrix.lifted[b](pts)).max()))
    return worst
