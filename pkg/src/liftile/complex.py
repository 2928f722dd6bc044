"""Polyhedral complex over a finite set of cells.

Cells are glued by identifying vertices that coincide up to a small radius.
Facets are then matched by their vertex sets, ridges ((d-2)-faces) by the
vertex sets common to two facets of one cell. Incidence of lower faces
follows from facet adjacency, which for embedded tilings is ordinary
point-set incidence.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.linalg import null_space
from scipy.spatial import cKDTree

from .errors import FaceNotFound, IncompleteStar, NotFaceToFace, UnsupportedCodim
from .geometry import Polytope, affine_rank, geo_tol

MERGE_RADIUS = 1e-7


@dataclass(frozen=True, eq=False)
class FacetRecord:
    index: int
    cells: tuple[int, int]  # second entry is -1 for a boundary facet
    vertex_ids: frozenset
    normal: np.ndarray  # unit, pointing from cells[0] towards cells[1]
    offset: float
    barycenter: np.ndarray
    local: tuple[int, int]

    @property
    def interior(self) -> bool:
        return self.cells[1] >= 0

    def oriented_normal(self, source: int) -> np.ndarray:
        if source == self.cells[0]:
            return self.normal
        if source == self.cells[1]:
            return -self.normal
        raise ValueError(f"cell {source} is not incident to facet {self.index}")

    def other(self, cell: int) -> int:
        a, b = self.cells
        return b if cell == a else a


@dataclass(frozen=True, eq=False)
class RidgeRecord:
    """A (d-2)-face. For complete ridges ``cells``/``facets`` are in fan order:
    facet ``facets[i]`` separates ``cells[i]`` from ``cells[i+1]`` and
    ``normals[i]`` is its unit normal pointing from ``cells[i]`` to ``cells[i+1]``.
    """

    index: int
    vertex_ids: frozenset
    barycenter: np.ndarray
    cells: tuple[int, ...]
    facets: tuple[int, ...]
    complete: bool
    normals: np.ndarray | None = None
    plane_basis: np.ndarray | None = None


@dataclass(frozen=True)
class Chain:
    indices: tuple[int, ...]
    level: str = "cell"  # "cell" or "facet"
    face: int | None = None


@dataclass(frozen=True, eq=False)
class Star:
    center_ids: frozenset
    center: np.ndarray
    codim: int
    cells: tuple[int, ...]
    facets: tuple[int, ...]
    ridges: tuple[int, ...]
    complete: bool


@dataclass(frozen=True, eq=False)
class Complex:
    cells: tuple[Polytope, ...]
    vertices: np.ndarray
    cell_vertex_ids: tuple[np.ndarray, ...]
    facets: tuple[FacetRecord, ...]
    ridges: tuple[RidgeRecord, ...]
    cell_facets: tuple[tuple[int, ...], ...]
    cell_ridges: tuple[tuple[int, ...], ...]
    _adjacency: dict = field(default_factory=dict, repr=False)
    _vertex_cells: dict = field(default_factory=dict, repr=False)
    _tree: object = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def centers(self) -> np.ndarray:
        return np.array([c.centroid for c in self.cells])

    @property
    def interior_facets(self) -> list[int]:
        return [f.index for f in self.facets if f.interior]

    @property
    def complete_ridges(self) -> list[int]:
        return [r.index for r in self.ridges if r.complete]

    def neighbors(self, cell: int) -> dict[int, int]:
        """Adjacent cell -> shared facet record id."""
        return self._adjacency.get(cell, {})

    def facet_between(self, a: int, b: int) -> int | None:
        return self._adjacency.get(a, {}).get(b)

    def cells_with_vertices(self, ids) -> set[int]:
        ids = list(ids)
        if not ids:
            return set()
        out = set(self._vertex_cells.get(ids[0], ()))
        for v in ids[1:]:
            out &= set(self._vertex_cells.get(v, ()))
        return out

    def find_vertices(self, points, tol: float | None = None) -> list[int]:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tol = 10 * MERGE_RADIUS if tol is None else tol
        dist, idx = self._tree.query(pts)
        if np.any(dist > tol * max(1.0, float(np.abs(pts).max()))):
            raise FaceNotFound("face vertices do not occur in the complex")
        return [int(i) for i in idx]

    def chain_is_valid(self, chain: Chain) -> bool:
        seq = chain.indices
        return all(self.facet_between(a, b) is not None for a, b in zip(seq, seq[1:]))


def _merge_vertices(cells: list[Polytope]) -> tuple[np.ndarray, list[np.ndarray]]:
    stacked = np.vstack([c.vertices for c in cells])
    scale = max(1.0, float(np.abs(stacked).max()))
    tree = cKDTree(stacked)
    labels = -np.ones(len(stacked), dtype=int)
    reps = []
    for i in range(len(stacked)):
        if labels[i] >= 0:
            continue
        for j in tree.query_ball_point(stacked[i], MERGE_RADIUS * scale):
            if labels[j] < 0:
                labels[j] = len(reps)
        reps.append(stacked[i])
    ids, start = [], 0
    for c in cells:
        ids.append(labels[start : start + len(c.vertices)])
        start += len(c.vertices)
    return np.array(reps), ids


def _cell_edges(cell: Polytope) -> np.ndarray:
    """Edge direction vectors of a 3-polytope (pairs of facets meeting in 2 vertices)."""
    out = []
    sets = [set(f.vertex_ids) for f in cell.facets]
    for a, b in combinations(range(len(sets)), 2):
        common = sets[a] & sets[b]
        if len(common) == 2:
            i, j = sorted(common)
            out.append(cell.vertices[j] - cell.vertices[i])
    return np.array(out) if out else np.zeros((0, cell.dim))


def _separated(a: Polytope, b: Polytope, edges_a, edges_b, tol: float) -> bool:
    if np.any((b.vertices @ a.normals.T - a.offsets).min(axis=0) >= -tol):
        return True
    if np.any((a.vertices @ b.normals.T - b.offsets).min(axis=0) >= -tol):
        return True
    if a.dim != 3 or len(edges_a) == 0 or len(edges_b) == 0:
        return False
    axes = np.cross(edges_a[:, None, :], edges_b[None, :, :]).reshape(-1, 3)
    norms = np.linalg.norm(axes, axis=1)
    axes = axes[norms > 1e-9] / norms[norms > 1e-9, None]
    pa = a.vertices @ axes.T
    pb = b.vertices @ axes.T
    gap = np.maximum(pb.min(axis=0) - pa.max(axis=0), pa.min(axis=0) - pb.max(axis=0))
    return bool(np.any(gap >= -tol))


def _check_face_to_face(cells, vids, tol: float) -> None:
    centers = np.array([c.centroid for c in cells])
    radius = max(float(np.linalg.norm(c.vertices - c.centroid, axis=1).max()) for c in cells)
    edges = [_cell_edges(c) if c.dim == 3 else None for c in cells]
    for i, j in sorted(cKDTree(centers).query_pairs(2 * radius + tol)):
        a, b = cells[i], cells[j]
        if not _separated(a, b, edges[i], edges[j], tol):
            raise NotFaceToFace(f"cells {i} and {j} overlap", entity=(i, j))
        in_b = set(vids[i][b.contains(a.vertices, tol)].tolist())
        in_a = set(vids[j][a.contains(b.vertices, tol)].tolist())
        if in_a != in_b:
            raise NotFaceToFace(f"cells {i} and {j} do not meet in a common face", entity=(i, j))


def _fan_order(d, ridge_pts, bary, facet_ids, facet_cells, facets_geo):
    """Cyclic ordering of the facets around a complete ridge in its normal 2-plane."""
    if d == 2:
        basis = np.eye(2)
    else:
        _, _, vt = np.linalg.svd(ridge_pts - bary)
        basis = null_space(vt[: d - 2])
    angles = []
    for fid in facet_ids:
        rec = facets_geo[fid]
        u2 = (rec.barycenter - bary) @ basis
        angles.append(np.arctan2(u2[1], u2[0]))
    order = np.argsort(angles)
    ordered = [facet_ids[k] for k in order]
    normals = []
    for fid in ordered:
        rec = facets_geo[fid]
        u2 = (rec.barycenter - bary) @ basis
        n2 = rec.normal @ basis
        n = rec.normal if (u2[0] * n2[1] - u2[1] * n2[0]) > 0 else -rec.normal
        normals.append(n)
    k = len(ordered)
    cells = []
    for i in range(k):
        prev_f, this_f = ordered[i - 1], ordered[i]
        common = set(facet_cells[prev_f]) & set(facet_cells[this_f])
        if len(common) != 1:
            return None
        cells.append(common.pop())
    # cells[i] lies between ordered[i-1] and ordered[i]; normals[i] points from cells[i] to cells[i+1]
    return tuple(ordered), tuple(cells), np.array(normals), basis


def build_complex(cells, check_overlaps: bool = True) -> Complex:
    cells = list(cells)
    if not cells:
        raise NotFaceToFace("empty cell list")
    d = cells[0].dim
    tol = geo_tol()
    scale = max(1.0, max(float(np.abs(c.vertices).max()) for c in cells))
    vertices, vids = _merge_vertices(cells)

    owners: dict[frozenset, list[tuple[int, int]]] = defaultdict(list)
    for ci, cell in enumerate(cells):
        for li, f in enumerate(cell.facets):
            owners[frozenset(vids[ci][list(f.vertex_ids)].tolist())].append((ci, li))

    facets: list[FacetRecord] = []
    cell_facets = [[-1] * len(c.facets) for c in cells]
    adjacency: dict[int, dict[int, int]] = defaultdict(dict)
    for key, own in owners.items():
        if len(own) > 2:
            raise NotFaceToFace(f"facet shared by {len(own)} cells", entity=[c for c, _ in own])
        (ca, la) = own[0]
        plane = cells[ca].facets[la].plane
        bary = cells[ca].facet_barycenter(la)
        if len(own) == 2:
            (cb, lb) = own[1]
            if plane.normal @ cells[cb].facets[lb].plane.normal > -1 + 1e3 * tol:
                raise NotFaceToFace(f"cells {ca} and {cb} lie on one side of a shared facet", entity=(ca, cb))
            if ca > cb:
                (ca, la), (cb, lb) = (cb, lb), (ca, la)
                plane = cells[ca].facets[la].plane
            rec = FacetRecord(len(facets), (ca, cb), key, plane.normal, plane.offset, bary, (la, lb))
            adjacency[ca][cb] = rec.index
            adjacency[cb][ca] = rec.index
            cell_facets[cb][lb] = rec.index
        else:
            rec = FacetRecord(len(facets), (ca, -1), key, plane.normal, plane.offset, bary, (la, -1))
        cell_facets[ca][la] = rec.index
        facets.append(rec)

    if check_overlaps:
        _check_face_to_face(cells, vids, 1e2 * tol * scale)

    ridge_cells: dict[frozenset, set] = defaultdict(set)
    ridge_facets: dict[frozenset, set] = defaultdict(set)
    ridge_order: list[frozenset] = []
    for ci, cell in enumerate(cells):
        sets = [set(vids[ci][list(f.vertex_ids)].tolist()) for f in cell.facets]
        for a, b in combinations(range(len(sets)), 2):
            common = sets[a] & sets[b]
            if len(common) < d - 1:
                continue
            if affine_rank(vertices[sorted(common)]) != d - 2:
                continue
            key = frozenset(common)
            if key not in ridge_cells:
                ridge_order.append(key)
            ridge_cells[key].add(ci)
            ridge_facets[key].update((cell_facets[ci][a], cell_facets[ci][b]))

    ridges: list[RidgeRecord] = []
    cell_ridges = [[] for _ in cells]
    facet_cells = {f.index: f.cells for f in facets}
    for key in ridge_order:
        fids = sorted(ridge_facets[key])
        rcells = sorted(ridge_cells[key])
        pts = vertices[sorted(key)]
        bary = pts.mean(axis=0)
        complete = all(facets[f].interior for f in fids) and len(fids) == len(rcells) and len(fids) >= 3
        normals = basis = None
        if complete:
            fan = _fan_order(d, pts, bary, fids, facet_cells, facets)
            if fan is None:
                complete = False
            else:
                fids, rcells, normals, basis = list(fan[0]), list(fan[1]), fan[2], fan[3]
        rec = RidgeRecord(len(ridges), key, bary, tuple(rcells), tuple(fids), complete, normals, basis)
        for c in ridge_cells[key]:
            cell_ridges[c].append(rec.index)
        ridges.append(rec)

    vertex_cells: dict[int, list[int]] = defaultdict(list)
    for ci, ids in enumerate(vids):
        for v in ids.tolist():
            vertex_cells[v].append(ci)

    return Complex(
        cells=tuple(cells),
        vertices=vertices,
        cell_vertex_ids=tuple(vids),
        facets=tuple(facets),
        ridges=tuple(ridges),
        cell_facets=tuple(tuple(x) for x in cell_facets),
        cell_ridges=tuple(tuple(x) for x in cell_ridges),
        _adjacency=dict(adjacency),
        _vertex_cells=dict(vertex_cells),
        _tree=cKDTree(vertices),
    )


def ridge_fan(complex_: Complex, ridge_index: int) -> list[tuple[int, np.ndarray]]:
    ridge = complex_.ridges[ridge_index]
    if not ridge.complete:
        raise IncompleteStar(f"ridge {ridge_index} touches the patch boundary", entity=ridge_index)
    return [(f, n) for f, n in zip(ridge.facets, ridge.normals)]


def star_of(complex_: Complex, face) -> Star:
    """Star of a face given by its vertex coordinates or a set of global vertex ids."""
    if isinstance(face, (set, frozenset)):
        ids = frozenset(int(i) for i in face)
    else:
        ids = frozenset(complex_.find_vertices(face))
    cells = complex_.cells_with_vertices(ids)
    if not cells:
        raise FaceNotFound("no cell contains the face")
    pts = complex_.vertices[sorted(ids)]
    codim = complex_.dim - affine_rank(pts)
    facet_ids, complete = set(), True
    for c in cells:
        for fid in complex_.cell_facets[c]:
            rec = complex_.facets[fid]
            if ids <= rec.vertex_ids:
                facet_ids.add(fid)
                if not rec.interior:
                    complete = False
    if codim < 1 or not facet_ids:
        raise FaceNotFound("point set is not a face of the complex")
    ridge_ids = sorted({r for c in cells for r in complex_.cell_ridges[c] if ids <= complex_.ridges[r].vertex_ids})
    return Star(ids, pts.mean(axis=0), codim, tuple(sorted(cells)), tuple(sorted(facet_ids)), tuple(ridge_ids), complete)


def vertex_stars(complex_: Complex) -> list[Star]:
    """Stars of all vertices, in vertex-id order."""
    return [star_of(complex_, frozenset([v])) for v in range(len(complex_.vertices))]


def _cell_cycle_around(complex_: Complex, cell: int, center: frozenset) -> list[int]:
    """Facets of ``cell`` containing ``center``, ordered so consecutive ones share a ridge."""
    fids = [f for f in complex_.cell_facets[cell] if center <= complex_.facets[f].vertex_ids]
    adj = defaultdict(list)
    for r in complex_.cell_ridges[cell]:
        rec = complex_.ridges[r]
        if not center <= rec.vertex_ids:
            continue
        pair = [f for f in fids if rec.vertex_ids <= complex_.facets[f].vertex_ids]
        if len(pair) == 2:
            adj[pair[0]].append(pair[1])
            adj[pair[1]].append(pair[0])
    if not fids:
        return []
    cycle, prev = [fids[0]], None
    while True:
        nxt = [f for f in adj[cycle[-1]] if f != prev]
        if not nxt:
            return []
        prev = cycle[-1]
        if nxt[0] == cycle[0]:
            break
        cycle.append(nxt[0])
        if len(cycle) > len(fids):
            return []
    return cycle


def primitive_cycles(complex_: Complex, codim: int) -> list[Chain]:
    """Closed chains around interior faces.

    codim 2: one cycle of cells per complete ridge, in fan order.
    codim 3 (d = 3): facet-level cycles around each vertex with a complete star,
    one per incident cell (its facets through the vertex) and one per incident
    ridge (the ridge fan); these generate every facet cycle in the vertex star.
    """
    d = complex_.dim
    if codim == 2:
        return [Chain(r.cells, "cell", r.index) for r in complex_.ridges if r.complete]
    if codim == 3 and d == 3:
        out = []
        for star in vertex_stars(complex_):
            if not star.complete:
                continue
            (v,) = tuple(star.center_ids)
            for c in star.cells:
                cyc = _cell_cycle_around(complex_, c, star.center_ids)
                if cyc:
                    out.append(Chain(tuple(cyc), "facet", v))
            for r in star.ridges:
                out.append(Chain(complex_.ridges[r].facets, "facet", v))
        return out
    raise UnsupportedCodim(f"codim {codim} is not supported in dimension {d}")
