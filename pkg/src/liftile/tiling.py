"""Lattice tilings by parallelohedra: Dirichlet cells, finite patches, classical checks."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .complex import Complex, build_complex
from .errors import AnomalousRidge, DegenerateInput, IncompleteStar, NotFaceToFace
from .geometry import (
    Hyperplane,
    Polytope,
    affine_rank,
    geo_tol,
    halfspace_intersection,
    hausdorff,
    project_out,
)


@dataclass(frozen=True, eq=False)
class Lattice:
    basis: np.ndarray  # columns are generators

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if b.shape[0] != b.shape[1]:
            raise DegenerateInput("lattice basis must be square")
        if abs(np.linalg.det(b)) <= 1e-12:
            raise DegenerateInput("lattice basis is singular")
        object.__setattr__(self, "basis", b)

    @classmethod
    def from_rows(cls, rows) -> "Lattice":
        return cls(np.asarray(rows, dtype=float).T)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def covolume(self) -> float:
        return abs(float(np.linalg.det(self.basis)))

    def point(self, coords) -> np.ndarray:
        return np.asarray(coords, dtype=float) @ self.basis.T

    def transformed(self, linear) -> "Lattice":
        return Lattice(np.asarray(linear, dtype=float) @ self.basis)


def lll_reduce(basis: np.ndarray, delta: float = 0.75) -> np.ndarray:
    """LLL reduction of the column basis; returns a new column basis of the same lattice."""
    b = [np.array(col, dtype=float) for col in np.asarray(basis, dtype=float).T]
    n = len(b)

    def gram_schmidt():
        bs, mu = [], np.zeros((n, n))
        for i in range(n):
            v = b[i].copy()
            for j in range(i):
                mu[i, j] = b[i] @ bs[j] / (bs[j] @ bs[j])
                v -= mu[i, j] * bs[j]
            bs.append(v)
        return bs, mu

    bs, mu = gram_schmidt()
    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            q = round(mu[k, j])
            if q:
                b[k] = b[k] - q * b[j]
                bs, mu = gram_schmidt()
        if bs[k] @ bs[k] >= (delta - mu[k, k - 1] ** 2) * (bs[k - 1] @ bs[k - 1]):
            k += 1
        else:
            b[k], b[k - 1] = b[k - 1], b[k]
            bs, mu = gram_schmidt()
            k = max(k - 1, 1)
    return np.column_stack(b)


@dataclass(frozen=True, eq=False)
class Parallelohedron:
    body: Polytope
    center: np.ndarray

    @classmethod
    def from_polytope(cls, body: Polytope) -> "Parallelohedron":
        return cls(body, body.centroid)

    @property
    def dim(self) -> int:
        return self.body.dim

    def centered(self) -> "Parallelohedron":
        return Parallelohedron(self.body.translated(-self.center), np.zeros(self.dim))


def dirichlet_cell(lattice: Lattice) -> Parallelohedron:
    """Voronoi cell of the origin, from all bisectors within the safe search radius."""
    reduced = lll_reduce(lattice.basis)
    radius = 2.0 * float(np.linalg.norm(reduced, axis=0).max())
    inv = np.linalg.inv(reduced)
    bound = np.ceil(radius * np.linalg.norm(inv, axis=1)).astype(int)
    ranges = [range(-m, m + 1) for m in bound]
    coords = np.array(list(itertools.product(*ranges)), dtype=float)
    vecs = coords @ reduced.T
    norms = np.linalg.norm(vecs, axis=1)
    keep = (norms > 1e-12) & (norms <= radius * (1 + 1e-12))
    planes = [Hyperplane(v, 0.5 * (v @ v)) for v in vecs[keep]]
    body = halfspace_intersection(planes, np.zeros(lattice.dim))
    return Parallelohedron(body, np.zeros(lattice.dim))


@dataclass(frozen=True)
class FacetClass:
    class_id: int
    normal: np.ndarray
    facet_vector: np.ndarray
    opposite: int
    members: tuple[int, ...] = ()

    @property
    def pair_id(self) -> int:
        return min(self.class_id, self.opposite)


@dataclass(frozen=True, eq=False)
class TilingPatch:
    complex: Complex
    lattice: Lattice
    cell_coords: np.ndarray
    base_cell_index: int
    cell: Parallelohedron
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.lattice.dim

    @property
    def centers(self) -> np.ndarray:
        return self.lattice.point(self.cell_coords)

    def index_of(self, coords) -> int | None:
        return self._index.get(tuple(int(c) for c in coords))

    def facet_vector(self, facet_id: int) -> np.ndarray:
        """Center-to-center vector across a facet, oriented like the record's normal."""
        a, b = self.complex.facets[facet_id].cells
        return self.centers[b] - self.centers[a]


def generate_patch(cell: Parallelohedron, lattice: Lattice, radius: int) -> TilingPatch:
    """Translates of ``cell`` by lattice vectors with coordinates in the sup-norm ball.

    The cell is recentered so its symmetry center sits on the lattice point.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if cell.dim != lattice.dim:
        raise DegenerateInput("cell and lattice dimensions differ")
    body = cell.centered().body
    vol = body.volume
    if abs(vol - lattice.covolume) > 1e-7 * max(vol, lattice.covolume):
        raise NotFaceToFace(
            f"cell volume {vol:.12g} differs from lattice covolume {lattice.covolume:.12g}",
            residual=abs(vol - lattice.covolume),
        )
    d = lattice.dim
    coords = np.array(list(itertools.product(range(-radius, radius + 1), repeat=d)), dtype=int)
    cells = [body.translated(lattice.point(c)) for c in coords]
    complex_ = build_complex(cells)
    index = {tuple(int(x) for x in c): i for i, c in enumerate(coords)}
    base = index[(0,) * d]
    return TilingPatch(complex_, lattice, coords, base, Parallelohedron(body, np.zeros(d)), index)


def facet_classes(patch: TilingPatch) -> list[FacetClass]:
    """Directed translation classes, one per facet of the base cell (in local facet order)."""
    cx = patch.complex
    base = patch.base_cell_index
    centers = patch.centers
    vectors, normals = [], []
    for li, fid in enumerate(cx.cell_facets[base]):
        rec = cx.facets[fid]
        if not rec.interior:
            raise IncompleteStar("base cell is not surrounded by the patch", entity=fid)
        vectors.append(centers[rec.other(base)] - centers[base])
        normals.append(rec.oriented_normal(base))
    vectors = np.array(vectors)
    scale = max(1.0, float(np.abs(vectors).max()))
    tol = 1e2 * geo_tol() * scale

    def lookup(v):
        dist = np.abs(vectors - v).max(axis=1)
        k = int(np.argmin(dist))
        return k if dist[k] <= tol else None

    opposite = []
    for v in vectors:
        k = lookup(-v)
        if k is None:
            raise NotFaceToFace("facet vectors of the base cell are not closed under negation")
        opposite.append(k)
    members: list[list[int]] = [[] for _ in vectors]
    for fid in cx.interior_facets:
        k = lookup(patch.facet_vector(fid))
        if k is None:
            raise NotFaceToFace("interior facet is not a translate of a base-cell facet", entity=fid)
        members[k].append(fid)
    return [
        FacetClass(i, normals[i], vectors[i], opposite[i], tuple(members[i]))
        for i in range(len(vectors))
    ]


def facet_class_map(patch: TilingPatch, classes: list[FacetClass] | None = None) -> dict[int, int]:
    """Interior facet record id -> unordered class-pair id."""
    classes = facet_classes(patch) if classes is None else classes
    return {fid: c.pair_id for c in classes for fid in c.members}


@dataclass
class MinkowskiReport:
    body_symmetric: bool
    facets_symmetric: bool
    body_residual: float
    facet_residuals: list[float]
    failing_facets: list[int]

    @property
    def passed(self) -> bool:
        return self.body_symmetric and self.facets_symmetric


def check_minkowski(cell: Parallelohedron | Polytope) -> MinkowskiReport:
    body = cell.body if isinstance(cell, Parallelohedron) else cell
    tol = 1e2 * geo_tol() * max(1.0, body.diameter)
    c = body.centroid
    body_res = hausdorff(body.vertices, 2 * c - body.vertices)
    residuals, failing = [], []
    for i in range(len(body.facets)):
        pts = body.facet_vertices(i)
        fc = pts.mean(axis=0)
        r = hausdorff(pts, 2 * fc - pts)
        residuals.append(r)
        if r > tol:
            failing.append(i)
    return MinkowskiReport(body_res <= tol, not failing, body_res, residuals, failing)


def polytope_ridges(body: Polytope) -> list[tuple[int, int, frozenset]]:
    """(facet a, facet b, vertex ids) for every (d-2)-face of a single polytope."""
    d = body.dim
    sets = [set(f.vertex_ids) for f in body.facets]
    out = []
    for a, b in itertools.combinations(range(len(sets)), 2):
        common = sets[a] & sets[b]
        if len(common) >= d - 1 and affine_rank(body.vertices[sorted(common)]) == d - 2:
            out.append((a, b, frozenset(common)))
    return out


def classify_polygon(points2d) -> str:
    pts = np.asarray(points2d, dtype=float)
    try:
        hull = ConvexHull(pts)
    except (QhullError, ValueError):
        return "degenerate"
    poly = pts[hull.vertices]
    # drop collinear hull vertices
    keep = []
    n = len(poly)
    scale = max(1.0, float(np.abs(poly).max()))
    for i in range(n):
        a, b, c = poly[i - 1], poly[i], poly[(i + 1) % n]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if abs(cross) > 1e-9 * scale * scale:
            keep.append(b)
    poly = np.array(keep)
    n = len(poly)
    tol = 1e2 * geo_tol() * scale
    symmetric = hausdorff(poly, 2 * poly.mean(axis=0) - poly) <= tol
    if n == 4 and symmetric:
        return "parallelogram"
    if n == 6 and symmetric:
        return "cs-hexagon"
    if n == 3:
        return "triangle"
    return f"{n}-gon"


@dataclass
class VenkovDeloneReport:
    passed: bool
    vacuous: bool
    shadows: list[tuple[tuple[int, int], str]]

    @property
    def failures(self) -> list[tuple[tuple[int, int], str]]:
        return [s for s in self.shadows if s[1] not in ("parallelogram", "cs-hexagon")]


def check_venkov_delone(cell: Parallelohedron | Polytope) -> VenkovDeloneReport:
    """Shadow of the cell along each (d-2)-face must be a parallelogram or a cs-hexagon."""
    body = cell.body if isinstance(cell, Parallelohedron) else cell
    if body.dim == 2:
        return VenkovDeloneReport(True, True, [])
    shadows = []
    for a, b, ids in polytope_ridges(body):
        pts = body.vertices[sorted(ids)]
        _, _, vt = np.linalg.svd(pts - pts.mean(axis=0))
        directions = vt[: body.dim - 2]
        shape = classify_polygon(project_out(body.vertices, directions))
        shadows.append(((a, b), shape))
    passed = all(s in ("parallelogram", "cs-hexagon") for _, s in shadows)
    return VenkovDeloneReport(passed, False, shadows)


class RidgeKind(str, enum.Enum):
    PRIMITIVE = "primitive"
    STANDARD = "standard"


def classify_ridge(patch: TilingPatch | Complex, ridge_index: int) -> RidgeKind:
    cx = patch.complex if isinstance(patch, TilingPatch) else patch
    ridge = cx.ridges[ridge_index]
    if not ridge.complete:
        raise IncompleteStar(f"ridge {ridge_index} touches the patch boundary", entity=ridge_index)
    k = len(ridge.facets)
    if k == 3:
        return RidgeKind.PRIMITIVE
    if k == 4:
        n = ridge.normals
        tol = 1e3 * geo_tol()
        if abs(abs(n[0] @ n[2]) - 1) <= tol and abs(abs(n[1] @ n[3]) - 1) <= tol:
            return RidgeKind.STANDARD
    raise AnomalousRidge(f"ridge {ridge_index} has {k} facets", entity=ridge_index)


def belts(cell: Parallelohedron | Polytope) -> list[tuple[int, ...]]:
    """All belts of the cell as cycles of local facet indices.

    A belt is followed by crossing each facet to the ridge opposite (through
    the facet's center) to the one it was entered by.
    """
    body = cell.body if isinstance(cell, Parallelohedron) else cell
    ridges = polytope_ridges(body)
    by_key = {ids: (a, b) for a, b, ids in ridges}
    verts = body.vertices
    tol = 1e3 * geo_tol() * max(1.0, body.diameter)

    def opposite_ridge(facet: int, ids: frozenset) -> frozenset | None:
        fc = body.facet_barycenter(facet)
        targets = 2 * fc - verts[sorted(ids)]
        fids = list(body.facets[facet].vertex_ids)
        mirrored = set()
        for t in targets:
            dist = np.linalg.norm(verts[fids] - t, axis=1)
            k = int(np.argmin(dist))
            if dist[k] > tol:
                return None
            mirrored.add(fids[k])
        key = frozenset(mirrored)
        return key if key in by_key else None

    seen: set[frozenset] = set()
    out = []
    for a, b, ids in ridges:
        if ids in seen:
            continue
        cycle, facet, ridge = [], a, ids
        while True:
            seen.add(ridge)
            cycle.append(facet)
            nxt = opposite_ridge(facet, ridge)
            if nxt is None:
                cycle = []
                break
            seen.add(nxt)
            fa, fb = by_key[nxt]
            facet = fb if fa == facet else fa
            ridge = nxt
            if ridge == ids:
                break
            if len(cycle) > len(body.facets):
                cycle = []
                break
        if cycle:
            out.append(tuple(cycle))
    return out


def six_belts(cell: Parallelohedron | Polytope, patch: TilingPatch | None = None) -> list[tuple[int, ...]]:
    return [b for b in belts(cell) if len(b) == 6]
