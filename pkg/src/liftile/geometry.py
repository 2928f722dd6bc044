"""Convex-geometry kernel: hyperplanes, polytopes in dual form, affine maps.

Polytopes always carry both representations. Facet normals point outward and
facet inequalities read ``normal . x <= offset``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError, cKDTree

from .errors import DegenerateInput, Empty, Unbounded

GEO_TOL = 1e-9
LINALG_TOL = 1e-12


def geo_tol() -> float:
    """Incidence tolerance; ``LIFTILE_TOL`` overrides the 1e-9 default."""
    raw = os.environ.get("LIFTILE_TOL")
    if raw:
        try:
            value = float(raw)
        except ValueError:
            return GEO_TOL
        if value > 0:
            return value
    return GEO_TOL


def as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if not np.all(np.isfinite(arr)):
        raise DegenerateInput("non-finite coordinates")
    return arr


def affine_rank(points, tol: float | None = None) -> int:
    pts = as_points(points)
    if len(pts) <= 1:
        return 0
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    scale = max(1.0, float(np.abs(pts).max()))
    tol = geo_tol() if tol is None else tol
    return int(np.sum(sv > tol * scale))


def merge_points(points, tol: float | None = None) -> np.ndarray:
    """Collapse points closer than ``tol`` into their cluster mean, keeping first-seen order."""
    pts = as_points(points)
    tol = 10 * geo_tol() if tol is None else tol
    if len(pts) == 0:
        return pts
    tree = cKDTree(pts)
    labels = -np.ones(len(pts), dtype=int)
    out = []
    for i in range(len(pts)):
        if labels[i] >= 0:
            continue
        group = [j for j in tree.query_ball_point(pts[i], tol) if labels[j] < 0]
        for j in group:
            labels[j] = len(out)
        out.append(pts[group].mean(axis=0))
    return np.array(out)


def hausdorff(a, b) -> float:
    a, b = as_points(a), as_points(b)
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(max(da.max(), db.max()))


@dataclass(frozen=True, eq=False)
class Hyperplane:
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0 or not np.isfinite(norm):
            raise DegenerateInput("hyperplane normal must be nonzero")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "offset", float(self.offset) / norm)

    @classmethod
    def through(cls, normal, point) -> "Hyperplane":
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        return cls(n, float(n @ np.asarray(point, dtype=float)))

    def signed_distance(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.normal - self.offset

    def flipped(self) -> "Hyperplane":
        return Hyperplane(-self.normal, -self.offset)


class Facet(NamedTuple):
    plane: Hyperplane
    vertex_ids: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class Polytope:
    vertices: np.ndarray
    facets: tuple[Facet, ...]

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def centroid(self) -> np.ndarray:
        """Vertex mean; equals the symmetry center for centrally symmetric bodies."""
        return self.vertices.mean(axis=0)

    @property
    def normals(self) -> np.ndarray:
        return np.array([f.plane.normal for f in self.facets])

    @property
    def offsets(self) -> np.ndarray:
        return np.array([f.plane.offset for f in self.facets])

    @property
    def diameter(self) -> float:
        diff = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((diff**2).sum(-1)).max())

    @property
    def volume(self) -> float:
        return float(ConvexHull(self.vertices).volume)

    def facet_vertices(self, i: int) -> np.ndarray:
        return self.vertices[list(self.facets[i].vertex_ids)]

    def facet_barycenter(self, i: int) -> np.ndarray:
        return self.facet_vertices(i).mean(axis=0)

    def contains(self, x, tol: float | None = None) -> np.ndarray | bool:
        tol = geo_tol() if tol is None else tol
        pts = np.asarray(x, dtype=float)
        slack = pts @ self.normals.T - self.offsets
        inside = np.all(slack <= tol, axis=-1)
        return bool(inside) if pts.ndim == 1 else inside

    def translated(self, shift) -> "Polytope":
        shift = np.asarray(shift, dtype=float)
        facets = tuple(
            Facet(Hyperplane(f.plane.normal, f.plane.offset + f.plane.normal @ shift), f.vertex_ids)
            for f in self.facets
        )
        return Polytope(self.vertices + shift, facets)

    def transformed(self, amap: "AffineMap") -> "Polytope":
        if abs(amap.det) <= LINALG_TOL:
            raise DegenerateInput("cannot transform a polytope by a singular map")
        inv_t = np.linalg.inv(amap.linear).T
        facets = []
        for f in self.facets:
            n = inv_t @ f.plane.normal
            facets.append(Facet(Hyperplane(n, f.plane.offset + n @ amap.shift), f.vertex_ids))
        return Polytope(amap(self.vertices), tuple(facets))

    def check_consistency(self, tol: float | None = None) -> float:
        """Largest violation of any facet inequality or facet-incidence; 0 when consistent."""
        tol = geo_tol() if tol is None else tol
        slack = self.vertices @ self.normals.T - self.offsets
        worst = float(max(slack.max(), 0.0))
        for k, f in enumerate(self.facets):
            worst = max(worst, float(np.abs(slack[list(f.vertex_ids), k]).max()))
        return worst


def _assemble(vertices: np.ndarray, planes: Sequence[Hyperplane], tol: float | None = None) -> Polytope:
    tol = geo_tol() if tol is None else tol
    d = vertices.shape[1]
    scale = max(1.0, float(np.abs(vertices).max()))
    facets: list[Facet] = []
    seen: set[frozenset] = set()
    for plane in planes:
        dist = plane.signed_distance(vertices)
        if dist.max() > 1e2 * tol * scale:
            raise DegenerateInput("vertex outside a supporting half-space")
        on = tuple(int(i) for i in np.flatnonzero(np.abs(dist) <= 1e2 * tol * scale))
        if len(on) < d or frozenset(on) in seen:
            continue
        if affine_rank(vertices[list(on)], tol=1e2 * tol) != d - 1:
            continue
        seen.add(frozenset(on))
        facets.append(Facet(plane, on))
    return Polytope(vertices, tuple(facets))


def convex_hull(points) -> Polytope:
    pts = as_points(points)
    n, d = pts.shape
    if n < d + 1 or affine_rank(pts) < d:
        raise DegenerateInput(f"affine dimension below {d}")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateInput(str(exc)) from exc
    verts = merge_points(pts[hull.vertices])
    planes = [Hyperplane(eq[:-1], -eq[-1]) for eq in hull.equations]
    return _assemble(verts, planes)


def _chebyshev_center(normals: np.ndarray, offsets: np.ndarray) -> tuple[np.ndarray, float]:
    m, d = normals.shape
    norms = np.linalg.norm(normals, axis=1)
    c = np.zeros(d + 1)
    c[-1] = -1.0
    res = linprog(
        c,
        A_ub=np.column_stack([normals, norms]),
        b_ub=offsets,
        bounds=[(None, None)] * d + [(0, 1e6)],
        method="highs",
    )
    if res.status == 2:
        raise Empty("half-space system is infeasible")
    if res.status != 0:
        raise DegenerateInput(f"chebyshev LP failed: {res.message}")
    return res.x[:d], float(res.x[-1])


def _check_bounded(normals: np.ndarray, offsets: np.ndarray) -> None:
    d = normals.shape[1]
    for i in range(d):
        for sign in (1.0, -1.0):
            c = np.zeros(d)
            c[i] = sign
            res = linprog(c, A_ub=normals, b_ub=offsets, bounds=[(None, None)] * d, method="highs")
            if res.status == 3:
                raise Unbounded("half-space intersection is unbounded")


def halfspace_intersection(planes: Sequence[Hyperplane], interior_point=None) -> Polytope:
    """Bounded intersection of ``normal . x <= offset`` half-spaces; redundant planes dropped."""
    planes = list(planes)
    if not planes:
        raise Unbounded("no half-spaces")
    normals = np.array([p.normal for p in planes])
    offsets = np.array([p.offset for p in planes])
    d = normals.shape[1]
    center, radius = _chebyshev_center(normals, offsets)
    if radius <= geo_tol():
        raise Empty("intersection has empty interior")
    _check_bounded(normals, offsets)
    if interior_point is not None:
        ip = np.asarray(interior_point, dtype=float)
        if np.all(normals @ ip - offsets < -geo_tol()):
            center = ip
    try:
        hs = HalfspaceIntersection(np.column_stack([normals, -offsets]), center)
    except QhullError as exc:
        raise DegenerateInput(str(exc)) from exc
    verts = merge_points(hs.intersections)
    if len(verts) < d + 1:
        raise DegenerateInput("intersection is lower dimensional")
    return _assemble(verts, planes)


def project_out(points, direction_subspace) -> np.ndarray:
    """Orthogonal projection along a subspace, in an orthonormal basis of its complement."""
    pts = as_points(points)
    sub = np.atleast_2d(np.asarray(direction_subspace, dtype=float))
    if sub.size == 0:
        return pts.copy()
    if np.linalg.matrix_rank(sub, tol=LINALG_TOL * max(1.0, np.abs(sub).max())) < len(sub):
        raise DegenerateInput("direction vectors are linearly dependent")
    complement = null_space(sub)
    return pts @ complement


@dataclass(frozen=True, eq=False)
class AffineMap:
    linear: np.ndarray
    shift: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        lin = np.atleast_2d(np.asarray(self.linear, dtype=float))
        if lin.shape[0] != lin.shape[1]:
            raise DegenerateInput("affine map must be square")
        shift = np.zeros(lin.shape[0]) if self.shift is None else np.asarray(self.shift, dtype=float)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "shift", shift)

    @classmethod
    def identity(cls, d: int) -> "AffineMap":
        return cls(np.eye(d))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.linear))

    @property
    def is_nonsingular(self) -> bool:
        return abs(self.det) > LINALG_TOL

    def __call__(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.linear.T + self.shift

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """``self`` after ``inner``."""
        return AffineMap(self.linear @ inner.linear, self.linear @ inner.shift + self.shift)

    def inverse(self) -> "AffineMap":
        if not self.is_nonsingular:
            raise DegenerateInput("map is singular")
        inv = np.linalg.inv(self.linear)
        return AffineMap(inv, -inv @ self.shift)
