"""Quadratic-form recovery and the affine reduction to a Dirichlet tiling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotInvariantScaling, NotPositiveDefinite, RankDeficient, ResidualTooLarge
from .geometry import AffineMap, hausdorff
from .lift import Generatrix, LiftedCell, _make_generatrix, evaluate_G, random_point_in_cell
from .scaling import Scaling
from .tiling import Lattice, TilingPatch, dirichlet_cell, facet_classes, generate_patch

SYMMETRY_TOL = 1e-9
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FacetSystem:
    """Facet vectors ``P`` and normal increments ``M`` of the base cell, as d x k columns."""

    P: np.ndarray
    M: np.ndarray
    facet_ids: tuple[int, ...]
    class_ids: tuple[int, ...]

    @property
    def k(self) -> int:
        return self.P.shape[1]


def facet_system(patch: TilingPatch, scaling: Scaling, tol: float = 1e-9) -> FacetSystem:
    cx = patch.complex
    classes = facet_classes(patch)
    for cls in classes:
        vals = scaling.weights[list(cls.members) + list(classes[cls.opposite].members)]
        if np.any(~np.isfinite(vals)) or np.ptp(vals) > tol * max(1.0, float(np.abs(vals).max())):
            raise NotInvariantScaling(f"weights vary within facet class {cls.class_id}", entity=cls.class_id)
    base = patch.base_cell_index
    fids = cx.cell_facets[base]
    P = np.column_stack([c.facet_vector for c in classes])
    M = np.column_stack([scaling[f] * cx.facets[f].oriented_normal(base) for f in fids])
    return FacetSystem(P, M, tuple(fids), tuple(c.class_id for c in classes))


@dataclass
class SymmetryReport:
    residual: float
    worst_pair: tuple[int, int]
    bound: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.bound


def check_symmetry(system: FacetSystem) -> SymmetryReport:
    S = system.P.T @ system.M
    A = np.abs(S - S.T)
    i, j = np.unravel_index(int(np.argmax(A)), A.shape)
    scale = float(np.linalg.norm(system.P, axis=0).max() * np.linalg.norm(system.M, axis=0).max())
    return SymmetryReport(float(A.max()), (int(i), int(j)), SYMMETRY_TOL * scale)


def pivot_columns(P: np.ndarray) -> list[int]:
    """Greedy pivoted elimination: repeatedly take the column with the largest residual norm."""
    d = P.shape[0]
    R = P.astype(float).copy()
    chosen: list[int] = []
    for _ in range(d):
        norms = np.linalg.norm(R, axis=0)
        norms[chosen] = -1.0
        j = int(np.argmax(norms))
        if norms[j] <= 1e-12 * max(1.0, float(np.abs(P).max())):
            raise RankDeficient("facet vectors do not span the space")
        chosen.append(j)
        q = R[:, j] / norms[j]
        R = R - np.outer(q, q @ R)
    return chosen


@dataclass(frozen=True, eq=False)
class QForm:
    Q: np.ndarray
    A: np.ndarray | None = None
    residual: float = 0.0
    asymmetry: float = 0.0

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    def value(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        val = 0.5 * np.einsum("...i,ij,...j->...", x, self.Q, x)
        return float(val) if np.ndim(val) == 0 else val

    def trace_normalized(self) -> np.ndarray:
        return self.Q * (self.dim / np.trace(self.Q))


def recover_Q(system: FacetSystem, tol: float = RESIDUAL_TOL) -> QForm:
    cols = pivot_columns(system.P)
    P0, M0 = system.P[:, cols], system.M[:, cols]
    Q = np.linalg.solve(P0.T, M0.T)
    asym = float(np.abs(Q - Q.T).max())
    Q = 0.5 * (Q + Q.T)
    residual = float(np.abs(system.M - Q @ system.P).max())
    scale = max(1.0, float(np.abs(system.M).max()))
    if residual > tol * scale:
        raise ResidualTooLarge(f"M != QP (residual {residual:.3g})", residual=residual)
    return QForm(Q, None, residual, asym)


@dataclass
class DefinitenessReport:
    eigenvalues: np.ndarray
    passed: bool
    qform: QForm


def symmetric_sqrt(Q: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(Q)
    return (vecs * np.sqrt(vals)) @ vecs.T


def check_positive_definite(q: QForm | np.ndarray) -> DefinitenessReport:
    q = q if isinstance(q, QForm) else QForm(np.asarray(q, dtype=float))
    vals = np.linalg.eigvalsh(q.Q)
    if vals.min() <= 1e-10 * abs(vals).max():
        raise NotPositiveDefinite(f"smallest eigenvalue {vals.min():.3g}", residual=float(vals.min()))
    return DefinitenessReport(vals, True, QForm(q.Q, symmetric_sqrt(q.Q), q.residual, q.asymmetry))


def reduce_to_voronoi(q: QForm | np.ndarray) -> AffineMap:
    """Linear map A with A^T A = Q (symmetric positive square root)."""
    report = check_positive_definite(q)
    return AffineMap(report.qform.A)


@dataclass
class TangencyReport:
    max_value_gap: float
    max_gradient_gap: float
    samples: int
    max_excess: float

    @property
    def passed(self) -> bool:
        return self.max_value_gap <= 1e-9 and self.max_gradient_gap <= 1e-9 and self.max_excess <= 1e-9


def check_tangency(generatrix: Generatrix, q: QForm, patch: TilingPatch | None = None,
                   samples: int = 200, seed: int = 0) -> TangencyReport:
    """G touches the form at every cell center and never exceeds it elsewhere."""
    patch = generatrix.patch if patch is None else patch
    origin = patch.centers[generatrix.base_cell_index]
    value_gap = grad_gap = 0.0
    for i, x in enumerate(patch.centers):
        rel = x - origin
        cell = generatrix.lifted[i]
        value_gap = max(value_gap, abs(cell(x) - q.value(rel)))
        grad_gap = max(grad_gap, float(np.abs(cell.gradient - q.Q @ rel).max()))
    rng = np.random.default_rng(seed)
    excess = -np.inf
    for _ in range(samples):
        c = int(rng.integers(len(patch.complex.cells)))
        y = random_point_in_cell(patch, c, rng)
        excess = max(excess, evaluate_G(generatrix, y) - q.value(y - origin))
    return TangencyReport(value_gap, grad_gap, samples, float(excess))


@dataclass
class VoronoiReport:
    hausdorff: float
    tolerance: float
    oracle_facets: int
    cell_facets: int

    @property
    def passed(self) -> bool:
        return self.hausdorff <= self.tolerance and self.oracle_facets == self.cell_facets


def verify_voronoi(amap: AffineMap, patch: TilingPatch, rel_tol: float = 1e-6) -> VoronoiReport:
    """Compare the mapped base cell with the Dirichlet cell of the mapped lattice."""
    mapped_lattice = patch.lattice.transformed(amap.linear)
    oracle = dirichlet_cell(mapped_lattice).body
    cell = patch.complex.cells[patch.base_cell_index].transformed(amap)
    a = cell.vertices - cell.centroid
    b = oracle.vertices - oracle.centroid
    dist = hausdorff(a, b)
    return VoronoiReport(dist, rel_tol * oracle.diameter, len(oracle.facets), len(cell.facets))


def voronoi_generatrix(lattice: Lattice, radius: int = 2, patch: TilingPatch | None = None) -> tuple[Generatrix, Scaling]:
    """Dirichlet tiling lifted by the tangent planes of 1/2 |x|^2 at the lattice points."""
    if patch is None:
        patch = generate_patch(dirichlet_cell(lattice), lattice, radius)
    origin = patch.centers[patch.base_cell_index]
    lifted = []
    for i, x in enumerate(patch.centers):
        rel = x - origin
        # tangent plane at rel, written in absolute coordinates
        lifted.append(LiftedCell(i, rel.copy(), float(-0.5 * rel @ rel - rel @ origin)))
    gen = _make_generatrix(patch, lifted, patch.base_cell_index, Scaling.facet_norm(patch))
    return gen, gen.scaling


def lattice_coordinates(patch: TilingPatch) -> np.ndarray:
    """Integer vector L per cell with center - base center = P L, read off a BFS tree of facet steps."""
    from collections import deque

    cx = patch.complex
    classes = facet_classes(patch)
    vectors = np.array([c.facet_vector for c in classes])
    base = patch.base_cell_index
    L = {base: np.zeros(len(classes), dtype=int)}
    queue = deque([base])
    while queue:
        u = queue.popleft()
        for v in sorted(cx.neighbors(u)):
            if v in L:
                continue
            step = patch.centers[v] - patch.centers[u]
            k = int(np.argmin(np.abs(vectors - step).max(axis=1)))
            L[v] = L[u].copy()
            L[v][k] += 1
            queue.append(v)
    return np.array([L[i] for i in range(len(cx.cells))])


def lattice_point_values(generatrix: Generatrix, system: FacetSystem) -> float:
    """Largest |G(P L) - 1/2 L P^T M L^T| over all cell centers of the patch."""
    patch = generatrix.patch
    S = system.P.T @ system.M
    worst = 0.0
    for i, L in enumerate(lattice_coordinates(patch)):
        x = patch.centers[generatrix.base_cell_index] + system.P @ L
        expected = 0.5 * L @ S @ L
        worst = max(worst, abs(generatrix.lifted[i](x) - expected))
    return worst
