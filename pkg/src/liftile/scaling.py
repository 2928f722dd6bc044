"""Facet weights with zero torsion around every ridge, and everything built on them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space, qr
from scipy.optimize import linprog

from .complex import Complex, Star, primitive_cycles
from .errors import IncompleteStar, Infeasible, NotCanonicalInput, UnsupportedCodim
from .tiling import RidgeKind, TilingPatch, belts, classify_ridge, facet_classes

TORSION_TOL = 1e-9
NULLSPACE_RCOND = 1e-10


def _complex(patch) -> Complex:
    return patch.complex if isinstance(patch, TilingPatch) else patch


@dataclass(frozen=True, eq=False)
class Scaling:
    """One weight per facet record of the complex; boundary facets carry NaN."""

    weights: np.ndarray
    invariant: bool = False

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    def __getitem__(self, facet_id: int) -> float:
        return float(self.weights[facet_id])

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.weights)

    @property
    def mean(self) -> float:
        return float(self.weights[self.defined].mean())

    @property
    def is_positive(self) -> bool:
        return bool(np.all(self.weights[self.defined] > 0))

    def scaled(self, factor: float) -> "Scaling":
        return Scaling(self.weights * factor, self.invariant)

    def with_weight(self, facet_id: int, value: float) -> "Scaling":
        w = self.weights.copy()
        w[facet_id] = value
        return Scaling(w, False)

    @classmethod
    def constant(cls, patch, value: float = 1.0) -> "Scaling":
        cx = _complex(patch)
        w = np.full(len(cx.facets), np.nan)
        w[cx.interior_facets] = value
        return cls(w, True)

    @classmethod
    def facet_norm(cls, patch: TilingPatch) -> "Scaling":
        """s(F) = length of the facet vector across F."""
        cx = patch.complex
        w = np.full(len(cx.facets), np.nan)
        for fid in cx.interior_facets:
            w[fid] = np.linalg.norm(patch.facet_vector(fid))
        return cls(w, True)


def torsion(scaling: Scaling, patch, ridge_index: int) -> np.ndarray:
    cx = _complex(patch)
    ridge = cx.ridges[ridge_index]
    if not ridge.complete:
        raise IncompleteStar(f"ridge {ridge_index} touches the patch boundary", entity=ridge_index)
    w = scaling.weights[list(ridge.facets)]
    return w @ ridge.normals


def max_torsion(scaling: Scaling, patch, ridges=None) -> tuple[float, int | None]:
    cx = _complex(patch)
    ridges = cx.complete_ridges if ridges is None else ridges
    worst, where = 0.0, None
    for r in ridges:
        t = float(np.linalg.norm(torsion(scaling, cx, r)))
        if t > worst:
            worst, where = t, r
    return worst, where


def is_canonical(scaling: Scaling, patch) -> bool:
    if not scaling.is_positive:
        return False
    worst, _ = max_torsion(scaling, patch)
    return worst <= TORSION_TOL * scaling.mean


def _torsion_system(cx: Complex, ridges, column_of: dict[int, int], ncols: int) -> np.ndarray:
    d = cx.dim
    A = np.zeros((d * len(ridges), ncols))
    for row, r in enumerate(ridges):
        rec = cx.ridges[r]
        for fid, n in zip(rec.facets, rec.normals):
            A[row * d : (row + 1) * d, column_of[fid]] += n
    return A


def _kernel(A: np.ndarray) -> np.ndarray:
    """Orthonormal null-space basis; tall systems are first reduced to their square R factor."""
    m, n = A.shape
    if m > n:
        A = qr(A, mode="r", check_finite=False)[0][:n]
    return null_space(A, rcond=NULLSPACE_RCOND)


def _positive_point(basis: np.ndarray) -> np.ndarray | None:
    """A strictly positive vector in the column span with mean 1, or None.

    The projection of the all-ones vector is tried first (deterministic and
    symmetric); otherwise the minimum entry is maximized by a small LP.
    """
    n, k = basis.shape
    if k == 0:
        return None
    proj = basis @ (basis.T @ np.ones(n))
    if proj.mean() > 0 and proj.min() > 1e-9 * np.abs(proj).max():
        return proj / proj.mean()
    # variables (c, t): maximize t subject to basis c >= t, mean(basis c) = 1, t <= 1
    c_obj = np.zeros(k + 1)
    c_obj[-1] = -1.0
    A_ub = np.column_stack([-basis, np.ones(n)])
    A_eq = np.concatenate([basis.mean(axis=0), [0.0]])[None, :]
    res = linprog(
        c_obj, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=[1.0],
        bounds=[(None, None)] * k + [(None, 1.0)], method="highs",
    )
    if res.status != 0 or res.x[-1] <= 1e-9:
        return None
    point = basis @ res.x[:k]
    return point / point.mean()


@dataclass(frozen=True, eq=False)
class CanonicalFamily:
    """Solution cone of the torsion equations.

    ``basis`` columns span the solution space over ``facet_ids`` (rows);
    ``dim`` counts only the directions seen by facets that touch a complete
    ridge, ``unconstrained`` the facets with no complete ridge at all.
    """

    facet_ids: np.ndarray
    basis: np.ndarray
    representative: Scaling
    constrained: np.ndarray
    dim: int
    unconstrained: int
    max_torsion: float
    invariant: bool = False
    class_ids: np.ndarray | None = field(default=None, repr=False)

    def member(self, coefficients) -> Scaling:
        w = np.full_like(self.representative.weights, np.nan)
        w[self.facet_ids] = self.basis @ np.asarray(coefficients, dtype=float)
        return Scaling(w, self.invariant)


def solve_canonical(patch, invariant: bool = False) -> CanonicalFamily:
    """All zero-torsion weightings over complete ridges, plus a positive mean-1 member.

    With ``invariant=True`` one unknown per unordered facet class is used
    (requires a TilingPatch).
    """
    cx = _complex(patch)
    ridges = cx.complete_ridges
    if not ridges:
        raise Infeasible("patch has no interior ridge")
    fids = np.array(cx.interior_facets)
    constrained_set = {f for r in ridges for f in cx.ridges[r].facets}
    constrained = np.array([f in constrained_set for f in fids])
    class_ids = None
    if invariant:
        if not isinstance(patch, TilingPatch):
            raise TypeError("invariant solving needs a TilingPatch")
        classes = facet_classes(patch)
        pair_of = {f: c.pair_id for c in classes for f in c.members}
        pairs = sorted(set(pair_of.values()))
        col_of_pair = {p: i for i, p in enumerate(pairs)}
        column_of = {f: col_of_pair[pair_of[f]] for f in fids}
        A = _torsion_system(cx, ridges, column_of, len(pairs))
        class_basis = _kernel(A)
        expand = np.zeros((len(fids), len(pairs)))
        for row, f in enumerate(fids):
            expand[row, column_of[f]] = 1.0
        basis = expand @ class_basis
        class_ids = np.array([pair_of[f] for f in fids])
        used = np.array(sorted({column_of[f] for f in fids if f in constrained_set}))
        dim = int(np.linalg.matrix_rank(class_basis[used])) if len(used) and class_basis.size else 0
        unconstrained = 0
        point = _positive_point(class_basis)
        point = None if point is None else expand @ point
    else:
        column_of = {f: i for i, f in enumerate(fids)}
        A = _torsion_system(cx, ridges, column_of, len(fids))
        basis = _kernel(A)
        unconstrained = int((~constrained).sum())
        dim = int(np.linalg.matrix_rank(basis[constrained])) if basis.size else 0
        point = _positive_point(basis)
    if point is None:
        raise Infeasible("no strictly positive canonical scaling on this patch")
    w = np.full(len(cx.facets), np.nan)
    w[fids] = point
    rep = Scaling(w, invariant)
    worst, _ = max_torsion(rep, cx, ridges)
    return CanonicalFamily(fids, basis, rep, constrained, dim, unconstrained, worst, invariant, class_ids)


@dataclass(frozen=True, eq=False)
class LocalFamily:
    facet_ids: tuple[int, ...]
    basis: np.ndarray
    weights: np.ndarray  # positive representative, mean 1, aligned with facet_ids

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def ratio(self, f1: int, f2: int) -> float:
        i, j = self.facet_ids.index(f1), self.facet_ids.index(f2)
        return float(self.weights[i] / self.weights[j])


def solve_local(patch, star: Star) -> LocalFamily:
    """Canonical scalings of the facets of a complete star of a codim-2 or codim-3 face."""
    cx = _complex(patch)
    if not star.complete:
        raise IncompleteStar("star is not complete inside the patch")
    if star.codim not in (2, 3):
        raise UnsupportedCodim(f"local solve needs codim 2 or 3, got {star.codim}")
    ridges = [r for r in star.ridges if cx.ridges[r].complete]
    if not ridges:
        raise IncompleteStar("star has no complete ridge")
    fids = tuple(star.facets)
    column_of = {f: i for i, f in enumerate(fids)}
    A = _torsion_system(cx, ridges, column_of, len(fids))
    basis = _kernel(A)
    point = _positive_point(basis)
    if point is None:
        raise Infeasible("star admits no positive canonical scaling")
    return LocalFamily(fids, basis, point)


@dataclass
class GainFunction:
    """Multiplicative increments g[F1, F2] = s(F1) / s(F2) on facets sharing a ridge in one cell."""

    ratios: dict[tuple[int, int], float]

    def __getitem__(self, pair: tuple[int, int]) -> float:
        return self.ratios[pair]

    def reciprocity_residual(self) -> float:
        worst = 0.0
        for (a, b), g in self.ratios.items():
            back = self.ratios.get((b, a))
            if back is not None:
                worst = max(worst, abs(g * back - 1.0))
        return worst

    def along(self, chain) -> float | None:
        seq = list(chain)
        prod = 1.0
        for a, b in zip(seq, seq[1:]):
            g = self.ratios.get((a, b))
            if g is None:
                return None
            prod *= g
        return prod


def _cell_facet_pairs(cx: Complex):
    for c in range(len(cx.cells)):
        for r in cx.cell_ridges[c]:
            ids = cx.ridges[r].vertex_ids
            pair = [f for f in cx.cell_facets[c] if ids <= cx.facets[f].vertex_ids]
            if len(pair) == 2 and all(cx.facets[f].interior for f in pair):
                yield pair[0], pair[1], r


def gain_from_scaling(scaling: Scaling, patch) -> GainFunction:
    cx = _complex(patch)
    ratios = {}
    for a, b, _ in _cell_facet_pairs(cx):
        ratios[(a, b)] = scaling[a] / scaling[b]
        ratios[(b, a)] = scaling[b] / scaling[a]
    return GainFunction(ratios)


def gain_from_local_stars(patch) -> GainFunction:
    """Gains read off the (unique up to scale) local solutions at primitive ridges.

    Pairs meeting only at standard ridges are left undefined.
    """
    from .complex import star_of

    cx = _complex(patch)
    local: dict[int, LocalFamily] = {}
    ratios = {}
    for a, b, r in _cell_facet_pairs(cx):
        rec = cx.ridges[r]
        if not rec.complete or classify_ridge(cx, r) is not RidgeKind.PRIMITIVE:
            continue
        if r not in local:
            local[r] = solve_local(cx, star_of(cx, rec.vertex_ids))
        fam = local[r]
        ratios[(a, b)] = fam.ratio(a, b)
        ratios[(b, a)] = fam.ratio(b, a)
    return GainFunction(ratios)


@dataclass
class AdditiveIncrements:
    """Vector increments s(F) n between adjacent cells, antisymmetric in the cell pair."""

    values: dict[tuple[int, int], np.ndarray]

    def along(self, chain) -> np.ndarray | None:
        seq = list(chain)
        total = None
        for a, b in zip(seq, seq[1:]):
            v = self.values.get((a, b))
            if v is None:
                return None
            total = v.copy() if total is None else total + v
        return total


def additive_increments(scaling: Scaling, patch) -> AdditiveIncrements:
    cx = _complex(patch)
    values = {}
    for fid in cx.interior_facets:
        rec = cx.facets[fid]
        a, b = rec.cells
        values[(a, b)] = scaling[fid] * rec.normal
        values[(b, a)] = -scaling[fid] * rec.normal
    return AdditiveIncrements(values)


@dataclass
class TransferReport:
    codim: int
    kind: str
    checked: int
    skipped: int
    max_residual: float
    failures: list[tuple[int, float]]

    @property
    def passed(self) -> bool:
        return not self.failures


def verify_transfer(increments, patch, codim: int, tol: float = 1e-9) -> TransferReport:
    """Increment around every primitive cycle: product 1 (gains) or sum 0 (additive).

    Failures carry the id of the face the cycle surrounds (ridge id for codim 2,
    vertex id for codim 3).
    """
    cx = _complex(patch)
    if isinstance(increments, AdditiveIncrements):
        if codim != 2:
            raise UnsupportedCodim("additive increments are checked on cell cycles (codim 2)")
        kind = "additive"
    elif isinstance(increments, GainFunction):
        if codim != 3 or cx.dim < 3:
            raise UnsupportedCodim("gains are checked on facet cycles (codim 3, d >= 3)")
        kind = "multiplicative"
    else:
        raise TypeError("expected AdditiveIncrements or GainFunction")
    checked = skipped = 0
    worst = 0.0
    failures = []
    for chain in primitive_cycles(cx, codim):
        closed = list(chain.indices) + [chain.indices[0]]
        value = increments.along(closed)
        if value is None:
            skipped += 1
            continue
        checked += 1
        res = float(np.linalg.norm(value)) if kind == "additive" else abs(value - 1.0)
        worst = max(worst, res)
        if res > tol:
            failures.append((chain.face, res))
    return TransferReport(codim, kind, checked, skipped, worst, failures)


def make_translation_invariant(scaling: Scaling, patch: TilingPatch) -> Scaling:
    """Canonical scaling constant on translation classes, built from the base cell's weights."""
    cx = patch.complex
    if not is_canonical(scaling, patch):
        raise NotCanonicalInput("input scaling is not canonical on the patch")
    classes = facet_classes(patch)
    base_facets = cx.cell_facets[patch.base_cell_index]
    tol = TORSION_TOL * scaling.mean
    w = scaling.weights.copy()
    for cls in classes:
        if cls.class_id > cls.opposite:
            continue
        f1, f2 = base_facets[cls.class_id], base_facets[cls.opposite]
        if abs(w[f1] - w[f2]) <= tol:
            continue
        pick = min((f1, f2), key=lambda f: tuple(np.round(cx.facets[f].barycenter, 9)))
        value = w[pick]
        for f in cls.members + classes[cls.opposite].members:
            w[f] = value
        intermediate = Scaling(w.copy())
        worst, where = max_torsion(intermediate, cx)
        if worst > tol:
            raise NotCanonicalInput(
                "overwriting a parallel class broke a torsion", entity=where, residual=worst
            )
    out = np.full(len(cx.facets), np.nan)
    for cls in classes:
        for f in cls.members:
            out[f] = w[base_facets[cls.class_id]]
    result = Scaling(out, True)
    worst, where = max_torsion(result, cx)
    if worst > tol:
        raise NotCanonicalInput("translated base-cell weights are not canonical", entity=where, residual=worst)
    return result


@dataclass
class CrossLyingReport:
    applicable: bool
    reason: str = ""
    belt_checks: int = 0
    ridge_checks: int = 0
    violations: list[tuple[str, tuple, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.applicable and not self.violations


def check_cross_lying(scaling: Scaling, patch: TilingPatch, tol: float = 1e-9) -> CrossLyingReport:
    """Opposite facets of 6-belts and cross-lying facets at primitive ridges carry equal weights."""
    cx = patch.complex
    if not is_canonical(scaling, patch):
        return CrossLyingReport(False, "NotCanonicalInput")
    base = patch.base_cell_index
    local_to_fid = cx.cell_facets[base]
    fid_to_local = {f: i for i, f in enumerate(local_to_fid)}
    scale = scaling.mean
    report = CrossLyingReport(True)
    all_belts = belts(patch.cell)
    for belt in all_belts:
        if len(belt) != 6:
            continue
        for i in range(3):
            fa, fb = local_to_fid[belt[i]], local_to_fid[belt[i + 3]]
            report.belt_checks += 1
            diff = abs(scaling[fa] - scaling[fb])
            if diff > tol * scale:
                report.violations.append(("belt", (fa, fb), diff))
    for r in cx.cell_ridges[base]:
        rec = cx.ridges[r]
        if not rec.complete or len(rec.facets) != 3:
            continue
        own = [f for f in rec.facets if f in fid_to_local]
        (f0,) = [f for f in rec.facets if f not in fid_to_local]
        la, lb = fid_to_local[own[0]], fid_to_local[own[1]]
        for belt in all_belts:
            k = len(belt)
            pos = {v: i for i, v in enumerate(belt)}
            if la in pos and lb in pos and (pos[la] - pos[lb]) % k in (1, k - 1):
                for mine, other in ((la, lb), (lb, la)):
                    step = (pos[mine] - pos[other]) % k
                    f1 = local_to_fid[belt[(pos[mine] + step) % k]]
                    report.ridge_checks += 1
                    diff = abs(scaling[f1] - scaling[f0])
                    if diff > tol * scale:
                        report.violations.append(("cross", (f1, f0), diff))
                break
    return report
