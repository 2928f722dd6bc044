"""Job descriptions, staged execution, reports, and the artifacts passed between stages."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import serialize
from .errors import InvalidJob, LiftileError, NotVoronoi, ResidualTooLarge
from .geometry import convex_hull
from .lift import (
    Generatrix,
    LiftedCell,
    _make_generatrix,
    build_generatrix,
    check_chain_independence,
    check_convexity,
    check_nonnegative,
)
from .scaling import Scaling, make_translation_invariant, max_torsion, solve_canonical
from .tiling import (
    Lattice,
    Parallelohedron,
    TilingPatch,
    check_minkowski,
    check_venkov_delone,
    dirichlet_cell,
    facet_classes,
    generate_patch,
)
from .voronoi import (
    check_symmetry,
    check_tangency,
    facet_system,
    recover_Q,
    reduce_to_voronoi,
    verify_voronoi,
)

_R3 = math.sqrt(3.0)

LATTICES: dict[str, list[list[float]]] = {
    "square": [[1.0, 0.0], [0.0, 1.0]],
    "hexagonal": [[1.0, 0.0], [0.5, _R3 / 2]],
    "cubic": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    "hexagonal-prism": [[1.0, 0.0, 0.0], [0.5, _R3 / 2, 0.0], [0.0, 0.0, 1.0]],
    "fcc": [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]],
    "bcc": [[-1.0, 1.0, 1.0], [1.0, -1.0, 1.0], [1.0, 1.0, -1.0]],
    "elongated": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.75]],
}

# stage name -> process exit code on hard failure
STAGES: dict[str, int] = {
    "generate": 10,
    "checks": 0,
    "solve_canonical": 20,
    "make_translation_invariant": 21,
    "build_generatrix": 30,
    "generatrix_checks": 0,
    "recover_Q": 40,
    "tangency": 0,
    "reduce": 41,
    "verify_voronoi": 50,
}
INVALID_JOB_EXIT = 2
OUTPUT_TARGETS = ("report", "patch", "scaling", "generatrix", "qform", "mesh", "table", "snapshot")


@dataclass(frozen=True)
class JobSpec:
    """Everything needed to rerun a job bit-for-bit.

    ``basis`` holds lattice generators as rows (or a preset name from ``LATTICES``).
    ``cell`` is ``"dirichlet"`` or a list of vertices. ``scaling`` is ``"solve"``,
    ``"facet-norm"``, one positive number, one weight per parallel facet pair, or
    one weight per base-cell facet in local facet order (opposite facets equal).
    """

    dimension: int
    basis: tuple
    cell: Any = "dirichlet"
    radius: int = 2
    scaling: Any = "solve"
    base_cell: tuple | None = None
    seed: int = 0
    outputs: tuple = ("report",)
    chains_per_cell: int = 10
    samples: int = 1000
    record_timing: bool = False

    def __post_init__(self):
        basis = LATTICES.get(self.basis, self.basis) if isinstance(self.basis, str) else self.basis
        object.__setattr__(self, "basis", _freeze(basis))
        if not isinstance(self.cell, str):
            object.__setattr__(self, "cell", _freeze(self.cell))
        if isinstance(self.scaling, (list, tuple)):
            object.__setattr__(self, "scaling", _freeze(self.scaling))
        if self.base_cell is not None:
            object.__setattr__(self, "base_cell", tuple(int(c) for c in self.base_cell))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        self.validate()

    def validate(self) -> None:
        d = self.dimension
        if d not in (2, 3):
            raise InvalidJob(f"dimension must be 2 or 3, got {d}")
        b = np.asarray(self.basis, dtype=float)
        if b.shape != (d, d):
            raise InvalidJob(f"lattice basis must be {d}x{d}")
        if self.radius < 1:
            raise InvalidJob("radius must be at least 1")
        if isinstance(self.cell, str):
            if self.cell != "dirichlet":
                raise InvalidJob(f"unknown cell source {self.cell!r}")
        elif np.asarray(self.cell, dtype=float).ndim != 2 or np.asarray(self.cell).shape[1] != d:
            raise InvalidJob("explicit cell vertices must be a list of d-vectors")
        if isinstance(self.scaling, str):
            if self.scaling not in ("solve", "facet-norm"):
                raise InvalidJob(f"unknown scaling source {self.scaling!r}")
        else:
            w = np.atleast_1d(np.asarray(self.scaling, dtype=float))
            if w.ndim != 1 or not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise InvalidJob("explicit weights must all be > 0")
        if self.base_cell is not None and len(self.base_cell) != d:
            raise InvalidJob("base cell coordinates need d entries")
        if any(abs(c) > self.radius for c in (self.base_cell or ())):
            raise InvalidJob("base cell lies outside the patch")
        unknown = set(self.outputs) - set(OUTPUT_TARGETS)
        if unknown:
            raise InvalidJob(f"unknown output targets {sorted(unknown)}")
        if self.seed < 0 or self.chains_per_cell < 0 or self.samples < 0:
            raise InvalidJob("seed and sample counts must be nonnegative")

    @classmethod
    def from_mapping(cls, data: dict) -> "JobSpec":
        if not isinstance(data, dict):
            raise InvalidJob("job description must be a mapping")
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise InvalidJob(f"unknown job fields {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise InvalidJob(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "JobSpec":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise InvalidJob(f"cannot parse {path}: {exc}") from exc
        return cls.from_mapping(data)

    def with_seed(self, seed: int) -> "JobSpec":
        return JobSpec.from_mapping({**self.to_dict(), "seed": int(seed)})

    def to_dict(self) -> dict:
        return {k: _thaw(v) for k, v in asdict(self).items()}


def _freeze(x):
    if isinstance(x, (list, tuple, np.ndarray)):
        return tuple(_freeze(v) for v in x)
    return float(x) if isinstance(x, (int, float, np.number)) and not isinstance(x, bool) else x


def _thaw(x):
    if isinstance(x, tuple):
        return [_thaw(v) for v in x]
    return x


# ---------------------------------------------------------------- stage bodies


def build_patch(job: JobSpec) -> TilingPatch:
    lattice = Lattice.from_rows(job.basis)
    if job.cell == "dirichlet":
        cell = dirichlet_cell(lattice)
    else:
        cell = Parallelohedron.from_polytope(convex_hull(np.asarray(job.cell, dtype=float)))
    return generate_patch(cell, lattice, job.radius)


def base_cell_index(job: JobSpec, patch: TilingPatch) -> int:
    if job.base_cell is None:
        return patch.base_cell_index
    return patch.index_of(job.base_cell)


def class_scaling(patch: TilingPatch, weights) -> Scaling:
    """Translation-invariant scaling from one number, one weight per parallel facet
    pair (ordered by pair id), or one weight per base-cell facet (opposites equal)."""
    classes = facet_classes(patch)
    pairs = sorted({c.pair_id for c in classes})
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    if w.size == 1:
        per_class = np.full(len(classes), float(w[0]))
    elif w.size == len(pairs):
        by_pair = dict(zip(pairs, w))
        per_class = np.array([by_pair[c.pair_id] for c in classes])
    elif w.size == len(classes):
        per_class = w
        for c in classes:
            if abs(w[c.class_id] - w[c.opposite]) > 1e-12 * max(1.0, abs(w[c.class_id])):
                raise InvalidJob(
                    f"facets {c.class_id} and {c.opposite} are opposite and need equal weights",
                    entity=[c.class_id, c.opposite],
                )
    else:
        raise InvalidJob(
            f"expected 1, {len(pairs)} (per parallel pair) or {len(classes)} (per facet) weights, got {w.size}"
        )
    out = np.full(len(patch.complex.facets), np.nan)
    for cls in classes:
        out[list(cls.members)] = per_class[cls.class_id]
    return Scaling(out, True)


def class_weights(patch: TilingPatch, scaling: Scaling) -> list[float]:
    base_facets = patch.complex.cell_facets[patch.base_cell_index]
    return [scaling[f] for f in base_facets]


# ---------------------------------------------------------------- reports


@dataclass
class StageResult:
    name: str
    status: str  # "pass" | "fail" | "skip"
    hard: bool
    residuals: dict = field(default_factory=dict)
    entity: Any = None
    error: str | None = None
    message: str | None = None

    def to_dict(self) -> dict:
        out = {"name": self.name, "status": self.status, "hard": self.hard, "residuals": self.residuals}
        if self.status == "fail":
            out.update(entity=self.entity, error=self.error, message=self.message)
        elif self.message:
            out["message"] = self.message
        return out


@dataclass
class Report:
    job: JobSpec
    stages: list[StageResult] = field(default_factory=list)
    family_dim: int | None = None
    Q: np.ndarray | None = None
    A: np.ndarray | None = None
    voronoi: bool | None = None
    timing: dict = field(default_factory=dict)

    @property
    def failed_stage(self) -> StageResult | None:
        return next((s for s in self.stages if s.hard and s.status == "fail"), None)

    @property
    def passed(self) -> bool:
        return self.failed_stage is None

    @property
    def exit_code(self) -> int:
        failed = self.failed_stage
        if failed is None:
            return 0
        return INVALID_JOB_EXIT if failed.error == "InvalidJob" else STAGES[failed.name]

    def stage(self, name: str) -> StageResult | None:
        return next((s for s in self.stages if s.name == name), None)

    def to_dict(self) -> dict:
        failed = self.failed_stage
        out = {
            "kind": "report",
            "job": self.job.to_dict(),
            "passed": self.passed,
            "failed_stage": None if failed is None else failed.name,
            "exit_code": self.exit_code,
            "stages": [s.to_dict() for s in self.stages],
            "family_dim": self.family_dim,
            "Q": None if self.Q is None else self.Q.tolist(),
            "A": None if self.A is None else self.A.tolist(),
            "voronoi": self.voronoi,
        }
        if self.job.record_timing:
            out["timing"] = self.timing
        return out


@dataclass
class PipelineState:
    """Intermediate products, kept so callers can export or inspect them."""

    patch: TilingPatch | None = None
    family: Any = None
    scaling: Scaling | None = None
    generatrix: Generatrix | None = None
    qform: Any = None
    amap: Any = None


class _StopPipeline(Exception):
    pass


class _Runner:
    def __init__(self, job: JobSpec, stop_after: str | None):
        if stop_after is not None and stop_after not in STAGES:
            raise InvalidJob(f"unknown stage {stop_after!r}; choose from {list(STAGES)}")
        self.report = Report(job)
        self.state = PipelineState()
        self.stop_after = stop_after

    def run(self, name: str, hard: bool, body: Callable[[StageResult], None]) -> None:
        result = StageResult(name, "pass", hard)
        start = time.perf_counter()
        try:
            body(result)
        except LiftileError as exc:
            result.status = "fail"
            result.error = type(exc).__name__
            result.message = str(exc)
            result.entity = _plain(exc.entity)
            if exc.residual is not None:
                result.residuals.setdefault("residual", float(exc.residual))
        self.report.timing[name] = time.perf_counter() - start
        self.report.stages.append(result)
        if (hard and result.status == "fail") or name == self.stop_after:
            raise _StopPipeline


def _plain(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_plain(v) for v in x]
    if isinstance(x, frozenset):
        return sorted(_plain(v) for v in x)
    return x


def run_pipeline(job: JobSpec, stop_after: str | None = None) -> tuple[Report, PipelineState]:
    """Run every stage in order, stopping at the first hard failure (or after ``stop_after``)."""
    runner = _Runner(job, stop_after)
    try:
        _run_stages(job, runner)
    except _StopPipeline:
        pass
    return runner.report, runner.state


def _run_stages(job: JobSpec, runner: _Runner) -> None:
    st, rep = runner.state, runner.report
    seed = job.seed

    def generate(res):
        st.patch = build_patch(job)
        res.residuals["cells"] = len(st.patch.complex.cells)
        res.residuals["interior_facets"] = len(st.patch.complex.interior_facets)
        res.residuals["complete_ridges"] = len(st.patch.complex.complete_ridges)

    runner.run("generate", True, generate)

    def checks(res):
        mink = check_minkowski(st.patch.cell)
        venkov = check_venkov_delone(st.patch.cell)
        res.residuals["minkowski_body"] = mink.body_residual
        res.residuals["minkowski_facets"] = max(mink.facet_residuals, default=0.0)
        res.residuals["venkov_delone_vacuous"] = venkov.vacuous
        if not (mink.passed and venkov.passed):
            res.status = "fail"
            res.error = "ClassicalConditions"
            res.entity = mink.failing_facets or [list(f) for f, _ in venkov.failures]
            res.message = "Minkowski or Venkov-Delone condition violated"

    runner.run("checks", False, checks)

    explicit = job.scaling != "solve"

    def solve(res):
        if explicit:
            res.status = "skip"
            res.message = f"scaling given as {job.scaling if isinstance(job.scaling, str) else 'explicit weights'}"
            return
        st.family = solve_canonical(st.patch)
        rep.family_dim = st.family.dim
        res.residuals["max_torsion"] = st.family.max_torsion
        res.residuals["family_dim"] = st.family.dim
        res.residuals["unconstrained_facets"] = st.family.unconstrained

    runner.run("solve_canonical", True, solve)

    def invariant(res):
        if explicit:
            res.status = "skip"
            if job.scaling == "facet-norm":
                st.scaling = Scaling.facet_norm(st.patch)
            else:
                st.scaling = class_scaling(st.patch, job.scaling)
        else:
            st.scaling = make_translation_invariant(st.family.representative, st.patch)
        worst, where = max_torsion(st.scaling, st.patch)
        res.residuals["max_torsion"] = worst
        res.residuals["worst_ridge"] = where

    runner.run("make_translation_invariant", True, invariant)

    def lift(res):
        st.generatrix = build_generatrix(st.patch, st.scaling, base_cell_index(job, st.patch))

    runner.run("build_generatrix", True, lift)

    def gen_checks(res):
        conv = check_convexity(st.generatrix, samples=job.samples, seed=seed)
        nonneg = check_nonnegative(st.generatrix)
        chains = check_chain_independence(st.generatrix, job.chains_per_cell, seed=seed)
        res.residuals.update(
            min_dihedral_margin=conv.min_margin,
            max_midpoint_excess=conv.max_midpoint_excess,
            min_height=nonneg.min_height,
            max_chain_gap=chains.max_gap,
        )
        if not (conv.passed and nonneg.passed and chains.passed):
            res.status = "fail"
            res.error = "GeneratrixCheck"
            if conv.violations:
                res.entity = conv.violations
            elif not nonneg.passed:
                res.entity = nonneg.argmin_cell
            else:
                res.entity = chains.worst_cell
            res.message = "convexity, nonnegativity or chain independence violated"

    runner.run("generatrix_checks", False, gen_checks)

    def recover(res):
        system = facet_system(st.patch, st.scaling)
        sym = check_symmetry(system)
        res.residuals["symmetry"] = sym.residual
        if not sym.passed:
            raise ResidualTooLarge("P^T M is not symmetric", entity=list(sym.worst_pair), residual=sym.residual)
        st.qform = recover_Q(system)
        res.residuals["fit"] = st.qform.residual
        rep.Q = st.qform.trace_normalized()

    runner.run("recover_Q", True, recover)

    def tangency(res):
        tang = check_tangency(st.generatrix, st.qform, st.patch, samples=min(job.samples, 200), seed=seed)
        res.residuals.update(value_gap=tang.max_value_gap, gradient_gap=tang.max_gradient_gap,
                             max_excess=tang.max_excess)
        if not tang.passed:
            res.status = "fail"
            res.error = "TangencyViolated"
            res.message = "generatrix is not inscribed in the paraboloid"

    runner.run("tangency", False, tangency)

    def reduce(res):
        st.amap = reduce_to_voronoi(rep.Q)
        rep.A = st.amap.linear
        res.residuals["min_eigenvalue"] = float(np.linalg.eigvalsh(rep.Q).min())

    runner.run("reduce", True, reduce)

    def verify(res):
        vr = verify_voronoi(st.amap, st.patch)
        rep.voronoi = vr.passed
        res.residuals.update(hausdorff=vr.hausdorff, tolerance=vr.tolerance,
                             oracle_facets=vr.oracle_facets, cell_facets=vr.cell_facets)
        if not vr.passed:
            raise NotVoronoi("mapped cell differs from the Dirichlet cell of the mapped lattice",
                             entity=st.patch.base_cell_index, residual=vr.hausdorff)

    runner.run("verify_voronoi", True, verify)


# ---------------------------------------------------------------- artifacts


def patch_artifact(job: JobSpec, patch: TilingPatch) -> dict:
    cell = patch.cell.body
    return {
        "kind": "patch",
        "job": job.to_dict(),
        "cells": len(patch.complex.cells),
        "cell_vertices": cell.vertices.tolist(),
        "cell_coords": patch.cell_coords.tolist(),
        "interior_facets": len(patch.complex.interior_facets),
        "complete_ridges": len(patch.complex.complete_ridges),
    }


def scaling_artifact(job: JobSpec, patch: TilingPatch, scaling: Scaling, family=None) -> dict:
    classes = facet_classes(patch)
    weights = class_weights(patch, scaling)
    worst, _ = max_torsion(scaling, patch)
    return {
        "kind": "scaling",
        "job": job.to_dict(),
        "weights": [[c.class_id, w] for c, w in zip(classes, weights)],
        "gauge": {
            "normalization": "mean-one" if job.scaling == "solve" else "as-given",
            "mean": scaling.mean,
            "family_dim": None if family is None else family.dim,
            "translation_invariant": scaling.invariant,
        },
        "max_torsion": worst,
    }


def generatrix_artifact(job: JobSpec, gen: Generatrix, scaling_doc: dict) -> dict:
    patch = gen.patch
    return {
        "kind": "generatrix",
        "job": job.to_dict(),
        "scaling": scaling_doc,
        "base_cell": int(gen.base_cell_index),
        "cells": [
            {"index": i, "coords": patch.cell_coords[i].tolist(), "gradient": c.gradient.tolist(), "offset": c.offset}
            for i, c in enumerate(gen.lifted)
        ],
    }


def qform_artifact(job: JobSpec, generatrix_doc: dict, report: Report) -> dict:
    return {
        "kind": "qform",
        "job": job.to_dict(),
        "generatrix": generatrix_doc,
        "Q": report.Q.tolist(),
        "A": report.A.tolist(),
    }


def load_artifact(path: str | Path, kind: str) -> dict:
    doc = serialize.read(path)
    found = doc.get("kind")
    if found != kind:
        raise InvalidJob(f"{path} holds a {found!r} artifact, expected {kind!r}")
    return doc


def scaling_from_doc(patch: TilingPatch, doc: dict) -> Scaling:
    pairs = sorted(doc["weights"], key=lambda p: p[0])
    return class_scaling(patch, [w for _, w in pairs])


def generatrix_from_doc(patch: TilingPatch, doc: dict) -> Generatrix:
    scaling = scaling_from_doc(patch, doc["scaling"])
    lifted = [LiftedCell(c["index"], np.asarray(c["gradient"], dtype=float), float(c["offset"])) for c in doc["cells"]]
    if len(lifted) != len(patch.complex.cells):
        raise InvalidJob("generatrix artifact does not match the regenerated patch")
    return _make_generatrix(patch, lifted, int(doc["base_cell"]), scaling)


def write_report(path: str | Path, report: Report) -> Path:
    return serialize.write(path, report.to_dict())
