"""Command-line front end.

Every stage subcommand reads the artifact written by the previous one (``--in``)
or starts from a job description (``--spec``), and writes its own artifact into
``--out``. ``pipeline`` runs all stages and writes ``report.json``.

Set ``LIFTILE_TOL`` to override the geometric tolerance (default 1e-9).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import serialize
from .errors import InvalidJob, LiftileError
from .export import FORMATS, export_surface
from .geometry import AffineMap
from .lift import build_generatrix
from .pipeline import (
    INVALID_JOB_EXIT,
    STAGES,
    JobSpec,
    Report,
    base_cell_index,
    build_patch,
    class_scaling,
    generatrix_artifact,
    generatrix_from_doc,
    load_artifact,
    patch_artifact,
    qform_artifact,
    run_pipeline,
    scaling_artifact,
    scaling_from_doc,
    write_report,
)
from .scaling import Scaling, make_translation_invariant, solve_canonical
from .voronoi import check_symmetry, facet_system, recover_Q, reduce_to_voronoi, verify_voronoi

EXPORT_EXIT = 60
UPSTREAM = {"scale": "patch", "lift": "scaling", "reduce": "generatrix", "verify": "qform", "export": "generatrix"}


class StageFailed(Exception):
    def __init__(self, stage: str, error: LiftileError):
        super().__init__(f"{stage}: {type(error).__name__}: {error}")
        self.stage = stage
        self.error = error


def _guard(stage: str, fn, *args):
    try:
        return fn(*args)
    except LiftileError as exc:
        raise StageFailed(stage, exc) from exc


def _job(args, doc: dict | None = None) -> JobSpec:
    if doc is not None:
        job = JobSpec.from_mapping(doc["job"])
    elif args.spec:
        job = JobSpec.load(args.spec)
    else:
        raise InvalidJob("give --spec or --in")
    return job.with_seed(args.seed) if args.seed is not None else job


def _input(args, kind: str) -> dict | None:
    return load_artifact(args.input, kind) if args.input else None


def _out(args, name: str) -> Path:
    return Path(args.out) / name


def _scale(job: JobSpec, patch):
    if job.scaling == "solve":
        family = _guard("solve_canonical", solve_canonical, patch)
        return _guard("make_translation_invariant", make_translation_invariant, family.representative, patch), family
    if job.scaling == "facet-norm":
        return Scaling.facet_norm(patch), None
    return _guard("make_translation_invariant", class_scaling, patch, job.scaling), None


def cmd_generate(args) -> int:
    job = _job(args)
    patch = _guard("generate", build_patch, job)
    path = serialize.write(_out(args, "patch.json"), patch_artifact(job, patch))
    print(f"generate: {len(patch.complex.cells)} cells -> {path}")
    return 0


def _scaling_doc(args):
    doc = _input(args, "patch")
    job = _job(args, doc)
    patch = _guard("generate", build_patch, job)
    scaling, family = _scale(job, patch)
    return job, patch, scaling_artifact(job, patch, scaling, family)


def cmd_scale(args) -> int:
    _, _, sdoc = _scaling_doc(args)
    path = serialize.write(_out(args, "scaling.json"), sdoc)
    print(f"scale: max torsion {sdoc['max_torsion']:.3g} -> {path}")
    return 0


def _generatrix(args):
    if args.input:
        sdoc = load_artifact(args.input, "scaling")
        job = _job(args, sdoc)
        patch = _guard("generate", build_patch, job)
    else:
        job, patch, sdoc = _scaling_doc(args)
    scaling = scaling_from_doc(patch, sdoc)
    gen = _guard("build_generatrix", build_generatrix, patch, scaling, base_cell_index(job, patch))
    return job, gen, generatrix_artifact(job, gen, sdoc)


def cmd_lift(args) -> int:
    _, gen, gdoc = _generatrix(args)
    path = serialize.write(_out(args, "generatrix.json"), gdoc)
    print(f"lift: {len(gen.lifted)} lifted cells -> {path}")
    return 0


def _loaded_generatrix(args):
    if args.input:
        gdoc = load_artifact(args.input, "generatrix")
        job = _job(args, gdoc)
        patch = _guard("generate", build_patch, job)
        return job, generatrix_from_doc(patch, gdoc), gdoc
    return _generatrix(args)


def _qform(job, gen, gdoc):
    report = Report(job)

    def recover():
        system = facet_system(gen.patch, gen.scaling)
        sym = check_symmetry(system)
        q = recover_Q(system)
        return sym, q

    sym, q = _guard("recover_Q", recover)
    report.Q = q.trace_normalized()
    report.A = _guard("reduce", reduce_to_voronoi, report.Q).linear
    doc = qform_artifact(job, gdoc, report)
    doc["symmetry_residual"] = sym.residual
    doc["fit_residual"] = q.residual
    return doc


def cmd_reduce(args) -> int:
    job, gen, gdoc = _loaded_generatrix(args)
    doc = _qform(job, gen, gdoc)
    path = serialize.write(_out(args, "qform.json"), doc)
    print(f"reduce: Q = {np.round(np.asarray(doc['Q']), 6).tolist()} -> {path}")
    return 0


def cmd_verify(args) -> int:
    if args.input:
        doc = load_artifact(args.input, "qform")
        job = _job(args, doc)
    else:
        job, gen, gdoc = _loaded_generatrix(args)
        doc = _qform(job, gen, gdoc)
    patch = _guard("generate", build_patch, job)
    vr = verify_voronoi(AffineMap(np.asarray(doc["A"], dtype=float)), patch)
    out = {
        "kind": "verify",
        "job": job.to_dict(),
        "voronoi": vr.passed,
        "hausdorff": vr.hausdorff,
        "tolerance": vr.tolerance,
        "oracle_facets": vr.oracle_facets,
        "cell_facets": vr.cell_facets,
    }
    path = serialize.write(_out(args, "verify.json"), out)
    print(f"verify: {'pass' if vr.passed else 'FAIL'} (hausdorff {vr.hausdorff:.3g}) -> {path}")
    return 0 if vr.passed else STAGES["verify_voronoi"]


def cmd_export(args) -> int:
    _, gen, _ = _loaded_generatrix(args)
    path = _guard("export", export_surface, gen, args.format, args.out)
    print(f"export: {args.format} -> {path}")
    return 0


def cmd_pipeline(args) -> int:
    job = _job(args)
    report, state = run_pipeline(job, stop_after=args.stage)
    out = Path(args.out)
    write_report(out / "report.json", report)
    wanted = set(job.outputs)
    sdoc = gdoc = None
    if state.patch is not None and "patch" in wanted:
        serialize.write(out / "patch.json", patch_artifact(job, state.patch))
    if state.scaling is not None:
        sdoc = scaling_artifact(job, state.patch, state.scaling, state.family)
        if "scaling" in wanted:
            serialize.write(out / "scaling.json", sdoc)
    if state.generatrix is not None:
        gdoc = generatrix_artifact(job, state.generatrix, sdoc)
        if "generatrix" in wanted:
            serialize.write(out / "generatrix.json", gdoc)
        for fmt in FORMATS:
            if fmt in wanted:
                try:
                    export_surface(state.generatrix, fmt, out)
                except LiftileError as exc:
                    print(f"export {fmt}: {type(exc).__name__}: {exc}", file=sys.stderr)
    if report.Q is not None and report.A is not None and "qform" in wanted:
        serialize.write(out / "qform.json", qform_artifact(job, gdoc, report))
    for stage in report.stages:
        line = f"{stage.name:28s} {stage.status}"
        if stage.status == "fail":
            line += f"  {stage.error} entity={stage.entity}"
        print(line)
    failed = report.failed_stage
    if failed is not None:
        print(f"failed at {failed.name}: {failed.error}: {failed.message}", file=sys.stderr)
    return report.exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liftile",
        description="Canonical scaling, lifting and affine reduction of lattice tilings by parallelohedra.",
        epilog="Environment: LIFTILE_TOL overrides the geometric tolerance (default 1e-9).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, fn, needs_input=True):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--spec", help="job description (YAML or JSON)")
        if needs_input:
            p.add_argument("--in", dest="input", help=f"{UPSTREAM[name]} artifact from the previous stage")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, help="override the job's RNG seed")
        p.set_defaults(func=fn, input=None)
        return p

    add("generate", "build the tiling patch", cmd_generate, needs_input=False)
    add("scale", "solve for a canonical translation-invariant scaling", cmd_scale)
    add("lift", "lift the patch to the generatrix", cmd_lift)
    add("reduce", "recover Q and the reducing linear map", cmd_reduce)
    add("verify", "check the reduced cell against the Dirichlet oracle", cmd_verify)
    exp = add("export", "write the generatrix as mesh, table or snapshot", cmd_export)
    exp.add_argument("--format", choices=sorted(FORMATS), required=True)
    pipe = add("pipeline", "run every stage and write report.json", cmd_pipeline, needs_input=False)
    pipe.add_argument("--stage", choices=list(STAGES), help="stop after this stage")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command != "pipeline" and not (args.spec or args.input):
        print(f"{args.command}: give --spec or --in", file=sys.stderr)
        return INVALID_JOB_EXIT
    try:
        return args.func(args)
    except StageFailed as exc:
        print(str(exc), file=sys.stderr)
        if isinstance(exc.error, InvalidJob):
            return INVALID_JOB_EXIT
        return EXPORT_EXIT if exc.stage == "export" else STAGES[exc.stage]
    except InvalidJob as exc:
        print(f"invalid job: {exc}", file=sys.stderr)
        return INVALID_JOB_EXIT
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
