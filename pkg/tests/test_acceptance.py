"""Acceptance gate: one PASS/FAIL line per criterion, printed straight to the terminal.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python3 tests/test_acceptance.py``.
"""

import functools
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import lattice, patch, random_map  # noqa: E402

from liftile.errors import InconsistentLift  # noqa: E402
from liftile.geometry import AffineMap, convex_hull  # noqa: E402
from liftile.lift import (  # noqa: E402
    build_generatrix,
    chain_value_oracle,
    check_chain_independence,
    check_convexity,
    check_nonnegative,
    evaluate_G,
    random_chain,
    random_point_in_cell,
)
from liftile.pipeline import LATTICES, JobSpec, run_pipeline  # noqa: E402
from liftile.scaling import (  # noqa: E402
    Scaling,
    additive_increments,
    gain_from_scaling,
    make_translation_invariant,
    max_torsion,
    solve_canonical,
    verify_transfer,
)
from liftile.tiling import (  # noqa: E402
    Lattice,
    Parallelohedron,
    check_minkowski,
    check_venkov_delone,
    dirichlet_cell,
    generate_patch,
)
from liftile.voronoi import (  # noqa: E402
    check_symmetry,
    check_tangency,
    facet_system,
    lattice_point_values,
    recover_Q,
    reduce_to_voronoi,
    verify_voronoi,
    voronoi_generatrix,
)

TOL = 1e-9
ROUND_TRIP_SEEDS = range(10)


@pytest.fixture
def say(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} | {detail}")

    return emit


def gauged(Q: np.ndarray) -> np.ndarray:
    return Q * (len(Q) / np.trace(Q))


def rel_err(Q: np.ndarray, ref: np.ndarray) -> float:
    a, b = gauged(Q), gauged(ref)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def image_patch(name: str, B: np.ndarray, radius: int = 2):
    lat = lattice(name)
    body = dirichlet_cell(lat).body.transformed(AffineMap(B))
    return generate_patch(Parallelohedron.from_polytope(body), lat.transformed(B), radius)


@functools.lru_cache(maxsize=None)
def forward(key: tuple):
    """(patch, canonical invariant scaling, family) for a named or sheared patch."""
    kind, name, arg, radius = key
    p = patch(name, radius) if kind == "plain" else image_patch(name, random_map(len(LATTICES[name]), arg), radius)
    fam = solve_canonical(p)
    return p, make_translation_invariant(fam.representative, p), fam


SUITE = [
    ("plain", "square", 0, 2),
    ("plain", "hexagonal", 0, 2),
    ("plain", "cubic", 0, 2),
    ("plain", "fcc", 0, 2),
    ("plain", "bcc", 0, 2),
    ("sheared", "hexagonal", 101, 2),
    ("sheared", "fcc", 102, 2),
]


# 1 ---------------------------------------------------------------------------
def test_criterion_1_trivial_fixed_points(say):
    lines, ok = [], True
    for name in ("square", "cubic"):
        start = time.perf_counter()
        lat = lattice(name)
        p = generate_patch(dirichlet_cell(lat), lat, 2)
        fam = solve_canonical(p)
        s = make_translation_invariant(fam.representative, p)
        unit = np.allclose(s.weights[p.complex.interior_facets], 1.0, atol=TOL)
        build_generatrix(p, s)
        q = recover_Q(facet_system(p, s))
        Qg = gauged(q.Q)
        vr = verify_voronoi(reduce_to_voronoi(Qg), p)
        elapsed = time.perf_counter() - start
        err = float(np.abs(Qg - np.eye(lat.dim)).max())
        case = fam.representative.is_positive and unit and err <= TOL and vr.passed and elapsed < 1.0
        ok &= case
        lines.append(f"{name}: |Q-I|={err:.1e} s==1:{unit} verify:{vr.passed} {elapsed:.2f}s")
    say(1, ok, "; ".join(lines))
    assert ok


# 2 ---------------------------------------------------------------------------
def test_criterion_2_hexagonal_cone(say):
    p = patch("hexagonal", 3)
    fam = solve_canonical(p)
    s = fam.representative
    cx = p.complex
    ratio_gap = 0.0
    for r in cx.complete_ridges:
        w = s.weights[list(cx.ridges[r].facets)]
        ratio_gap = max(ratio_gap, float(np.abs(w / w[0] - 1).max()))
    ones = float(np.abs(s.weights[fam.facet_ids] - 1).max())
    try:
        gen = build_generatrix(p, make_translation_invariant(s, p))
        lift_ok = True
    except InconsistentLift:
        lift_ok = False
    err = float("inf")
    if lift_ok:
        err = float(np.abs(gauged(recover_Q(facet_system(p, gen.scaling)).Q) - np.eye(2)).max())
    ok = fam.dim == 1 and ratio_gap <= TOL and ones <= TOL and lift_ok and err <= TOL
    say(2, ok, f"cone dim {fam.dim}, per-vertex ratio gap {ratio_gap:.1e}, |s-1| {ones:.1e}, "
               f"lift consistent {lift_ok}, |Q-I| {err:.1e}")
    assert ok


# 3 ---------------------------------------------------------------------------
def round_trip(name: str, seed: int):
    d = len(LATTICES[name])
    B = random_map(d, 1000 * (d + 1) + seed)
    lat = lattice(name)
    image = dirichlet_cell(lat).body.transformed(AffineMap(B))
    job = JobSpec(d, (B @ lat.basis).T.tolist(), cell=image.vertices.tolist(), radius=2, seed=seed)
    start = time.perf_counter()
    report, _ = run_pipeline(job)
    elapsed = time.perf_counter() - start
    if not report.passed:
        return False, float("inf"), elapsed, report.failed_stage.name
    err = rel_err(report.Q, np.linalg.inv(B @ B.T))
    return err <= 1e-6 and report.voronoi, err, elapsed, None


def test_criterion_3_round_trip(say):
    ok, lines = True, []
    for name in ("hexagonal", "fcc", "bcc"):
        worst_err, worst_time, failures = 0.0, 0.0, []
        for seed in ROUND_TRIP_SEEDS:
            case, err, elapsed, stage = round_trip(name, seed)
            worst_err, worst_time = max(worst_err, err), max(worst_time, elapsed)
            if not case or (name != "hexagonal" and elapsed >= 10.0):
                failures.append((seed, stage))
        ok &= not failures
        lines.append(f"{name}: max relerr {worst_err:.1e}, slowest {worst_time:.2f}s, failures {failures}")
    say(3, ok, "; ".join(lines))
    assert ok


# 4 ---------------------------------------------------------------------------
def test_criterion_4_generatrix_suite(say):
    ok, worst = True, {"chain": 0.0, "midpoint": -np.inf, "min_height": np.inf, "dihedral": np.inf}
    bad = []
    for key in SUITE:
        p, s, _ = forward(key)
        g = build_generatrix(p, s)
        chains = check_chain_independence(g, chains_per_cell=100, seed=7)
        conv = check_convexity(g, samples=1000, seed=7, tol=TOL)
        nonneg = check_nonnegative(g)
        case = chains.max_gap <= TOL and conv.passed and conv.samples == 1000 and nonneg.min_height >= -1e-12
        if not case:
            bad.append(key[1:3])
        ok &= case
        worst["chain"] = max(worst["chain"], chains.max_gap)
        worst["midpoint"] = max(worst["midpoint"], conv.max_midpoint_excess)
        worst["min_height"] = min(worst["min_height"], nonneg.min_height)
        worst["dihedral"] = min(worst["dihedral"], conv.min_margin)
    say(4, ok, f"{len(SUITE)} patches; max chain gap {worst['chain']:.1e}, min dihedral margin "
               f"{worst['dihedral']:.2e}, max midpoint excess {worst['midpoint']:.1e}, "
               f"min height {worst['min_height']:.1e}, failing {bad}")
    assert ok


# 5 ---------------------------------------------------------------------------
def test_criterion_5_torsion_and_transfer(say):
    extra = [("plain", "hexagonal-prism", 0, 2), ("plain", "elongated", 0, 1), ("sheared", "bcc", 103, 2)]
    torsion_worst = transfer_worst = 0.0
    ok = True
    for key in SUITE + extra:
        p, s, fam = forward(key)
        for scaling in (fam.representative, s):
            worst, _ = max_torsion(scaling, p)
            torsion_worst = max(torsion_worst, worst / scaling.mean)
        rep2 = verify_transfer(additive_increments(s, p), p, 2)
        transfer_worst = max(transfer_worst, rep2.max_residual / s.mean)
        ok &= rep2.passed
        if p.dim == 3:
            rep3 = verify_transfer(gain_from_scaling(s, p), p, 3)
            transfer_worst = max(transfer_worst, rep3.max_residual)
            ok &= rep3.passed and rep3.checked > 0
    ok &= torsion_worst <= TOL and transfer_worst <= TOL

    trials = [("plain", n, 0, r) for n, r in
              (("hexagonal", 2), ("square", 2), ("cubic", 1), ("fcc", 1), ("bcc", 1))]
    caught_torsion = caught_lift = 0
    for seed in range(20):
        p, s, _ = forward(trials[seed % len(trials)])
        rng = np.random.default_rng(seed)
        cx = p.complex
        candidates = sorted({f for r in cx.complete_ridges for f in cx.ridges[r].facets})
        f = int(rng.choice(candidates))
        bad = s.with_weight(f, 1.1 * s[f])
        if max_torsion(bad, p)[0] > TOL * bad.mean:
            caught_torsion += 1
        try:
            build_generatrix(p, bad)
        except InconsistentLift:
            caught_lift += 1
    ok &= caught_torsion == 20 and caught_lift == 20
    say(5, ok, f"max torsion {torsion_worst:.1e}, max cycle residual {transfer_worst:.1e}, "
               f"x1.1 perturbations caught by torsion {caught_torsion}/20, by lifting {caught_lift}/20")
    assert ok


# 6 ---------------------------------------------------------------------------
def test_criterion_6_oracle_equivalence(say):
    ok, worst_chain = True, 0.0
    for key in SUITE:
        p, s, _ = forward(key)
        g = build_generatrix(p, s)
        rng = np.random.default_rng(11)
        for _ in range(1000):
            c = int(rng.integers(len(p.complex.cells)))
            x = random_point_in_cell(p, c, rng)
            chain = random_chain(p, p.base_cell_index, c, rng)
            gap = abs(evaluate_G(g, x) - chain_value_oracle(p, s, chain, x))
            worst_chain = max(worst_chain, gap)
    ok &= worst_chain <= TOL

    worst_para = 0.0
    for name in ("square", "hexagonal", "fcc", "bcc"):
        p, s, _ = forward(("plain", name, 0, 2))
        vg, induced = voronoi_generatrix(lattice(name), patch=p)
        f0 = p.complex.cell_facets[p.base_cell_index][0]
        aligned = s.scaled(induced[f0] / s[f0])
        g = build_generatrix(p, aligned)
        gap = max(float(np.abs(vg.gradients - g.gradients).max()), float(np.abs(vg.offsets - g.offsets).max()))
        worst_para = max(worst_para, gap)
    ok &= worst_para <= TOL
    say(6, ok, f"evaluate_G vs chain formula max gap {worst_chain:.1e} (1000 samples x {len(SUITE)} patches); "
               f"paraboloid tangent planes vs forward lift max gap {worst_para:.1e}")
    assert ok


# 7 ---------------------------------------------------------------------------
def seeded_rotation(seed: int) -> np.ndarray:
    q, r = np.linalg.qr(np.random.default_rng(seed).normal(size=(3, 3)))
    return q * np.sign(np.diag(r))


def test_criterion_7_classical_conditions(say):
    expected = {"cubic": (6, 8), "hexagonal-prism": (8, 12), "fcc": (12, 14), "elongated": (12, 18), "bcc": (14, 24)}
    ok, lines = True, []
    for seed, (name, (nf, nv)) in enumerate(expected.items()):
        R = seeded_rotation(seed)
        body = dirichlet_cell(Lattice(R @ lattice(name).basis)).body
        mink, vd = check_minkowski(body), check_venkov_delone(body)
        case = len(body.facets) == nf and len(body.vertices) == nv and mink.passed and vd.passed
        ok &= case
        lines.append(f"{name}({nf}f) {'ok' if case else 'FAIL'}")
    tetra = convex_hull(np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float))
    prism = convex_hull(np.array([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0],
                                  [0, 0, 1], [1, 0, 1], [0.5, np.sqrt(3) / 2, 1]]))
    t_m = check_minkowski(tetra)
    p_v = check_venkov_delone(prism)
    tetra_reason = not t_m.passed and not t_m.body_symmetric
    prism_reason = not p_v.passed and any(shape == "triangle" for _, shape in p_v.failures)
    ok &= tetra_reason and prism_reason
    lines.append(f"tetrahedron rejected (no center of symmetry): {tetra_reason}")
    lines.append(f"triangular prism rejected (triangle shadow along a lateral edge): {prism_reason}")
    say(7, ok, "; ".join(lines))
    assert ok


# 8 ---------------------------------------------------------------------------
def test_criterion_8_symmetry_and_formulas(say):
    ok, sym_worst = True, 0.0
    for key in SUITE + [("sheared", "bcc", 103, 2)]:
        p, s, _ = forward(key)
        sys_ = facet_system(p, s)
        rep = check_symmetry(sys_)
        scale = float(np.linalg.norm(sys_.P, axis=0).max() * np.linalg.norm(sys_.M, axis=0).max())
        sym_worst = max(sym_worst, rep.residual / scale)
    ok &= sym_worst <= 1e-12

    formula_worst = quad_worst = 0.0
    for key in [("plain", "square", 0, 3), ("plain", "hexagonal", 0, 3), ("sheared", "hexagonal", 104, 3),
                ("plain", "fcc", 0, 3), ("plain", "bcc", 0, 3)]:
        p, s, _ = forward(key)
        g = build_generatrix(p, s)
        sys_ = facet_system(p, s)
        formula_worst = max(formula_worst, lattice_point_values(g, sys_))
        q = recover_Q(sys_)
        quad_worst = max(quad_worst, check_tangency(g, q, p, samples=0).max_value_gap)
    ok &= formula_worst <= TOL and quad_worst <= TOL
    say(8, ok, f"relative symmetry residual {sym_worst:.1e}; radius-3 lattice points: "
               f"|G - 1/2 L P^T M L^T| {formula_worst:.1e}, |G - 1/2 x^T Q x| {quad_worst:.1e}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
