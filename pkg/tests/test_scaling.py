import numpy as np
import pytest

from liftile.complex import star_of
from liftile.errors import IncompleteStar, NotCanonicalInput, UnsupportedCodim
from liftile.scaling import (
    Scaling,
    additive_increments,
    check_cross_lying,
    gain_from_local_stars,
    gain_from_scaling,
    is_canonical,
    make_translation_invariant,
    max_torsion,
    solve_canonical,
    solve_local,
    torsion,
    verify_transfer,
)
from liftile.tiling import RidgeKind, classify_ridge

from conftest import patch


def grid_line_scaling(p, vertical, horizontal):
    """Square patch weights that depend only on the grid line carrying each edge."""
    cx = p.complex
    w = np.full(len(cx.facets), np.nan)
    for fid in cx.interior_facets:
        rec = cx.facets[fid]
        axis = int(np.argmax(np.abs(rec.normal)))
        line = int(round(rec.barycenter[axis] + 0.5))
        w[fid] = (vertical if axis == 0 else horizontal)[line]
    return Scaling(w)


def test_hex_vertex_torsion_with_unit_weights():
    p = patch("hexagonal", 1)
    s = Scaling.constant(p)
    for r in p.complex.complete_ridges:
        assert np.linalg.norm(torsion(s, p, r)) < 1e-15


def test_square_vertex_torsion_vanishes_for_any_alpha_beta():
    p = patch("square", 2)
    s = grid_line_scaling(p, {k: 1.0 + 0.3 * k for k in range(-2, 4)}, {k: 2.0 - 0.1 * k for k in range(-2, 4)})
    assert max_torsion(s, p)[0] < 1e-14


def test_perturbed_hex_vertex_has_torsion_one_tenth():
    p = patch("hexagonal", 1)
    r = p.complex.complete_ridges[0]
    f = p.complex.ridges[r].facets[0]
    s = Scaling.constant(p).with_weight(f, 1.1)
    assert np.linalg.norm(torsion(s, p, r)) == pytest.approx(0.1)


def test_torsion_of_boundary_ridge():
    p = patch("square", 1)
    r = next(r.index for r in p.complex.ridges if not r.complete)
    with pytest.raises(IncompleteStar):
        torsion(Scaling.constant(p), p, r)


def test_square_family_has_one_weight_per_grid_line():
    p = patch("square", 2)
    fam = solve_canonical(p)
    assert fam.dim == 8  # 4 interior vertical lines + 4 horizontal
    assert fam.representative.is_positive
    assert np.allclose(fam.representative.weights[fam.facet_ids], 1.0)
    cx = p.complex
    # every basis direction keeps opposite edges at each vertex equal
    for r in cx.complete_ridges:
        rec = cx.ridges[r]
        rows = [list(fam.facet_ids).index(f) for f in rec.facets]
        B = fam.basis[rows]
        assert np.allclose(B[0], B[2]) and np.allclose(B[1], B[3])
    # brute-force: a line-wise weighting lies in the span
    s = grid_line_scaling(p, {k: float(k + 3) for k in range(-2, 4)}, {k: float(7 - k) for k in range(-2, 4)})
    v = s.weights[fam.facet_ids]
    coef, *_ = np.linalg.lstsq(fam.basis, v, rcond=None)
    assert np.allclose(fam.basis @ coef, v)


def test_hex_family_is_a_ray_through_ones():
    p = patch("hexagonal", 2)
    fam = solve_canonical(p)
    assert fam.dim == 1
    s = fam.representative
    assert np.allclose(s.weights[fam.facet_ids], 1.0)
    for r in p.complex.complete_ridges:
        w = s.weights[list(p.complex.ridges[r].facets)]
        assert np.allclose(w / w[0], 1.0)


@pytest.mark.parametrize("name", ["hexagonal", "square", "fcc", "bcc", "elongated", "hexagonal-prism"])
def test_facet_norm_scaling_is_canonical(name):
    p = patch(name, 1)
    assert is_canonical(Scaling.facet_norm(p), p)


def test_invariant_solve_matches_facet_norm_on_bcc():
    p = patch("bcc", 1)
    fam = solve_canonical(p, invariant=True)
    assert fam.dim == 1
    ref = Scaling.facet_norm(p)
    ratio = fam.representative.weights[fam.facet_ids] / ref.weights[fam.facet_ids]
    assert np.allclose(ratio, ratio[0])


def test_local_families():
    hx = patch("hexagonal", 1)
    r = hx.complex.complete_ridges[0]
    fam = solve_local(hx, star_of(hx.complex, hx.complex.ridges[r].vertex_ids))
    assert fam.dim == 1
    assert np.allclose(fam.weights, fam.weights[0])
    sq = patch("square", 1)
    r = sq.complex.complete_ridges[0]
    fam = solve_local(sq, star_of(sq.complex, sq.complex.ridges[r].vertex_ids))
    assert fam.dim == 2
    order = [fam.facet_ids.index(f) for f in sq.complex.ridges[r].facets]
    for col in fam.basis.T:
        w = col[order]
        assert w[0] == pytest.approx(w[2]) and w[1] == pytest.approx(w[3])


def test_fcc_local_stars_have_positive_solutions():
    p = patch("fcc", 1)
    cx = p.complex
    r = next(r for r in cx.cell_ridges[p.base_cell_index] if cx.ridges[r].complete)
    edge = solve_local(p, star_of(cx, cx.ridges[r].vertex_ids))
    assert np.all(edge.weights > 0)
    v = next(iter(cx.ridges[r].vertex_ids))
    star = star_of(cx, frozenset([v]))
    assert star.complete and star.codim == 3
    vertex = solve_local(p, star)
    assert np.all(vertex.weights > 0)


def test_incomplete_star_has_no_local_solution():
    p = patch("square", 1)
    with pytest.raises(IncompleteStar):
        solve_local(p, star_of(p.complex, np.array([[1.5, 1.5]])))


def test_gains():
    p = patch("square", 2)
    g = gain_from_scaling(Scaling.constant(p), p)
    assert all(v == 1.0 for v in g.ratios.values())
    s = grid_line_scaling(p, {k: 2.0 for k in range(-2, 4)}, {k: 5.0 for k in range(-2, 4)})
    g = gain_from_scaling(s, p)
    cx = p.complex
    for (a, b), v in g.ratios.items():
        va = abs(cx.facets[a].normal[0]) > 0.5
        vb = abs(cx.facets[b].normal[0]) > 0.5
        assert va != vb
        assert v == pytest.approx(2.0 / 5.0 if va else 5.0 / 2.0)
    assert g.reciprocity_residual() < 1e-15


def test_hex_gains_from_local_stars_are_one():
    p = patch("hexagonal", 2)
    g = gain_from_local_stars(p)
    assert g.ratios and all(v == pytest.approx(1.0) for v in g.ratios.values())


def test_local_gains_agree_with_global_on_bcc():
    p = patch("bcc", 1)
    local = gain_from_local_stars(p)
    glob = gain_from_scaling(Scaling.facet_norm(p), p)
    assert local.ratios
    for key, v in local.ratios.items():
        assert v == pytest.approx(glob[key], rel=1e-9)


def test_additive_transfer_on_hex_and_square():
    for name in ("hexagonal", "square"):
        p = patch(name, 2)
        fam = solve_canonical(p)
        rep = verify_transfer(additive_increments(fam.representative, p), p, 2)
        assert rep.passed and rep.checked == len(p.complex.complete_ridges)
        assert rep.max_residual < 1e-12


def test_codim3_is_skipped_in_the_plane():
    p = patch("hexagonal", 1)
    with pytest.raises(UnsupportedCodim):
        verify_transfer(gain_from_scaling(Scaling.constant(p), p), p, 3)


def test_perturbation_is_located():
    p = patch("hexagonal", 2)
    cx = p.complex
    f = cx.cell_facets[p.base_cell_index][0]
    s = Scaling.constant(p).with_weight(f, 1.1)
    rep = verify_transfer(additive_increments(s, p), p, 2)
    assert not rep.passed
    for ridge_id, res in rep.failures:
        assert f in cx.ridges[ridge_id].facets
        assert res == pytest.approx(0.1)


def test_multiplicative_transfer_in_three_dimensions():
    p = patch("bcc", 1)
    s = Scaling.facet_norm(p)
    rep = verify_transfer(gain_from_scaling(s, p), p, 3)
    assert rep.passed and rep.checked > 0
    f = p.complex.cell_facets[p.base_cell_index][0]
    bad = dict(gain_from_scaling(s, p).ratios)
    key = next(k for k in bad if k[0] == f)
    bad[key] *= 1.1
    from liftile.scaling import GainFunction

    assert not verify_transfer(GainFunction(bad), p, 3).passed


def test_translation_invariance_from_line_weights():
    p = patch("square", 2)
    s = grid_line_scaling(p, {k: 1.0 + k * k for k in range(-2, 4)}, {k: 3.0 + k for k in range(-2, 4)})
    assert is_canonical(s, p)
    out = make_translation_invariant(s, p)
    assert out.invariant and is_canonical(out, p)
    cx = p.complex
    vert = {out[f] for f in cx.interior_facets if abs(cx.facets[f].normal[0]) > 0.5}
    horiz = {out[f] for f in cx.interior_facets if abs(cx.facets[f].normal[1]) > 0.5}
    assert len(vert) == 1 and len(horiz) == 1


def test_invariant_inputs_are_fixed_points():
    for name, s_of in (("square", Scaling.constant), ("hexagonal", lambda p: Scaling.constant(p, 2.5))):
        p = patch(name, 2)
        s = s_of(p)
        out = make_translation_invariant(s, p)
        assert np.allclose(out.weights[p.complex.interior_facets], s.weights[p.complex.interior_facets])


def test_non_canonical_input_is_refused():
    p = patch("hexagonal", 2)
    s = Scaling.constant(p).with_weight(p.complex.interior_facets[0], 1.1)
    with pytest.raises(NotCanonicalInput):
        make_translation_invariant(s, p)
    report = check_cross_lying(s, p)
    assert not report.applicable and report.reason == "NotCanonicalInput"


@pytest.mark.parametrize("name,make", [
    ("hexagonal", lambda p: solve_canonical(p).representative),
    ("bcc", Scaling.facet_norm),
    ("fcc", Scaling.facet_norm),
])
def test_cross_lying(name, make):
    p = patch(name, 1 if name != "hexagonal" else 2)
    rep = check_cross_lying(make(p), p)
    assert rep.passed and rep.belt_checks > 0 and rep.ridge_checks > 0


def test_primitive_ridges_drive_local_gains():
    p = patch("hexagonal-prism", 1)
    cx = p.complex
    g = gain_from_local_stars(p)
    for a, b in g.ratios:
        shared = cx.facets[a].vertex_ids & cx.facets[b].vertex_ids
        ridge = next(r for r in cx.ridges if r.vertex_ids == shared)
        assert classify_ridge(cx, ridge.index) is RidgeKind.PRIMITIVE
