"""Canonical scalings, convex lifts and affine reduction of lattice tilings by parallelohedra."""

from .complex import Chain, Complex, FacetRecord, RidgeRecord, Star, build_complex, primitive_cycles, ridge_fan, star_of
from .errors import *  # noqa: F401,F403
from .export import export_surface, mesh_obj, snapshot_svg, table_csv
from .geometry import AffineMap, Hyperplane, Polytope, convex_hull, halfspace_intersection, project_out
from .lift import (
    Generatrix,
    LiftedCell,
    build_generatrix,
    chain_value_oracle,
    check_chain_independence,
    check_convexity,
    check_nonnegative,
    evaluate_G,
    lift_along_chain,
    lift_to_neighbor,
)
from .pipeline import JobSpec, Report, run_pipeline
from .scaling import (
    AdditiveIncrements,
    CanonicalFamily,
    GainFunction,
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
from .tiling import (
    FacetClass,
    Lattice,
    Parallelohedron,
    RidgeKind,
    TilingPatch,
    belts,
    check_minkowski,
    check_venkov_delone,
    classify_ridge,
    dirichlet_cell,
    facet_classes,
    generate_patch,
    six_belts,
)
from .voronoi import (
    FacetSystem,
    QForm,
    check_positive_definite,
    check_symmetry,
    check_tangency,
    facet_system,
    recover_Q,
    reduce_to_voronoi,
    verify_voronoi,
    voronoi_generatrix,
)

__version__ = "0.1.0"
