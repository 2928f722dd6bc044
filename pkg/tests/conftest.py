import functools

import numpy as np
import pytest

from liftile.pipeline import LATTICES
from liftile.tiling import Lattice, dirichlet_cell, generate_patch


def lattice(name: str) -> Lattice:
    return Lattice.from_rows(LATTICES[name])


@functools.lru_cache(maxsize=None)
def patch(name: str, radius: int = 2):
    lat = lattice(name)
    return generate_patch(dirichlet_cell(lat), lat, radius)


@functools.lru_cache(maxsize=None)
def sheared_patch(name: str, seed: int, radius: int = 2):
    """Dirichlet tiling of a named lattice pushed through a random well-conditioned map."""
    B = random_map(len(LATTICES[name]), seed)
    lat = lattice(name)
    cell = dirichlet_cell(lat)
    from liftile.geometry import AffineMap
    from liftile.tiling import Parallelohedron

    image = Parallelohedron.from_polytope(cell.body.transformed(AffineMap(B)))
    return generate_patch(image, lat.transformed(B), radius), B


def random_map(d: int, seed: int, max_cond: float = 20.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    while True:
        B = rng.normal(size=(d, d))
        if np.linalg.cond(B) <= max_cond:
            return B


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
