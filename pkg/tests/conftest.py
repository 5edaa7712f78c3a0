import numpy as np
import pytest

from polydg import mesh as pm


@pytest.fixture
def unit_square_mesh():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return pm.single_cell_mesh(verts, domain=(0.0, 0.0, 1.0, 1.0))


@pytest.fixture
def two_cell_mesh():
    """Unit square split into two rectangles at x = 1/2."""
    verts = np.array([
        [0.0, 0.0], [0.5, 0.0], [1.0, 0.0],
        [1.0, 1.0], [0.5, 1.0], [0.0, 1.0],
    ])
    loops = [np.array([0, 1, 4, 5]), np.array([1, 2, 3, 4])]
    return pm.mesh_from_cells(verts, loops, domain=(0.0, 0.0, 1.0, 1.0))


@pytest.fixture(scope="session")
def voronoi16():
    return pm.generate_voronoi((0.0, 0.0, 1.0, 1.0), 16, lloyd_iters=2, seed=3)


@pytest.fixture(scope="session")
def voronoi64():
    return pm.generate_voronoi((0.0, 0.0, 1.0, 1.0), 64, lloyd_iters=100, seed=42)
