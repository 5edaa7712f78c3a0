"""Bilinear form and load vector against hand-evaluated integrals.

The frozen reference values below were computed symbolically from the form
definition (volume term plus one-sided boundary terms) before the assembly
code was run, so they are independent of it.
"""

import numpy as np
import pytest

from polydg import assembly as asm
from polydg import basis as pb
from polydg import mesh as pm
from polydg import penalty as pen
from polydg import problems as pr
from polydg import quadrature as pq


def interpolate(mesh, bases, func, deg=14):
    """Cellwise L2 projection; exact when func restricts to P_p on each cell."""
    dm = asm.dof_map(bases)
    out = np.empty(dm.n_dofs)
    for i in range(mesh.n_cells):
        out[dm.block(i)] = asm.l2_project(bases[i], func, pq.cell_rule(mesh.cell(i), deg))
    return out


def unit_square_setup(p=2, c_sigma=1.0, c_tau=1.0):
    m = pm.single_cell_mesh(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
    bases = pb.build_all_bases(m, p)
    field = pen.penalties_bounded(m, p, c_sigma, c_tau)
    return m, bases, field


def test_constant_energy_is_penalty_boundary_sum():
    # u = v = 1: only sigma survives, B = 128 * perimeter = 512
    m, bases, field = unit_square_setup()
    A = asm.assemble_bilinear(m, bases, field).matrix
    one = interpolate(m, bases, lambda x, y: np.ones_like(x))
    assert one @ (A @ one) == pytest.approx(512.0, rel=1e-12)


def test_harmonic_quadratic_energy():
    # v = xy: volume and consistency vanish, sigma part 128*2/3, tau part 16*4/3
    m, bases, field = unit_square_setup()
    A = asm.assemble_bilinear(m, bases, field).matrix
    v = interpolate(m, bases, lambda x, y: x * y)
    assert v @ (A @ v) == pytest.approx(320.0 / 3.0, rel=1e-12)


def test_full_quadratic_energy_with_boundary_consistency():
    # u = x^2 + y^2: every group of terms is active.
    #   volume 16, consistency -32, sigma 128*62/15, tau 16*8  ->  9616/15
    m, bases, field = unit_square_setup()
    A = asm.assemble_bilinear(m, bases, field).matrix
    u = interpolate(m, bases, lambda x, y: x**2 + y**2)
    assert u @ (A @ u) == pytest.approx(9616.0 / 15.0, rel=1e-12)


def test_smooth_bump_energy_across_interior_face(two_cell_mesh):
    # u = x^2(1-x)^2 y^2(1-y)^2 is globally smooth with u = du/dn = 0 on the
    # boundary, so every face term drops and B(u, u) = int (lap u)^2 = 4/1225.
    p = 8
    bases = pb.build_all_bases(two_cell_mesh, p)
    field = pen.penalties_bounded(two_cell_mesh, p, 1.0, 1.0)
    A = asm.assemble_bilinear(two_cell_mesh, bases, field).matrix
    u = interpolate(two_cell_mesh, bases,
                    lambda x, y: (x * (1 - x) * y * (1 - y)) ** 2)
    assert u @ (A @ u) == pytest.approx(4.0 / 1225.0, rel=1e-9)


def test_matrix_exactly_symmetric(voronoi16):
    # symmetric to the bit, not just to roundoff
    bases = pb.build_all_bases(voronoi16, 3)
    field = pen.penalty_field(voronoi16, 3, "BoundedFaces")
    A = asm.assemble_bilinear(voronoi16, bases, field).matrix
    assert (A - A.T).nnz == 0


def test_block_sparsity_matches_adjacency(voronoi16):
    bases = pb.build_all_bases(voronoi16, 2)
    field = pen.penalty_field(voronoi16, 2, "BoundedFaces")
    sys = asm.assemble_bilinear(voronoi16, bases, field)
    A = sys.matrix
    dm = sys.dofmap
    adjacent = {frozenset(fc) for fc in voronoi16.face_cells if fc[1] >= 0}
    found_zero = False
    for i in range(voronoi16.n_cells):
        for j in range(i + 1, voronoi16.n_cells):
            blk = A[dm.block(i), dm.block(j)]
            if frozenset((i, j)) in adjacent:
                assert blk.nnz > 0
            else:
                assert blk.nnz == 0 or np.abs(blk.toarray()).max() == 0.0
                found_zero = True
    assert found_zero


def test_consistency_terms_independent_of_penalty(voronoi16):
    bases = pb.build_all_bases(voronoi16, 2)
    f1 = pen.penalty_field(voronoi16, 2, "BoundedFaces", c_sigma=1.0, c_tau=1.0)
    f2 = pen.penalty_field(voronoi16, 2, "BoundedFaces", c_sigma=2.0, c_tau=2.0)
    c1 = (asm.assemble_bilinear(voronoi16, bases, f1).matrix
          - asm.assemble_dg_gram(voronoi16, bases, f1)).toarray()
    c2 = (asm.assemble_bilinear(voronoi16, bases, f2).matrix
          - asm.assemble_dg_gram(voronoi16, bases, f2)).toarray()
    scale = max(np.abs(c1).max(), 1.0)
    np.testing.assert_allclose(c1, c2, atol=1e-11 * scale)


def test_gram_is_positive_definite(voronoi16):
    bases = pb.build_all_bases(voronoi16, 2)
    field = pen.penalty_field(voronoi16, 2, "BoundedFaces")
    G = asm.assemble_dg_gram(voronoi16, bases, field).toarray()
    w = np.linalg.eigvalsh(G)
    assert w[0] > 0


@pytest.mark.parametrize("p", [2, 4])
def test_projected_trace_variant_matches_plain_form(p, voronoi16):
    # Laplacians of total-degree polynomials already live in P_{p-2}, so
    # projecting the traces first changes nothing beyond roundoff.
    bases = pb.build_all_bases(voronoi16, p)
    field = pen.penalty_field(voronoi16, p, "BoundedFaces")
    A = asm.assemble_bilinear(voronoi16, bases, field).matrix.toarray()
    B = asm.assemble_inconsistent(voronoi16, bases, field).toarray()
    np.testing.assert_allclose(B, A, atol=1e-11 * np.abs(A).max())


def test_l2_project_truncates_cubic_to_legendre_shadow():
    # on [-1, 1]^2 the best quadratic fit of x^3 is (3/5) x
    cell = pm.single_cell_mesh(
        np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])).cell(0)
    basis = pb.build_basis(cell, 2)
    q = pq.cell_rule(cell, 10)
    coeffs = asm.l2_project(basis, lambda x, y: x**3, q)
    pts = np.array([[0.3, -0.7], [-0.9, 0.2], [0.5, 0.5]])
    vals = pb.eval_tables(basis, pts).value @ coeffs
    np.testing.assert_allclose(vals, 0.6 * pts[:, 0], rtol=1e-11)


def test_l2_project_reproduces_space_members(voronoi16):
    cell = voronoi16.cell(3)
    basis = pb.build_basis(cell, 3)
    q = pq.cell_rule(cell, 10)
    f = lambda x, y: 1.0 + 2 * x - y + 0.5 * x**2 - x * y + y**3
    coeffs = asm.l2_project(basis, f, q)
    pts = cell.centroid + 0.1 * (np.array([[0.0, 0.0], [1.0, 0.5], [-0.5, 1.0]]))
    vals = pb.eval_tables(basis, pts).value @ coeffs
    np.testing.assert_allclose(vals, f(pts[:, 0], pts[:, 1]), rtol=1e-10)


def test_load_zero_data_is_zero(voronoi16):
    bases = pb.build_all_bases(voronoi16, 2)
    field = pen.penalty_field(voronoi16, 2, "BoundedFaces")
    zero = pr.polynomial_problem("zero", [(0.0, 0, 0)])
    b = asm.assemble_load(voronoi16, bases, field, zero)
    assert np.all(b == 0.0)


def test_load_constant_source_integrates_against_one(voronoi16):
    bases = pb.build_all_bases(voronoi16, 2)
    field = pen.penalty_field(voronoi16, 2, "BoundedFaces")
    zeros = lambda x, y: np.zeros(np.broadcast(x, y).shape)
    prob = pr.Problem(
        "const_source",
        value=zeros,
        grad=lambda x, y: np.zeros(np.broadcast(x, y).shape + (2,)),
        lap=zeros,
        source=lambda x, y: np.ones(np.broadcast(x, y).shape),
    )
    b = asm.assemble_load(voronoi16, bases, field, prob)
    one = interpolate(voronoi16, bases, lambda x, y: np.ones_like(x))
    # b . v = int f v = |domain| for v = 1 (boundary data is zero)
    assert one @ b == pytest.approx(1.0, rel=1e-10)


def test_galerkin_orthogonality_for_representable_solution(two_cell_mesh):
    # u = x^2 + y^2 is in the p = 2 space; A u_I must equal the load vector,
    # which is the statement that the form is consistent for smooth solutions.
    bases = pb.build_all_bases(two_cell_mesh, 2)
    field = pen.penalties_bounded(two_cell_mesh, 2, 1.0, 1.0)
    prob = pr.polynomial_problem("para", [(1.0, 2, 0), (1.0, 0, 2)])
    sys = asm.assemble_system(two_cell_mesh, bases, field, prob)
    u = interpolate(two_cell_mesh, bases, lambda x, y: x**2 + y**2)
    r = sys.matrix @ u - sys.rhs
    assert np.abs(r).max() < 1e-10 * max(np.abs(sys.rhs).max(), 1.0)


def test_dof_map_mixed_degrees(two_cell_mesh):
    bases = [pb.build_basis(two_cell_mesh.cell(0), 2),
             pb.build_basis(two_cell_mesh.cell(1), 3)]
    dm = asm.dof_map(bases)
    assert list(dm.offsets) == [0, 6, 16]
    assert dm.n_dofs == 16
    assert dm.block(1) == slice(6, 16)
    assert dm.block_size(0) == 6


def test_penalty_mesh_mismatch_rejected(voronoi16, two_cell_mesh):
    bases = pb.build_all_bases(voronoi16, 2)
    field = pen.penalties_bounded(two_cell_mesh, 2, 1.0, 1.0)
    with pytest.raises(ValueError, match="faces"):
        asm.assemble_bilinear(voronoi16, bases, field)
