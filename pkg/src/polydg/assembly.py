"""Assembly of the interior-penalty bilinear form for the biharmonic operator.

The discrete form, for piecewise polynomials u, v:

    B(u, v) = sum_K int_K  lap(u) lap(v)
            + int_Gamma ( mean{grad lap u} . jump{v} + mean{grad lap v} . jump{u} )
            - int_Gamma ( mean{lap u} jump{grad v} + mean{lap v} jump{grad u} )
            + int_Gamma ( sigma jump{u}.jump{v} + tau jump{grad u} jump{grad v} )

with jump{v} = v_i n_i + v_j n_j (a vector), jump{grad v} = grad(v_i).n_i +
grad(v_j).n_j (a scalar), and one-sided boundary traces where mean = trace and
jump{v} = v n. Dirichlet data enters the right-hand side only:

    l(v) = sum_K int_K f v
         + int_GammaD [ g_D (grad lap v . n + sigma v) + g_N (tau grad v . n - lap v) ]

Per face, with stacked side tables a (jump coefficients of values), g (jump
coefficients of normal derivatives), m_l (mean Laplacians), m_t (mean normal
third derivatives) and W = diag(face weights), the face block is

    A_F = a^T W m_t + m_t^T W a - (g^T W m_l + m_l^T W g)
        + a^T (sigma W) a + g^T (tau W) g

which keeps the assembled matrix exactly symmetric in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from . import basis as pb
from . import quadrature as pq
from .mesh import DIRICHLET, PolyMesh
from .penalty import PenaltyField


@dataclass(frozen=True)
class DofMap:
    offsets: np.ndarray  # (n_cells + 1,)

    @property
    def n_dofs(self) -> int:
        return int(self.offsets[-1])

    @property
    def n_cells(self) -> int:
        return len(self.offsets) - 1

    def block(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def block_size(self, i: int) -> int:
        return int(self.offsets[i + 1] - self.offsets[i])


def dof_map(bases) -> DofMap:
    sizes = np.array([b.dim for b in bases], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    return DofMap(offsets=offsets)


@dataclass
class DgSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    penalty: PenaltyField

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs


class _Scatter:
    """Accumulates COO triplets for dense sub-blocks."""

    def __init__(self):
        self.rows = []
        self.cols = []
        self.vals = []

    def add(self, row_idx: np.ndarray, col_idx: np.ndarray, block: np.ndarray):
        r, c = np.meshgrid(row_idx, col_idx, indexing="ij")
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(block.ravel())

    def build(self, n: int) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix((n, n))
        A = sp.coo_matrix(
            (np.concatenate(self.vals),
             (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(n, n),
        ).tocsr()
        # every scattered block is bit-symmetric, but the duplicate summation
        # in tocsr may reorder the (i, j) and (j, i) accumulations; averaging
        # restores exact symmetry at the cost of at most one extra rounding
        return (A + A.T) * 0.5


def _check_penalty(mesh: PolyMesh, penalty: PenaltyField):
    for arr, label in ((penalty.sigma, "sigma"), (penalty.tau, "tau")):
        if len(arr) != mesh.n_faces:
            raise ValueError(f"penalty field {label} covers {len(arr)} faces, mesh has {mesh.n_faces}")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise ValueError(f"penalty field {label} has a missing or non-positive face value")


def _quad_degree(bases, quad_degree):
    if quad_degree is not None:
        return quad_degree
    return 2 * max(b.degree for b in bases) + 2


def _face_tables(mesh, bases, k, fq, trace_maps=None):
    """Stacked jump/mean coefficient tables for face k.

    Returns (dofs, a, g, m_l, m_t): column block s holds side s's basis,
    signed for jumps (eps_s = n_s . n) and halved for interior means.
    trace_maps optionally post-multiplies the Laplacian trace tables, used by
    the projected-trace variant of the form.
    """
    cells = [c for c in mesh.face_cells[k] if c >= 0]
    n = mesh.face_normals[k]
    half = 0.5 if len(cells) == 2 else 1.0
    dofs, a_cols, g_cols, l_cols, t_cols = [], [], [], [], []
    for side, c in enumerate(cells):
        eps = 1.0 if side == 0 else -1.0
        t = pb.eval_tables(bases[c], fq.points)
        a_cols.append(eps * t.value)
        g_cols.append(eps * (t.grad @ n))
        if trace_maps is None:
            l_cols.append(half * t.lap)
            t_cols.append(half * (t.grad_lap @ n))
        else:
            Vp, Gp = trace_maps[c](fq.points)
            l_cols.append(half * Vp)
            t_cols.append(half * (Gp @ n))
        dofs.append(c)
    return (
        dofs,
        np.hstack(a_cols),
        np.hstack(g_cols),
        np.hstack(l_cols),
        np.hstack(t_cols),
    )


def assemble_bilinear(mesh: PolyMesh, bases, penalty: PenaltyField,
                      quad_degree: int | None = None) -> DgSystem:
    """Assemble the full interior-penalty matrix; rhs starts at zero."""
    _check_penalty(mesh, penalty)
    dm = dof_map(bases)
    deg = _quad_degree(bases, quad_degree)
    sc = _Scatter()
    for i in range(mesh.n_cells):
        q = pq.cell_rule(mesh.cell(i), deg)
        lap = pb.eval_tables(bases[i], q.points).lap
        # sqrt-weight scaling keeps G^T G bit-symmetric: the (i, j) and (j, i)
        # entries see the same commuted products in the same order
        s_lap = np.sqrt(q.weights)[:, None] * lap
        idx = np.arange(dm.offsets[i], dm.offsets[i + 1])
        sc.add(idx, idx, s_lap.T @ s_lap)
    _add_face_terms(mesh, bases, penalty, deg, sc, dm, with_consistency=True)
    A = sc.build(dm.n_dofs)
    return DgSystem(matrix=A, rhs=np.zeros(dm.n_dofs), dofmap=dm, penalty=penalty)


def _add_face_terms(mesh, bases, penalty, deg, sc, dm, with_consistency,
                    trace_maps=None):
    for k in range(mesh.n_faces):
        fq = pq.face_rule(mesh.face(k), deg)
        cells, a, g, m_l, m_t = _face_tables(mesh, bases, k, fq, trace_maps)
        w = fq.weights
        sa = np.sqrt(w)[:, None] * a
        sg = np.sqrt(w)[:, None] * g
        block = penalty.sigma[k] * (sa.T @ sa) + penalty.tau[k] * (sg.T @ sg)
        if with_consistency:
            c1 = (w[:, None] * a).T @ m_t
            c2 = (w[:, None] * g).T @ m_l
            block = block + c1 + c1.T - c2 - c2.T
        idx = np.concatenate([np.arange(dm.offsets[c], dm.offsets[c + 1]) for c in cells])
        sc.add(idx, idx, block)


def assemble_dg_gram(mesh: PolyMesh, bases, penalty: PenaltyField,
                     quad_degree: int | None = None) -> sp.csr_matrix:
    """Gram matrix of the mesh-dependent norm:
    sum_K |lap v|^2 + int_Gamma sigma |jump v|^2 + tau |jump grad v|^2."""
    _check_penalty(mesh, penalty)
    dm = dof_map(bases)
    deg = _quad_degree(bases, quad_degree)
    sc = _Scatter()
    for i in range(mesh.n_cells):
        q = pq.cell_rule(mesh.cell(i), deg)
        lap = pb.eval_tables(bases[i], q.points).lap
        s_lap = np.sqrt(q.weights)[:, None] * lap
        idx = np.arange(dm.offsets[i], dm.offsets[i + 1])
        sc.add(idx, idx, s_lap.T @ s_lap)
    _add_face_terms(mesh, bases, penalty, deg, sc, dm, with_consistency=False)
    return sc.build(dm.n_dofs)


def assemble_load(mesh: PolyMesh, bases, penalty: PenaltyField, problem,
                  quad_degree: int | None = None) -> np.ndarray:
    """Right-hand side for source f and Dirichlet data (g_D, g_N)."""
    _check_penalty(mesh, penalty)
    dm = dof_map(bases)
    deg = _quad_degree(bases, quad_degree)
    b = np.zeros(dm.n_dofs)
    for i in range(mesh.n_cells):
        q = pq.cell_rule(mesh.cell(i), deg)
        val = pb.eval_tables(bases[i], q.points).value
        f = problem.source(q.points[:, 0], q.points[:, 1])
        b[dm.block(i)] += val.T @ (q.weights * f)
    for k in range(mesh.n_faces):
        if mesh.face_tags[k] != DIRICHLET:
            continue
        c = mesh.face_cells[k, 0]
        fq = pq.face_rule(mesh.face(k), deg)
        n = fq.normal
        t = pb.eval_tables(bases[c], fq.points)
        gD = problem.dirichlet_value(fq.points)
        gN = problem.dirichlet_normal(fq.points, n)
        gn = t.grad @ n
        tn = t.grad_lap @ n
        integrand = (gD[:, None] * (tn + penalty.sigma[k] * t.value)
                     + gN[:, None] * (penalty.tau[k] * gn - t.lap))
        b[dm.block(c)] += integrand.T @ fq.weights
    return b


def assemble_system(mesh: PolyMesh, bases, penalty: PenaltyField, problem,
                    quad_degree: int | None = None) -> DgSystem:
    system = assemble_bilinear(mesh, bases, penalty, quad_degree)
    system.rhs = assemble_load(mesh, bases, penalty, problem, quad_degree)
    return system


# -- L2 projections ------------------------------------------------------------


def project_tables(basis_lo: pb.ElementBasis, quad: pq.CellQuadrature,
                   table: np.ndarray) -> np.ndarray:
    """Coefficients, in basis_lo, of the L2 projection of each table column.

    `table` holds point values at quad.points, one function per column.
    """
    V = pb.eval_tables(basis_lo, quad.points).value
    M = (quad.weights[:, None] * V).T @ V
    rhs = (quad.weights[:, None] * V).T @ table
    try:
        return cho_solve(cho_factor(M, lower=True), rhs)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(
            f"projection mass matrix on cell {basis_lo.cell_id} is numerically singular"
        ) from exc


def l2_project(basis: pb.ElementBasis, func, quad: pq.CellQuadrature) -> np.ndarray:
    """Best L2 approximation of func(x, y) in the span of `basis`."""
    f = func(quad.points[:, 0], quad.points[:, 1])
    return project_tables(basis, quad, np.asarray(f, dtype=float)[:, None])[:, 0]


def assemble_inconsistent(mesh: PolyMesh, bases, penalty: PenaltyField,
                          quad_degree: int | None = None) -> sp.csr_matrix:
    """Variant form with Laplacian traces replaced by their cellwise L2
    projection onto P_{p-2} before evaluation on faces.

    For total-degree spaces the Laplacian already lands in P_{p-2}, so this
    matches the plain form up to roundoff; it exists to make that inclusion a
    checkable property rather than an assumption.
    """
    _check_penalty(mesh, penalty)
    dm = dof_map(bases)
    deg = _quad_degree(bases, quad_degree)
    sc = _Scatter()
    trace_maps = {}
    for i in range(mesh.n_cells):
        cell = mesh.cell(i)
        q = pq.cell_rule(cell, deg)
        t = pb.eval_tables(bases[i], q.points)
        s_lap = np.sqrt(q.weights)[:, None] * t.lap
        idx = np.arange(dm.offsets[i], dm.offsets[i + 1])
        sc.add(idx, idx, s_lap.T @ s_lap)
        lo = pb.build_space(cell, bases[i].degree - 2)
        P = project_tables(lo, q, t.lap)

        def make(lo=lo, P=P):
            def maps(points):
                tl = pb.eval_tables(lo, points)
                return tl.value @ P, np.einsum("nds,dk->nks", tl.grad, P)
            return maps

        trace_maps[i] = make()
    _add_face_terms(mesh, bases, penalty, deg, sc, dm, with_consistency=True,
                    trace_maps=trace_maps)
    return sc.build(dm.n_dofs)
