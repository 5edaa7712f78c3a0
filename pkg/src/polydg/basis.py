"""Per-cell polynomial bases in physical coordinates.

Basis functions are linear combinations of monomials scaled by the cell's
bounding box (identity combination for raw monomials, triangular for
Gram-Schmidt orthonormalized ones). Derivatives through third order are exact
polynomial derivatives of the monomial expansion. The harmonic subspace H_p is
the exact null space of the Laplacian on monomial coefficients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy
from scipy.linalg import cholesky, solve_triangular

from . import quadrature

logger = logging.getLogger(__name__)


@lru_cache(maxsize=None)
def monomial_exponents(p: int) -> np.ndarray:
    """Graded ordering of 2D exponent pairs up to total degree p."""
    out = [(d - j, j) for d in range(p + 1) for j in range(d + 1)]
    return np.asarray(out, dtype=np.int64)


def space_dim(p: int) -> int:
    return (p + 1) * (p + 2) // 2


@dataclass(frozen=True)
class ElementBasis:
    cell_id: int
    degree: int
    dim: int
    center: np.ndarray  # bounding-box center
    halfwidth: np.ndarray  # bounding-box half-widths
    coefficient_matrix: np.ndarray  # (dim, dim); rows express basis in scaled monomials
    exponents: np.ndarray


@dataclass(frozen=True)
class Tables:
    value: np.ndarray  # (n, dim)
    grad: np.ndarray  # (n, dim, 2)
    lap: np.ndarray  # (n, dim)
    grad_lap: np.ndarray  # (n, dim, 2)


def bbox_scaling(verts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo = verts.min(axis=0)
    hi = verts.max(axis=0)
    return 0.5 * (lo + hi), np.maximum(0.5 * (hi - lo), 1e-300)


def build_space(cell, p: int, orthonormalize: bool = False,
                quad: quadrature.CellQuadrature | None = None) -> ElementBasis:
    """Basis of P_p on a cell for any p >= 0.

    Used directly for auxiliary spaces (projection targets, trace checks)
    that legitimately need degrees below the method's minimum.
    """
    if p < 0:
        raise ValueError("p must be >= 0")
    exps = monomial_exponents(p)
    dim = len(exps)
    center, halfwidth = bbox_scaling(cell.vertices)
    C = np.eye(dim)
    if orthonormalize:
        if quad is None:
            quad = quadrature.cell_rule(cell, 2 * p)
        if quad.exactness_degree < 2 * p:
            raise ValueError("quadrature not exact enough to orthonormalize (needs 2p)")
        V = _monomial_partial(exps, center, halfwidth, quad.points, 0, 0)
        G = (V * quad.weights[:, None]).T @ V
        L = cholesky(G, lower=True)
        C = solve_triangular(L, np.eye(dim), lower=True)
    return ElementBasis(
        cell_id=cell.id, degree=p, dim=dim, center=center, halfwidth=halfwidth,
        coefficient_matrix=C, exponents=exps,
    )


def build_basis(cell, p: int, orthonormalize: bool | None = None,
                quad: quadrature.CellQuadrature | None = None) -> ElementBasis:
    """Total-degree-p basis on a cell; Gram-Schmidt is the default for p >= 4.

    The method itself needs p >= 2 (the bilinear form integrates Laplacians);
    lower degrees are rejected here.
    """
    if p < 2:
        raise ValueError(f"p = {p} rejected: the interior-penalty biharmonic form requires p >= 2")
    if orthonormalize is None:
        orthonormalize = p >= 4
    return build_space(cell, p, orthonormalize, quad)


def build_all_bases(mesh, p: int, orthonormalize: bool | None = None) -> list[ElementBasis]:
    return [build_basis(mesh.cell(i), p, orthonormalize) for i in range(mesh.n_cells)]


def _falling(a: np.ndarray, k: int) -> np.ndarray:
    out = np.ones_like(a, dtype=float)
    for j in range(k):
        out = out * (a - j)
    return out


def _monomial_partial(exps, center, halfwidth, pts, ax: int, ay: int) -> np.ndarray:
    """Table of d^ax/dx^ax d^ay/dy^ay of each scaled monomial at pts."""
    X = (pts[:, 0] - center[0]) / halfwidth[0]
    Y = (pts[:, 1] - center[1]) / halfwidth[1]
    a = exps[:, 0].astype(float)
    b = exps[:, 1].astype(float)
    ca = _falling(a, ax) / halfwidth[0] ** ax
    cb = _falling(b, ay) / halfwidth[1] ** ay
    pa = np.maximum(exps[:, 0] - ax, 0)
    pb = np.maximum(exps[:, 1] - ay, 0)
    tx = X[:, None] ** pa[None, :]
    ty = Y[:, None] ** pb[None, :]
    return (ca * cb)[None, :] * tx * ty


def eval_tables(basis: ElementBasis, points: np.ndarray) -> Tables:
    """Values, gradients, Laplacians, and Laplacian gradients at `points`."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    off = np.abs(pts - basis.center) - basis.halfwidth
    if np.any(off > 1e-9 * np.max(basis.halfwidth)):
        logger.debug("eval_tables: %d points outside the cell bounding box",
                     int(np.sum(np.any(off > 0, axis=1))))
    exps, c, hw = basis.exponents, basis.center, basis.halfwidth

    def tab(ax, ay):
        return _monomial_partial(exps, c, hw, pts, ax, ay)

    C = basis.coefficient_matrix
    value = tab(0, 0) @ C.T
    gx = tab(1, 0) @ C.T
    gy = tab(0, 1) @ C.T
    lap_m = tab(2, 0) + tab(0, 2)
    lap = lap_m @ C.T
    tx = (tab(3, 0) + tab(1, 2)) @ C.T
    ty = (tab(2, 1) + tab(0, 3)) @ C.T
    return Tables(
        value=value,
        grad=np.stack([gx, gy], axis=2),
        lap=lap,
        grad_lap=np.stack([tx, ty], axis=2),
    )


# -- harmonic subspace ---------------------------------------------------------


@dataclass(frozen=True)
class HarmonicBasis:
    degree: int
    dim: int
    coefficients: np.ndarray  # (dim, dim_Pp) in unit-scaled monomials
    exponents: np.ndarray
    cell_id: int | None = None


@lru_cache(maxsize=None)
def harmonic_subspace(p: int) -> HarmonicBasis:
    """Exact null space of the Laplacian map P_p -> P_{p-2}.

    Computed in exact integer/rational arithmetic on monomial coefficients so
    members are harmonic identically, then cast to float.
    """
    if p < 0:
        raise ValueError("p must be >= 0")
    exps = monomial_exponents(p)
    dim_p = len(exps)
    if p < 2:
        coeffs = np.eye(dim_p)
    else:
        tgt = monomial_exponents(p - 2)
        index = {tuple(e): i for i, e in enumerate(tgt)}
        L = sympy.zeros(len(tgt), dim_p)
        for j, (a, b) in enumerate(exps):
            if a >= 2:
                L[index[(a - 2, b)], j] += a * (a - 1)
            if b >= 2:
                L[index[(a, b - 2)], j] += b * (b - 1)
        null = L.nullspace()
        coeffs = np.array([[float(v[i]) for i in range(dim_p)] for v in null])
    expected = 1 if p == 0 else 2 * p + 1
    if len(coeffs) != expected:
        raise RuntimeError(f"harmonic space dimension {len(coeffs)} != {expected}")
    return HarmonicBasis(degree=p, dim=len(coeffs), coefficients=coeffs, exponents=exps)


def harmonic_tables(hb: HarmonicBasis, center: np.ndarray, scale: float,
                    points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and gradients of the harmonic basis mapped to a cell.

    The map x -> (x - center)/scale is uniform in both coordinates; anything
    else would break harmonicity.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    c = np.asarray(center, dtype=float)
    hw = np.array([scale, scale], dtype=float)
    V = _monomial_partial(hb.exponents, c, hw, pts, 0, 0) @ hb.coefficients.T
    gx = _monomial_partial(hb.exponents, c, hw, pts, 1, 0) @ hb.coefficients.T
    gy = _monomial_partial(hb.exponents, c, hw, pts, 0, 1) @ hb.coefficients.T
    return V, np.stack([gx, gy], axis=2)
