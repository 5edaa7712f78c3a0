"""Cell and face quadrature exact to a requested polynomial degree.

Cell rules are collapsed Gauss product rules on the reference triangle
(positive weights at any degree), mapped over the cell's subtriangulation and
concatenated. Face rules are Gauss-Legendre on the segment.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss


@dataclass(frozen=True)
class CellQuadrature:
    points: np.ndarray  # (n, 2)
    weights: np.ndarray  # (n,), positive, summing to the cell area
    exactness_degree: int


@dataclass(frozen=True)
class FaceQuadrature:
    points: np.ndarray  # (n, 2) on the segment
    weights: np.ndarray  # (n,), summing to the segment length
    normal: np.ndarray  # unit normal, outward for the face's first cell
    exactness_degree: int


@lru_cache(maxsize=None)
def _gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _reference_triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    # Duffy transform of a tensor Gauss rule: x = u, y = v(1-u), jacobian (1-u).
    # A degree-q monomial pulls back to degree q+1 in u, so one extra point in u.
    nu = max((degree + 3) // 2, 1)
    nv = max((degree + 2) // 2, 1)
    u, wu = _gauss01(nu)
    v, wv = _gauss01(nv)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv) * (1.0 - U)
    pts = np.stack([U.ravel(), (V * (1.0 - U)).ravel()], axis=1)
    return pts, W.ravel()


def triangle_rule(tri: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Reference rule mapped affinely onto the triangle `tri` ((3, 2) array)."""
    ref_pts, ref_w = _reference_triangle_rule(degree)
    a, b, c = np.asarray(tri, dtype=float)
    J = np.stack([b - a, c - a], axis=1)
    detJ = abs(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
    pts = a[None, :] + ref_pts @ J.T
    return pts, ref_w * detJ


def composite_rule(triangles, degree: int) -> CellQuadrature:
    """Concatenation of mapped triangle rules over a cover of the cell."""
    all_pts, all_w = [], []
    for tri in triangles:
        p, w = triangle_rule(tri, degree)
        all_pts.append(p)
        all_w.append(w)
    return CellQuadrature(
        points=np.concatenate(all_pts),
        weights=np.concatenate(all_w),
        exactness_degree=degree,
    )


def cell_rule(cell, degree: int) -> CellQuadrature:
    """Quadrature over a mesh cell, exact for polynomials up to `degree`."""
    if degree < 0:
        raise ValueError("quadrature degree must be >= 0")
    return composite_rule(cell.subtriangulation, degree)


def segment_rule(a, b, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on the segment a-b, exact up to `degree`."""
    if degree < 0:
        raise ValueError("quadrature degree must be >= 0")
    n = max((degree + 1 + 1) // 2, 1)  # ceil((degree+1)/2)
    t, w = _gauss01(n)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    return pts, w * float(np.linalg.norm(b - a))


def face_rule(face, degree: int) -> FaceQuadrature:
    """Gauss-Legendre rule on a mesh face, exact up to `degree` (2n-1 for n nodes)."""
    a, b = np.asarray(face.endpoints, dtype=float)
    pts, w = segment_rule(a, b, degree)
    n = len(w)
    return FaceQuadrature(
        points=pts,
        weights=w,
        normal=np.asarray(face.normal, dtype=float),
        exactness_degree=2 * n - 1,
    )
