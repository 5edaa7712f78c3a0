"""Facewise discontinuity-penalization functions sigma and tau.

Two regimes:
  BoundedFaces    — inverse-constant based; valid for meshes with a bounded
                    number of faces per cell, any p >= 2.
  ArbitraryFaces  — mean of ((p+1)(p+d)/h)^3 resp. (p+1)(p+d)/h over the two
                    adjacent cells; stable for cells with arbitrarily many
                    tiny faces, but only proved for p in {2, 3}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import PolyMesh, assign_face_simplices

BOUNDED = "BoundedFaces"
ARBITRARY = "ArbitraryFaces"


@dataclass(frozen=True)
class PenaltyField:
    regime: str
    sigma: np.ndarray  # per face
    tau: np.ndarray  # per face
    degrees: np.ndarray  # per cell
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.sigma <= 0) or np.any(self.tau <= 0):
            raise ValueError("penalty values must be positive on every face")


def _per_cell_degrees(mesh: PolyMesh, degrees) -> np.ndarray:
    p = np.broadcast_to(np.asarray(degrees, dtype=np.int64), (mesh.n_cells,)).copy()
    if np.any(p < 2):
        raise ValueError("the biharmonic interior-penalty form requires p >= 2 on every cell")
    return p


def c_inv_factor(cell, face, p: int, p_coverable: bool, c_inv1: float = 1.0) -> float:
    """Inverse-inequality factor C_INV(p, cell, face) for the bounded regime.

    p_coverable cells take min(area ratio, p^(2(d-1))); otherwise the area
    ratio branch alone applies.
    """
    side = [j for j, c in enumerate(face.adjacent_cells) if c == cell.id]
    if not side:
        raise ValueError(f"face {face.id} does not belong to cell {cell.id}")
    h_simplex = face.flat_simplex_heights[side[0]]
    if not np.isfinite(h_simplex) or h_simplex <= 0:
        raise ValueError(
            f"face {face.id}, cell {cell.id}: zero-height face simplex; assign simplices first"
        )
    simplex_area = 0.5 * face.measure * h_simplex
    ratio = cell.area / simplex_area
    d = 2
    if p_coverable:
        return c_inv1 * min(ratio, float(p) ** (2 * (d - 1)))
    return c_inv1 * ratio


def penalties_bounded(mesh: PolyMesh, degrees, c_sigma: float, c_tau: float,
                      c_inv1: float = 1.0, c_inv2: float = 1.0,
                      p_coverable: bool = True) -> PenaltyField:
    """sigma(F) = C_sigma * max over adjacent cells of C_INV p^2 |F|/|cell| * C_inv2 p^4/h^2,
    tau(F) = C_tau * max of C_INV p^2 |F|/|cell|."""
    p = _per_cell_degrees(mesh, degrees)
    assign_face_simplices(mesh)
    d = 2
    sigma = np.empty(mesh.n_faces)
    tau = np.empty(mesh.n_faces)
    for k in range(mesh.n_faces):
        s_best = t_best = 0.0
        for side, c in enumerate(mesh.face_cells[k]):
            if c < 0:
                continue
            h_simplex = mesh.flat_heights[k, side]
            if not np.isfinite(h_simplex) or h_simplex <= 0:
                raise ValueError(f"face {k}: zero-height face simplex")
            ratio = mesh.cell_areas[c] / (0.5 * mesh.face_lengths[k] * h_simplex)
            pc = float(p[c])
            cinv = c_inv1 * (min(ratio, pc ** (2 * (d - 1))) if p_coverable else ratio)
            base = cinv * pc**2 * mesh.face_lengths[k] / mesh.cell_areas[c]
            t_best = max(t_best, base)
            s_best = max(s_best, base * c_inv2 * pc**4 / mesh.cell_diameters[c] ** 2)
        sigma[k] = c_sigma * s_best
        tau[k] = c_tau * t_best
    return PenaltyField(
        regime=BOUNDED, sigma=sigma, tau=tau, degrees=p,
        constants={"c_sigma": c_sigma, "c_tau": c_tau, "c_inv1": c_inv1,
                   "c_inv2": c_inv2, "p_coverable": p_coverable},
    )


def penalties_arbitrary(mesh: PolyMesh, degrees, c_sigma: float, c_tau: float,
                        allow_any_p: bool = False) -> PenaltyField:
    """sigma(F) = C_sigma * mean of ((p+1)(p+d)/h)^3, tau(F) = C_tau * mean of (p+1)(p+d)/h.

    Stability of this regime is only established for p in {2, 3}; other
    degrees are rejected unless explicitly overridden.
    """
    p = _per_cell_degrees(mesh, degrees)
    if not allow_any_p and np.any((p < 2) | (p > 3)):
        raise ValueError(
            "the arbitrary-face penalty regime is restricted to p in {2, 3}; "
            "pass allow_any_p=True to override"
        )
    d = 2
    q = (p + 1) * (p + d) / mesh.cell_diameters  # per cell
    sigma = np.empty(mesh.n_faces)
    tau = np.empty(mesh.n_faces)
    for k in range(mesh.n_faces):
        cells = [c for c in mesh.face_cells[k] if c >= 0]
        qs = np.array([q[c] for c in cells])
        sigma[k] = c_sigma * np.mean(qs**3)
        tau[k] = c_tau * np.mean(qs)
    return PenaltyField(
        regime=ARBITRARY, sigma=sigma, tau=tau, degrees=p,
        constants={"c_sigma": c_sigma, "c_tau": c_tau},
    )


def penalty_field(mesh: PolyMesh, degrees, regime: str, c_sigma: float = 10.0,
                  c_tau: float = 10.0, c_inv1: float = 1.0, c_inv2: float = 1.0,
                  p_coverable: bool = True, allow_any_p: bool = False) -> PenaltyField:
    if regime == BOUNDED:
        return penalties_bounded(mesh, degrees, c_sigma, c_tau, c_inv1, c_inv2, p_coverable)
    if regime == ARBITRARY:
        return penalties_arbitrary(mesh, degrees, c_sigma, c_tau, allow_any_p)
    raise ValueError(f"unknown penalty regime {regime!r}")
