"""Numerical validation of the trace and inverse inequalities the penalty
regimes rest on.

Three checks, all phrased as Rayleigh quotients over finite-dimensional
polynomial spaces, so the generalized eigen-solve gives the exact maximizer
(random sampling is kept as a cross-check; it can only undershoot):

  simplex trace     ||v||^2_F / ||v||^2_T       <= (p+1)(p+d)/d * |F|/|T|,  v in P_p(T)
  polytopic trace   ||v||^2_bdry / ||v||^2_cell <= C_s (p+1)(p+d) / h,      v in P_p
  harmonic H1       ||grad v||^2 / ||v||^2      <= (C_s (p+1)(p+d) / h)^2,  v in H_p

C_s is the face-simplex height metric of the cell under test. The H1 bound is
special to harmonic polynomials; the same quotient over full P_p can exceed it
on stretched cells, which the harmonic check records as a probe without
asserting anything about it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np
import scipy.linalg

from . import basis as pb
from . import quadrature as pq
from .mesh import PolyMesh

_D = 2
_SLACK = 1e-8


@dataclass
class InequalityWitness:
    name: str
    max_ratio_observed: float
    bound: float
    argmax_coefficients: np.ndarray
    sample_count: int
    extras: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.bound - self.max_ratio_observed

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "max_ratio_observed": self.max_ratio_observed,
            "bound": self.bound,
            "slack": self.slack,
            "argmax_coefficients": np.asarray(self.argmax_coefficients).tolist(),
            "sample_count": self.sample_count,
            "extras": self.extras,
        }


class BoundViolation(AssertionError):
    def __init__(self, witness: InequalityWitness):
        super().__init__(
            f"{witness.name}: observed ratio {witness.max_ratio_observed:.12e} "
            f"exceeds bound {witness.bound:.12e}"
        )
        self.witness = witness


def _assert_bound(witness: InequalityWitness) -> InequalityWitness:
    if witness.max_ratio_observed > witness.bound * (1.0 + _SLACK):
        raise BoundViolation(witness)
    return witness


def _sym_eigmax(B: np.ndarray) -> tuple[float, np.ndarray]:
    w, V = scipy.linalg.eigh(B)
    return float(w[-1]), V[:, -1]


def _gen_eigmax(K: np.ndarray, M: np.ndarray) -> tuple[float, np.ndarray]:
    """Largest lambda of K x = lambda M x with a whitening fallback when the
    mass Gram is too ill-conditioned for the direct driver."""
    try:
        w, V = scipy.linalg.eigh(K, M)
        return float(w[-1]), V[:, -1]
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError):
        mw, mV = scipy.linalg.eigh(M)
        keep = mw > 1e-13 * mw[-1]
        W = mV[:, keep] / np.sqrt(mw[keep])
        w, V = scipy.linalg.eigh(W.T @ K @ W)
        return float(w[-1]), W @ V[:, -1]


def _segment_gram(basis, a, b, degree: int) -> np.ndarray:
    pts, w = pq.segment_rule(a, b, degree)
    V = pb.eval_tables(basis, pts).value
    return (w[:, None] * V).T @ V


def _ref_monomials(p: int, upts: np.ndarray) -> np.ndarray:
    exps = pb.monomial_exponents(p)
    return upts[:, 0:1] ** exps[:, 0] * upts[:, 1:2] ** exps[:, 1]


def check_simplex_trace(T: np.ndarray, F: int, p: int,
                        n_samples: int = 200, rng=None) -> InequalityWitness:
    """Trace inequality on a triangle for the edge with index F (0, 1 or 2).

    Works in reference-triangle monomials: their Gram conditioning does not
    depend on the triangle's shape, so slivers are as tractable as equilateral
    cells (the ratio and the bound blow up together, the basis does not).
    """
    T = np.asarray(T, dtype=float)
    if F not in (0, 1, 2):
        raise ValueError("F must index one of the triangle's three edges")
    J = np.stack([T[1] - T[0], T[2] - T[0]], axis=1)
    Jinv = np.linalg.inv(J)
    to_ref = lambda x: (x - T[0]) @ Jinv.T  # noqa: E731
    pts, w = pq.triangle_rule(T, 2 * p)
    V = _ref_monomials(p, to_ref(pts))
    M = (w[:, None] * V).T @ V
    a, b = T[F], T[(F + 1) % 3]
    fpts, fw = pq.segment_rule(a, b, 2 * p)
    Vf = _ref_monomials(p, to_ref(fpts))
    B = (fw[:, None] * Vf).T @ Vf
    lam, vec = _gen_eigmax(B, M)
    rng = np.random.default_rng(0) if rng is None else rng
    samples = rng.standard_normal((n_samples, len(M)))
    ratios = (np.einsum("sd,de,se->s", samples, B, samples)
              / np.einsum("sd,de,se->s", samples, M, samples))
    area = 0.5 * abs(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
    bound = (p + 1) * (p + _D) / _D * np.linalg.norm(b - a) / area
    return _assert_bound(InequalityWitness(
        name=f"simplex-trace p={p}",
        max_ratio_observed=max(lam, float(ratios.max())),
        bound=float(bound),
        argmax_coefficients=vec,
        sample_count=n_samples,
    ))


def cell_c_s(mesh: PolyMesh, i: int) -> float:
    """Face-simplex height metric of one cell:
    max over faces of h_cell * |F| / (d * simplex area)."""
    from .mesh import assign_face_simplices

    assign_face_simplices(mesh)
    best = 0.0
    for k in mesh.cell_faces[i]:
        side = 0 if mesh.face_cells[k, 0] == i else 1
        h_f = mesh.flat_heights[k, side]
        if not np.isfinite(h_f) or h_f <= 0:
            raise ValueError(f"cell {i}, face {k}: missing face simplex")
        simplex_area = 0.5 * mesh.face_lengths[k] * h_f
        best = max(best, mesh.cell_diameters[i] * mesh.face_lengths[k] / (_D * simplex_area))
    return best


def check_polytopic_trace(cell, p: int, C_s_observed: float,
                          quad: pq.CellQuadrature | None = None) -> InequalityWitness:
    """Whole-boundary trace inequality on a polygonal cell."""
    if quad is None:
        quad = pq.cell_rule(cell, 2 * p)
    basis = pb.build_space(cell, p)
    V = pb.eval_tables(basis, quad.points).value
    M = (quad.weights[:, None] * V).T @ V
    verts = cell.vertices
    B = np.zeros((basis.dim, basis.dim))
    for k in range(len(verts)):
        B += _segment_gram(basis, verts[k], verts[(k + 1) % len(verts)], 2 * p)
    lam, vec = _gen_eigmax(B, M)
    bound = C_s_observed * (p + 1) * (p + _D) / cell.diameter
    return _assert_bound(InequalityWitness(
        name=f"polytopic-trace cell={cell.id} p={p}",
        max_ratio_observed=lam,
        bound=float(bound),
        argmax_coefficients=vec,
        sample_count=0,
        extras={"n_boundary_segments": len(verts)},
    ))


def _harmonic_grams(cell, p: int, quad: pq.CellQuadrature):
    hb = pb.harmonic_subspace(p)
    center = cell.centroid
    scale = 0.5 * cell.diameter
    V, G = pb.harmonic_tables(hb, center, scale, quad.points)
    w = quad.weights
    M = (w[:, None] * V).T @ V
    K = (w[:, None] * G[:, :, 0]).T @ G[:, :, 0] + (w[:, None] * G[:, :, 1]).T @ G[:, :, 1]
    return hb, M, K


def check_harmonic_h1(cell, p: int, C_s_observed: float,
                      quad: pq.CellQuadrature | None = None,
                      probe_full_space: bool = True) -> InequalityWitness:
    """H1-to-L2 inverse inequality on the harmonic subspace H_p of a cell."""
    if not 0 <= p <= 6:
        raise ValueError("harmonic check covers p in 0..6")
    if quad is None:
        quad = pq.cell_rule(cell, 2 * p)
    hb, M, K = _harmonic_grams(cell, p, quad)
    lam, vec = _gen_eigmax(K, M)
    bound = (C_s_observed * (p + 1) * (p + _D) / cell.diameter) ** 2
    extras = {"dim_harmonic": hb.dim}
    if probe_full_space:
        basis = pb.build_space(cell, p, orthonormalize=True, quad=quad)
        t = pb.eval_tables(basis, quad.points)
        w = quad.weights
        Kf = ((w[:, None] * t.grad[:, :, 0]).T @ t.grad[:, :, 0]
              + (w[:, None] * t.grad[:, :, 1]).T @ t.grad[:, :, 1])
        extras["full_space_ratio"] = _sym_eigmax(Kf)[0]
        extras["full_space_exceeds_bound"] = bool(extras["full_space_ratio"] > bound)
    return _assert_bound(InequalityWitness(
        name=f"harmonic-h1 cell={cell.id} p={p}",
        max_ratio_observed=lam,
        bound=float(bound),
        argmax_coefficients=hb.coefficients.T @ vec,
        sample_count=0,
        extras=extras,
    ))


# -- suites --------------------------------------------------------------------


def _suite_report(name: str, witnesses, failures) -> dict:
    ok = [w for w in witnesses]
    worst = min(ok, key=lambda w: w.slack / max(w.bound, 1e-300)) if ok else None
    return {
        "suite": name,
        "checks": len(ok) + len(failures),
        "violations": [w.as_dict() for w in failures],
        "passed": not failures,
        "min_relative_slack": (worst.slack / worst.bound) if worst else None,
        "worst_case": worst.as_dict() if worst else None,
    }


def run_simplex_suite(n_triangles: int = 1000, p_max: int = 6, seed: int = 0,
                      n_samples: int = 50) -> dict:
    """Random-triangle sweep of the simplex trace bound, slivers included."""
    rng = np.random.default_rng(seed)
    witnesses, failures = [], []
    count = 0
    while count < n_triangles:
        T = rng.random((3, 2))
        e1, e2 = T[1] - T[0], T[2] - T[0]
        area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
        if abs(area) < 1e-10:
            continue
        if area < 0:
            T = T[::-1]
        count += 1
        for p in range(p_max + 1):
            for F in range(3):
                try:
                    witnesses.append(check_simplex_trace(T, F, p, n_samples, rng))
                except BoundViolation as exc:
                    failures.append(exc.witness)
    return _suite_report("simplex-trace", witnesses, failures)


def run_cell_suite(mesh: PolyMesh, degrees, harmonic: bool = True) -> dict:
    """Polytopic trace and harmonic H1 checks on every cell of a mesh."""
    witnesses, failures = [], []
    for i in range(mesh.n_cells):
        cs = cell_c_s(mesh, i)
        cell = mesh.cell(i)
        for p in degrees:
            quad = pq.cell_rule(cell, 2 * p)
            checks = [(check_polytopic_trace, (cell, p, cs, quad))]
            if harmonic:
                checks.append((check_harmonic_h1, (cell, p, cs, quad)))
            for fn, args in checks:
                try:
                    witnesses.append(fn(*args))
                except BoundViolation as exc:
                    failures.append(exc.witness)
    return _suite_report("cell-inequalities", witnesses, failures)


def dilation_scaling_check(cell, p: int, C_s_observed: float,
                           scales=(1.0, 0.5, 0.25), tol: float = 0.01) -> dict:
    """The harmonic H1 ratio must scale as h^-2 under cell dilation."""
    ratios = []
    for s in scales:
        shim = SimpleNamespace(
            id=cell.id,
            vertices=cell.vertices * s,
            subtriangulation=[t * s for t in cell.subtriangulation],
            centroid=cell.centroid * s,
            diameter=cell.diameter * s,
        )
        w = check_harmonic_h1(shim, p, C_s_observed, probe_full_space=False)
        ratios.append(w.max_ratio_observed)
    ref = ratios[0] * scales[0] ** 2
    rel_dev = [abs(r * s**2 - ref) / ref for r, s in zip(ratios, scales)]
    return {
        "suite": "harmonic-h1-dilation",
        "scales": list(scales),
        "ratios": ratios,
        "max_relative_deviation": float(max(rel_dev)),
        "passed": bool(max(rel_dev) <= tol),
    }
