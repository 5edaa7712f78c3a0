"""Error measures and empirical convergence orders.

The mesh-dependent norm matching the bilinear form is

    |||v|||^2 = sum_K ||lap v||^2_K
              + int_Gamma sigma |jump v|^2 + tau |jump grad v|^2

with data-corrected jumps on Dirichlet faces (g_D - v and g_N - grad v . n).
The broken H1 measure is the gradient seminorm summed over cells.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import basis as pb
from . import quadrature as pq
from .assembly import dof_map
from .mesh import DIRICHLET, PolyMesh


@dataclass(frozen=True)
class ErrorReport:
    p: int
    n_cells: int
    dofs: int
    h_max: float
    err_dg: float
    err_h1: float
    err_l2: float

    def as_dict(self) -> dict:
        return {
            "p": self.p, "n_cells": self.n_cells, "dofs": self.dofs,
            "h_max": self.h_max, "err_dg": self.err_dg,
            "err_h1": self.err_h1, "err_l2": self.err_l2,
        }


def _error_quad_degree(bases, quad_degree):
    return quad_degree if quad_degree is not None else 2 * max(b.degree for b in bases) + 4


def volume_errors(mesh: PolyMesh, bases, coeffs: np.ndarray, problem,
                  quad_degree: int | None = None) -> tuple[float, float, float]:
    """Squared broken integrals (lap error, grad error, value error)."""
    dm = dof_map(bases)
    deg = _error_quad_degree(bases, quad_degree)
    acc = np.zeros(3)
    for i in range(mesh.n_cells):
        q = pq.cell_rule(mesh.cell(i), deg)
        t = pb.eval_tables(bases[i], q.points)
        c = coeffs[dm.block(i)]
        x, y = q.points[:, 0], q.points[:, 1]
        e_lap = problem.lap(x, y) - t.lap @ c
        e_grad = problem.grad(x, y) - np.einsum("ndk,d->nk", t.grad, c)
        e_val = problem.value(x, y) - t.value @ c
        acc[0] += q.weights @ e_lap**2
        acc[1] += q.weights @ np.sum(e_grad**2, axis=1)
        acc[2] += q.weights @ e_val**2
    return float(acc[0]), float(acc[1]), float(acc[2])


def _face_jump_errors(mesh, bases, penalty, coeffs, problem, deg) -> float:
    """Penalty part of the squared mesh-dependent error norm."""
    dm = dof_map(bases)
    acc = 0.0
    for k in range(mesh.n_faces):
        fq = pq.face_rule(mesh.face(k), deg)
        n = fq.normal
        cells = [c for c in mesh.face_cells[k] if c >= 0]
        if len(cells) == 2:
            jv = np.zeros(len(fq.weights))
            jg = np.zeros(len(fq.weights))
            for side, c in enumerate(cells):
                eps = 1.0 if side == 0 else -1.0
                t = pb.eval_tables(bases[c], fq.points)
                u = coeffs[dm.block(c)]
                jv += eps * (t.value @ u)
                jg += eps * ((t.grad @ n) @ u)
        elif mesh.face_tags[k] == DIRICHLET:
            c = cells[0]
            t = pb.eval_tables(bases[c], fq.points)
            u = coeffs[dm.block(c)]
            jv = (t.value @ u) - problem.dirichlet_value(fq.points)
            jg = ((t.grad @ n) @ u) - problem.dirichlet_normal(fq.points, n)
        else:
            continue
        acc += penalty.sigma[k] * (fq.weights @ jv**2)
        acc += penalty.tau[k] * (fq.weights @ jg**2)
    return float(acc)


def errors(mesh: PolyMesh, bases, penalty, coeffs: np.ndarray, problem,
           quad_degree: int | None = None) -> ErrorReport:
    """Mesh-dependent, broken H1 seminorm, and L2 errors of a discrete solution."""
    deg = _error_quad_degree(bases, quad_degree)
    lap2, grad2, val2 = volume_errors(mesh, bases, coeffs, problem, deg)
    jump2 = _face_jump_errors(mesh, bases, penalty, coeffs, problem, deg)
    dm = dof_map(bases)
    return ErrorReport(
        p=max(b.degree for b in bases),
        n_cells=mesh.n_cells,
        dofs=dm.n_dofs,
        h_max=mesh.h_max,
        err_dg=float(np.sqrt(lap2 + jump2)),
        err_h1=float(np.sqrt(grad2)),
        err_l2=float(np.sqrt(val2)),
    )


def dg_norm_error(mesh: PolyMesh, bases, penalty, u_h: np.ndarray, problem,
                  quad_degree: int | None = None) -> float:
    deg = _error_quad_degree(bases, quad_degree)
    lap2, _, _ = volume_errors(mesh, bases, u_h, problem, deg)
    return float(np.sqrt(lap2 + _face_jump_errors(mesh, bases, penalty, u_h, problem, deg)))


def broken_h1_error(mesh: PolyMesh, bases, u_h: np.ndarray, problem,
                    quad_degree: int | None = None) -> float:
    _, grad2, _ = volume_errors(mesh, bases, u_h, problem, quad_degree)
    return float(np.sqrt(grad2))


def l2_error(mesh: PolyMesh, bases, u_h: np.ndarray, problem,
             quad_degree: int | None = None) -> float:
    _, _, val2 = volume_errors(mesh, bases, u_h, problem, quad_degree)
    return float(np.sqrt(val2))


def exact_dg_norm(mesh: PolyMesh, penalty, problem, quad_degree: int = 12) -> float:
    """|||u||| of the exact solution, for relative-error reporting."""
    acc = 0.0
    for i in range(mesh.n_cells):
        q = pq.cell_rule(mesh.cell(i), quad_degree)
        acc += q.weights @ problem.lap(q.points[:, 0], q.points[:, 1]) ** 2
    for k in range(mesh.n_faces):
        if mesh.face_tags[k] != DIRICHLET:
            continue
        fq = pq.face_rule(mesh.face(k), quad_degree)
        gD = problem.dirichlet_value(fq.points)
        gN = problem.dirichlet_normal(fq.points, fq.normal)
        acc += penalty.sigma[k] * (fq.weights @ gD**2)
        acc += penalty.tau[k] * (fq.weights @ gN**2)
    return float(np.sqrt(acc))


def eoc(h: np.ndarray, err: np.ndarray) -> np.ndarray:
    """Pairwise empirical orders log(e_i/e_{i+1}) / log(h_i/h_{i+1}).

    Entries where consecutive h coincide are NaN (with a warning): no rate
    can be extracted from equal resolutions.
    """
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    out = np.full(len(h) - 1, np.nan)
    for i in range(len(h) - 1):
        dh = np.log(h[i] / h[i + 1])
        if dh == 0.0 or not np.isfinite(dh):
            warnings.warn(f"equal mesh sizes at levels {i}, {i + 1}: EOC undefined")
            continue
        with np.errstate(divide="ignore"):
            out[i] = np.log(err[i] / err[i + 1]) / dh
    return out


def eoc_table(reports: list[ErrorReport]) -> list[dict]:
    """CSV-ready rows: level,h_max,dofs,err_dg,err_h1,err_l2,eoc_dg,eoc_h1,eoc_l2."""
    hs = np.array([r.h_max for r in reports])
    rates = {
        key: eoc(hs, np.array([getattr(r, key) for r in reports]))
        for key in ("err_dg", "err_h1", "err_l2")
    }
    rows = []
    for lvl, r in enumerate(reports):
        row = {"level": lvl, "h_max": r.h_max, "dofs": r.dofs,
               "err_dg": r.err_dg, "err_h1": r.err_h1, "err_l2": r.err_l2}
        for key in ("err_dg", "err_h1", "err_l2"):
            tag = "eoc_" + key.split("_")[1]
            row[tag] = float(rates[key][lvl - 1]) if lvl > 0 else np.nan
        rows.append(row)
    return rows
