"""Config-driven experiment runners: h-refinement studies, p-refinement
sweeps, and inequality verification, with CSV/JSON/gnuplot output."""

from __future__ import annotations

import csv
import json
import logging
import time
from pathlib import Path

import numpy as np

from . import basis as pb
from . import mesh as pm
from . import norms as pn
from . import verify as pv
from .assembly import assemble_dg_gram, assemble_system
from .config import StudyConfig
from .penalty import penalty_field
from .solve import SolveError, estimate_condition, generalized_extremes, solve_spd

logger = logging.getLogger(__name__)

CSV_FIELDS = ["level", "h_max", "dofs", "err_dg", "err_h1", "err_l2",
              "eoc_dg", "eoc_h1", "eoc_l2"]


def build_meshes(mesh_cfg) -> list[pm.PolyMesh]:
    """One mesh per configured size, per the family's size semantics."""
    fam = mesh_cfg.family
    if fam == "file":
        return [pm.read_mesh(mesh_cfg.path)]
    out = []
    if fam == "agglomerated":
        fine = pm.triangle_grid(mesh_cfg.fine_n, mesh_cfg.domain)
        for size in mesh_cfg.sizes:
            out.append(pm.agglomerate(fine, size, seed=mesh_cfg.seed))
        # refinement = more aggregates = smaller h; studies expect coarse->fine
        return out
    for size in mesh_cfg.sizes:
        if fam == "voronoi":
            out.append(pm.generate_voronoi(mesh_cfg.domain, size,
                                           lloyd_iters=mesh_cfg.lloyd_iters,
                                           seed=mesh_cfg.seed))
        elif fam == "grid":
            out.append(pm.triangle_grid(size, mesh_cfg.domain))
        else:
            raise ValueError(f"unknown mesh family {fam!r}")
    return out


def _penalty_for(mesh, p, pen_cfg):
    return penalty_field(
        mesh, p, pen_cfg.regime,
        c_sigma=pen_cfg.c_sigma, c_tau=pen_cfg.c_tau,
        c_inv1=pen_cfg.c_inv1, c_inv2=pen_cfg.c_inv2,
        p_coverable=pen_cfg.p_coverable, allow_any_p=pen_cfg.allow_any_p,
    )


def run_single(mesh: pm.PolyMesh, p: int, problem, pen_cfg, solve_cfg,
               coercivity: bool = False) -> dict:
    """Assemble, solve, and measure one (mesh, degree) pair."""
    t0 = time.perf_counter()
    bases = pb.build_all_bases(mesh, p)
    penalty = _penalty_for(mesh, p, pen_cfg)
    system = assemble_system(mesh, bases, penalty, problem)
    record = {
        "p": p, "n_cells": mesh.n_cells, "dofs": system.n_dofs,
        "h_max": mesh.h_max, "converged": False,
    }
    try:
        rep = solve_spd(system, tol=solve_cfg.tol, max_iter=solve_cfg.max_iter,
                        method=solve_cfg.method)
    except SolveError as exc:
        record["error"] = str(exc)
        record["residual_history"] = [float(r) for r in exc.residual_history]
        record["seconds"] = time.perf_counter() - t0
        return record
    er = pn.errors(mesh, bases, penalty, rep.solution, problem)
    record.update(converged=True, solver=rep.method, iterations=rep.iterations,
                  residual=rep.residual, rel_residual=rep.rel_residual,
                  err_dg=er.err_dg, err_h1=er.err_h1, err_l2=er.err_l2)
    record["_report"] = er
    record["_solution"] = rep.solution
    if solve_cfg.estimate_condition:
        record["cond_estimate"] = estimate_condition(system)
    if coercivity:
        G = assemble_dg_gram(mesh, bases, penalty)
        lam_min, _ = generalized_extremes(system.matrix, G, mode="min")
        record["coercivity_lambda_min"] = lam_min
    record["seconds"] = time.perf_counter() - t0
    return record


def _write_rates(rows_by_p: dict, out_dir: Path):
    def fmt(row):
        return {k: (f"{row[k]:.16e}" if isinstance(row[k], float) and np.isfinite(row[k])
                    else ("" if isinstance(row[k], float) else row[k]))
                for k in CSV_FIELDS}

    with open(out_dir / "rates.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for p in sorted(rows_by_p):
            for row in rows_by_p[p]:
                w.writerow(fmt(row))
    for p, rows in rows_by_p.items():
        with open(out_dir / f"rates_p{p}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            w.writeheader()
            for row in rows:
                w.writerow(fmt(row))


_GNUPLOT = """\
set terminal pngcairo size 800,600
set output 'rates.png'
set logscale xy
set datafile separator ','
set xlabel 'h_max'
set ylabel 'error'
set key left top
plot {plots}
"""


def _write_gnuplot(degrees, out_dir: Path):
    plots = ", \\\n     ".join(
        f"'rates_p{p}.csv' skip 1 using 2:4 with linespoints title 'DG p={p}'"
        for p in sorted(degrees)
    )
    (out_dir / "plot.gp").write_text(_GNUPLOT.format(plots=plots))


def _mesh_metrics(meshes, degrees) -> list[dict]:
    out = []
    for level, m in enumerate(meshes):
        md = pm.compute_metrics(m, degrees=max(degrees)).to_dict()
        md["level"] = level
        out.append(md)
    return out


def _strip_private(record: dict) -> dict:
    return {k: v for k, v in record.items() if not k.startswith("_")}


def run_study(cfg: StudyConfig, out_dir=None, coercivity: bool = False) -> dict:
    """h-refinement study over cfg.mesh.sizes x cfg.degrees.

    Returns {"ok", "records", "rows_by_p", "meshes"}; writes rates.csv (and a
    per-degree copy), study.json, and a gnuplot script to the output
    directory. Solver failures are recorded and leave ok False, with partial
    results preserved.
    """
    out_dir = Path(out_dir if out_dir is not None else cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = cfg.problem_instance()
    meshes = build_meshes(cfg.mesh)
    records, rows_by_p = [], {}
    ok = True
    for p in cfg.degrees:
        reports = []
        for level, mesh_ in enumerate(meshes):
            rec = run_single(mesh_, p, problem, cfg.penalty, cfg.solve,
                             coercivity=coercivity)
            rec["level"] = level
            records.append(rec)
            if not rec["converged"]:
                ok = False
                logger.error("solve failed: p=%d level=%d: %s", p, level,
                             rec.get("error"))
                continue
            reports.append(rec["_report"])
            logger.info("p=%d level=%d dofs=%d err_dg=%.3e [%.1fs]",
                        p, level, rec["dofs"], rec["err_dg"], rec["seconds"])
        if len(reports) == len(meshes):
            rows_by_p[p] = pn.eoc_table(reports)
    _write_rates(rows_by_p, out_dir)
    _write_gnuplot(cfg.degrees, out_dir)
    study = {
        "kind": "h-refinement",
        "config": _config_dict(cfg),
        "mesh_metrics": _mesh_metrics(meshes, cfg.degrees),
        "penalty_constants": vars(cfg.penalty).copy(),
        "runs": [_strip_private(r) for r in records],
        "rates": {str(p): rows for p, rows in rows_by_p.items()},
        "ok": ok,
    }
    _dump_json(study, out_dir / "study.json")
    return {"ok": ok, "records": records, "rows_by_p": rows_by_p, "meshes": meshes}


def run_prefinement(cfg: StudyConfig, out_dir=None) -> dict:
    """DG error against p on the first configured mesh; fits log(err) vs p.

    Runs whose error sits at the solver floor (exact reproduction of a
    polynomial solution) are flagged "exact" and excluded from the fit.
    """
    out_dir = Path(out_dir if out_dir is not None else cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = cfg.problem_instance()
    mesh_cfg_one = cfg.mesh
    meshes = build_meshes(mesh_cfg_one)
    mesh_ = meshes[0]
    table, records = [], []
    ok = True
    norm_ref = None
    for p in cfg.degrees:
        rec = run_single(mesh_, p, problem, cfg.penalty, cfg.solve)
        records.append(rec)
        if not rec["converged"]:
            ok = False
            continue
        if norm_ref is None:
            penalty = _penalty_for(mesh_, p, cfg.penalty)
            norm_ref = pn.exact_dg_norm(mesh_, penalty, problem)
        exact = rec["err_dg"] <= max(1e-11 * max(norm_ref, 1.0), 1e-13)
        table.append({"p": p, "dofs": rec["dofs"], "err_dg": rec["err_dg"],
                      "exact": exact})
    fit_pts = [(row["p"], row["err_dg"]) for row in table
               if not row["exact"] and row["err_dg"] > 0]
    slope = intercept = r_squared = float("nan")
    if len(fit_pts) >= 2:
        ps = np.array([q for q, _ in fit_pts], dtype=float)
        log_e = np.log([e for _, e in fit_pts])
        slope, intercept = np.polyfit(ps, log_e, 1)
        resid = log_e - (slope * ps + intercept)
        ss_tot = np.sum((log_e - log_e.mean()) ** 2)
        r_squared = 1.0 - float(np.sum(resid**2) / ss_tot) if ss_tot > 0 else 1.0
    result = {
        "kind": "p-refinement",
        "config": _config_dict(cfg),
        "n_cells": mesh_.n_cells,
        "h_max": mesh_.h_max,
        "table": table,
        "fit": {"slope": float(slope), "intercept": float(intercept),
                "r_squared": float(r_squared), "points_used": len(fit_pts)},
        "runs": [_strip_private(r) for r in records],
        "ok": ok,
    }
    with open(out_dir / "psweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["p", "dofs", "err_dg", "exact"])
        w.writeheader()
        for row in table:
            w.writerow(row)
    _dump_json(result, out_dir / "psweep.json")
    return result


def run_verify(cfg: StudyConfig, out_dir=None) -> dict:
    """All inequality suites on the configured mesh family."""
    out_dir = Path(out_dir if out_dir is not None else cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    vc = cfg.verify
    suites = [pv.run_simplex_suite(n_triangles=vc.n_triangles, p_max=vc.p_max,
                                   seed=cfg.mesh.seed)]
    meshes = build_meshes(cfg.mesh)
    for level, m in enumerate(meshes):
        rep = pv.run_cell_suite(m, cfg.degrees, harmonic=vc.harmonic)
        rep["level"] = level
        rep["n_cells"] = m.n_cells
        suites.append(rep)
    cell0 = meshes[0].cell(0)
    suites.append(pv.dilation_scaling_check(cell0, min(max(cfg.degrees), 6),
                                            pv.cell_c_s(meshes[0], 0)))
    ok = all(s["passed"] for s in suites)
    report = {"kind": "verify", "config": _config_dict(cfg), "suites": suites,
              "ok": ok}
    _dump_json(report, out_dir / "verify.json")
    return report


def _config_dict(cfg: StudyConfig) -> dict:
    return {
        "problem": cfg.problem,
        "terms": cfg.terms,
        "degrees": list(cfg.degrees),
        "mesh": vars(cfg.mesh).copy(),
        "penalty": vars(cfg.penalty).copy(),
        "solve": vars(cfg.solve).copy(),
        "output": cfg.output,
    }


def _dump_json(obj, path: Path):
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(f"not JSON serializable: {type(o)}")

    def clean(x):
        if isinstance(x, float) and not np.isfinite(x):
            return None
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        return x

    with open(path, "w") as fh:
        json.dump(clean(obj), fh, indent=2, default=default)
        fh.write("\n")
