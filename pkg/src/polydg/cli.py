"""Command-line front end.

Verbs:
  mesh    generate the configured mesh family (or inspect a mesh file)
  solve   single solve on the first configured size and degree
  study   h-refinement study over sizes x degrees
  psweep  p-refinement sweep on the first configured mesh
  verify  inequality validation suites

Exit codes: 0 success, 1 failed solve or bad input, 2 violated inequality
bound. Heavy imports happen after --threads is applied so the BLAS pool size
actually takes effect.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polydg", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", type=Path, help="TOML study configuration")
    ap.add_argument("--seed", type=int, help="override mesh.seed")
    ap.add_argument("--threads", type=int, help="BLAS/OpenMP thread cap")
    ap.add_argument("--out", type=Path, help="override output directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)
    mesh_p = sub.add_parser("mesh", help="generate or inspect meshes")
    mesh_p.add_argument("--inspect", type=Path, metavar="MESHFILE",
                        help="print metrics of an existing mesh file")
    solve_p = sub.add_parser("solve", help="single solve (first size, first degree)")
    solve_p.add_argument("--mtx", type=Path, help="dump the system matrix (Matrix Market)")
    sub.add_parser("study", help="h-refinement study")
    sub.add_parser("psweep", help="p-refinement sweep")
    sub.add_parser("verify", help="inequality suites")
    return ap


def _apply_threads(n: int | None):
    if n is None:
        return
    if n < 1:
        raise SystemExit("--threads must be >= 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _load_config(args):
    from .config import StudyConfig, load_config

    cfg = load_config(args.config) if args.config else StudyConfig()
    if args.seed is not None:
        cfg.mesh.seed = args.seed
    if args.out is not None:
        cfg.output = str(args.out)
    return cfg


def _cmd_mesh(args) -> int:
    from . import mesh as pm
    from .study import _dump_json, build_meshes

    if args.inspect:
        m = pm.read_mesh(args.inspect)
        metrics = pm.compute_metrics(m).to_dict()
        print(json.dumps(metrics, indent=2))
        return 0
    cfg = _load_config(args)
    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    meshes = build_meshes(cfg.mesh)
    summary = []
    for level, m in enumerate(meshes):
        path = out_dir / f"mesh_{level}.txt"
        pm.write_mesh(m, path)
        md = pm.compute_metrics(m, degrees=max(cfg.degrees)).to_dict()
        md.update(level=level, path=str(path))
        summary.append(md)
        print(f"level {level}: {m.n_cells} cells, h_max {m.h_max:.5f} -> {path}")
    _dump_json({"meshes": summary}, out_dir / "mesh_metrics.json")
    return 0


def _cmd_solve(args) -> int:
    import dataclasses

    from .study import _dump_json, build_meshes, run_single

    cfg = _load_config(args)
    mesh_cfg = dataclasses.replace(cfg.mesh, sizes=cfg.mesh.sizes[:1])
    mesh_ = build_meshes(mesh_cfg)[0]
    p = cfg.degrees[0]
    rec = run_single(mesh_, p, cfg.problem_instance(), cfg.penalty, cfg.solve)
    if args.mtx:
        import scipy.io

        from . import basis as pb
        from .assembly import assemble_bilinear
        from .study import _penalty_for

        bases = pb.build_all_bases(mesh_, p)
        system = assemble_bilinear(mesh_, bases, _penalty_for(mesh_, p, cfg.penalty))
        # mmwrite swallows a missing parent directory instead of raising
        args.mtx.parent.mkdir(parents=True, exist_ok=True)
        scipy.io.mmwrite(str(args.mtx), system.matrix)
    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    rec_out = {k: v for k, v in rec.items() if not k.startswith("_")}
    _dump_json(rec_out, out_dir / "solve.json")
    print(json.dumps(rec_out, indent=2, default=float))
    return 0 if rec["converged"] else 1


def _cmd_study(args) -> int:
    from .study import run_study

    result = run_study(_load_config(args))
    return 0 if result["ok"] else 1


def _cmd_psweep(args) -> int:
    from .study import run_prefinement

    result = run_prefinement(_load_config(args))
    fit = result["fit"]
    print(f"fit: slope {fit['slope']:.3f}, R^2 {fit['r_squared']:.4f} "
          f"({fit['points_used']} points)")
    return 0 if result["ok"] else 1


def _cmd_verify(args) -> int:
    from .study import run_verify

    report = run_verify(_load_config(args))
    for suite in report["suites"]:
        label = suite.get("suite", "?")
        if "n_cells" in suite:
            label += f" ({suite['n_cells']} cells)"
        print(f"{label}: {'pass' if suite['passed'] else 'FAIL'}")
        if not suite["passed"] and suite.get("violations"):
            print(json.dumps(suite["violations"][0], indent=2))
    return 0 if report["ok"] else 2


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _apply_threads(args.threads)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    handler = {
        "mesh": _cmd_mesh,
        "solve": _cmd_solve,
        "study": _cmd_study,
        "psweep": _cmd_psweep,
        "verify": _cmd_verify,
    }[args.verb]
    from .config import ConfigError

    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
