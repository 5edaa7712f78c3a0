"""End-to-end study runners on small meshes."""

import csv
import json

import numpy as np
import pytest

from polydg import config as cf
from polydg import study as st

CSV_HEADER = "level,h_max,dofs,err_dg,err_h1,err_l2,eoc_dg,eoc_h1,eoc_l2"


@pytest.fixture(scope="module")
def small_cfg():
    return cf.from_dict({
        "problem": "example1",
        "degrees": [2, 3],
        "mesh": {"sizes": [8, 32], "seed": 3, "lloyd_iters": 2},
        "solve": {"estimate_condition": False},
    })


@pytest.fixture(scope="module")
def study_out(small_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("study")
    result = st.run_study(small_cfg, out_dir=out)
    return out, result


def test_study_converges_and_writes_files(study_out):
    out, result = study_out
    assert result["ok"]
    assert len(result["records"]) == 4  # 2 degrees x 2 levels
    for name in ("rates.csv", "rates_p2.csv", "rates_p3.csv", "plot.gp", "study.json"):
        assert (out / name).exists(), name


def test_rates_csv_schema(study_out):
    out, _ = study_out
    lines = (out / "rates.csv").read_text().strip().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 5  # header + 2 degrees x 2 levels
    with open(out / "rates.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["level"] == "0"
    assert rows[0]["eoc_dg"] == ""  # no rate at the first level
    assert float(rows[1]["eoc_dg"]) > 0


def test_per_degree_tables_partition_the_stack(study_out):
    out, _ = study_out
    stacked = (out / "rates.csv").read_text().strip().splitlines()[1:]
    split = []
    for p in (2, 3):
        split += (out / f"rates_p{p}.csv").read_text().strip().splitlines()[1:]
    assert stacked == split


def test_study_json_contents(study_out):
    out, _ = study_out
    with open(out / "study.json") as fh:
        study = json.load(fh)
    assert study["kind"] == "h-refinement"
    assert study["ok"] is True
    assert study["config"]["degrees"] == [2, 3]
    assert study["penalty_constants"]["c_sigma"] == 10.0
    assert study["penalty_constants"]["regime"] == "BoundedFaces"
    assert len(study["mesh_metrics"]) == 2
    for md in study["mesh_metrics"]:
        for key in ("n_cells", "h_max", "C_F_observed", "C_r_observed",
                    "C_s_observed", "theta_observed"):
            assert key in md
    assert {r["p"] for r in study["runs"]} == {2, 3}
    assert all("_report" not in r and "_solution" not in r for r in study["runs"])
    assert set(study["rates"]) == {"2", "3"}


def test_errors_shrink_with_refinement(study_out):
    _, result = study_out
    for p, rows in result["rows_by_p"].items():
        assert rows[1]["err_dg"] < rows[0]["err_dg"]
        assert rows[1]["err_l2"] < rows[0]["err_l2"]


def test_study_reruns_bit_identically(small_cfg, study_out, tmp_path):
    out, _ = study_out
    st.run_study(small_cfg, out_dir=tmp_path)
    assert (tmp_path / "rates.csv").read_bytes() == (out / "rates.csv").read_bytes()


def test_build_meshes_grid_family():
    cfg = cf.from_dict({"mesh": {"family": "grid", "sizes": [2, 4]}})
    meshes = st.build_meshes(cfg.mesh)
    assert [m.n_cells for m in meshes] == [8, 32]


def test_build_meshes_file_family(tmp_path):
    from polydg import mesh as pm
    m = pm.generate_voronoi((0.0, 0.0, 1.0, 1.0), 4, 1, 0)
    path = tmp_path / "m.txt"
    pm.write_mesh(m, path)
    cfg = cf.from_dict({"mesh": {"family": "file", "path": str(path), "sizes": [1]}})
    loaded = st.build_meshes(cfg.mesh)
    assert len(loaded) == 1
    assert pm.meshes_equal(m, loaded[0])


def test_prefinement_single_cell_dof_counts(tmp_path):
    # one square cell: dofs are the full P_p dimensions (p+1)(p+2)/2
    cfg = cf.from_dict({
        "problem": "example1",
        "degrees": [2, 3, 4, 5],
        "mesh": {"family": "grid", "sizes": [1]},
        "solve": {"estimate_condition": False},
    })
    result = st.run_prefinement(cfg, out_dir=tmp_path)
    assert result["ok"]
    assert result["n_cells"] == 2
    assert [row["dofs"] for row in result["table"]] == [12, 20, 30, 42]
    assert (tmp_path / "psweep.csv").exists()
    assert (tmp_path / "psweep.json").exists()
    fit = result["fit"]
    assert fit["slope"] < 0  # error decays with p
    assert fit["points_used"] == 4


def test_prefinement_flags_exactly_reproduced_solutions(tmp_path):
    # cubic solution: every p >= 3 solve lands on the floor and leaves the fit
    cfg = cf.from_dict({
        "problem": "custom",
        "terms": [[1.0, 3, 0], [1.0, 0, 3]],
        "degrees": [3, 4],
        "mesh": {"family": "grid", "sizes": [2]},
        "solve": {"estimate_condition": False},
    })
    result = st.run_prefinement(cfg, out_dir=tmp_path)
    assert result["ok"]
    assert all(row["exact"] for row in result["table"])
    assert result["fit"]["points_used"] == 0
    assert np.isnan(result["fit"]["slope"])


def test_run_verify_small(tmp_path):
    cfg = cf.from_dict({
        "degrees": [2],
        "mesh": {"sizes": [4], "seed": 1, "lloyd_iters": 1},
        "verify": {"n_triangles": 5, "p_max": 2},
    })
    report = st.run_verify(cfg, out_dir=tmp_path)
    assert report["ok"]
    names = [s["suite"] for s in report["suites"]]
    assert names[0] == "simplex-trace"
    assert "cell-inequalities" in names
    assert names[-1] == "harmonic-h1-dilation"
    assert (tmp_path / "verify.json").exists()


def test_run_single_records_failure(small_cfg):
    from polydg import mesh as pm
    m = pm.generate_voronoi((0.0, 0.0, 1.0, 1.0), 8, 2, 3)
    solve_cfg = cf.SolveConfig(tol=1e-10, method="cg", max_iter=1,
                               estimate_condition=False)
    rec = st.run_single(m, 2, small_cfg.problem_instance(), small_cfg.penalty,
                        solve_cfg)
    assert rec["converged"] is False
    assert "error" in rec
    assert rec["residual_history"]


def test_failed_solve_leaves_study_not_ok(tmp_path):
    cfg = cf.from_dict({
        "degrees": [2],
        "mesh": {"sizes": [8], "seed": 3, "lloyd_iters": 2},
        "solve": {"method": "cg", "max_iter": 1, "estimate_condition": False},
    })
    result = st.run_study(cfg, out_dir=tmp_path)
    assert not result["ok"]
    # no usable rate rows, but the file set is still written
    assert (tmp_path / "rates.csv").read_text().strip() == CSV_HEADER
    with open(tmp_path / "study.json") as fh:
        assert json.load(fh)["ok"] is False
