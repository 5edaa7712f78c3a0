"""Trace/inverse inequality checks: sharp cases, slivers, violation reporting.

The sharp reference ratios below follow from closed-form eigenproblems:
constants make the simplex and polytopic trace bounds exact equalities, and
on the unit square the gradient-to-value quotient over harmonic linears is
maximized by v = x - 1/2 with ratio 12.
"""

import numpy as np
import pytest

from polydg import mesh as pm
from polydg import verify as vf

RIGHT = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@pytest.fixture(scope="module")
def square_mesh():
    return pm.single_cell_mesh(
        np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


def test_simplex_trace_constants_are_sharp():
    # p = 0 on the hypotenuse: ratio = bound = |F|/|T| = 2 sqrt(2)
    w = vf.check_simplex_trace(RIGHT, 1, 0)
    assert w.bound == pytest.approx(2.0 * np.sqrt(2.0), rel=1e-12)
    assert w.max_ratio_observed == pytest.approx(w.bound, rel=1e-9)
    assert w.slack == pytest.approx(0.0, abs=1e-8)


def test_simplex_trace_p2_hypotenuse_near_sharp():
    w = vf.check_simplex_trace(RIGHT, 1, 2)
    assert w.bound == pytest.approx(12.0 * np.sqrt(2.0), rel=1e-12)
    assert w.max_ratio_observed <= w.bound * (1 + 1e-9)
    assert w.max_ratio_observed >= 0.999 * w.bound


def test_simplex_trace_all_edges_and_orders():
    for F in range(3):
        for p in range(5):
            w = vf.check_simplex_trace(RIGHT, F, p, n_samples=20)
            assert w.max_ratio_observed <= w.bound * (1 + 1e-8)


def test_simplex_trace_survives_sliver():
    sliver = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1e-6]])
    for F in range(3):
        w = vf.check_simplex_trace(sliver, F, 3, n_samples=20)
        assert np.isfinite(w.max_ratio_observed)
        assert w.max_ratio_observed <= w.bound * (1 + 1e-8)


def test_simplex_trace_rejects_bad_edge_index():
    with pytest.raises(ValueError, match="edge"):
        vf.check_simplex_trace(RIGHT, 3, 2)


def test_cell_c_s_unit_square(square_mesh):
    assert vf.cell_c_s(square_mesh, 0) == pytest.approx(2.0 * np.sqrt(2.0), rel=1e-12)


def test_polytopic_trace_constants_sharp_on_square(square_mesh):
    # ratio = perimeter / area = 4 and the bound collapses to exactly 4
    cs = vf.cell_c_s(square_mesh, 0)
    w = vf.check_polytopic_trace(square_mesh.cell(0), 0, cs)
    assert w.bound == pytest.approx(4.0, rel=1e-12)
    assert w.max_ratio_observed == pytest.approx(4.0, rel=1e-10)


def test_harmonic_h1_linears_on_square(square_mesh):
    # eigenmax over harmonic linears is 12, far under the bound 144
    cs = vf.cell_c_s(square_mesh, 0)
    w = vf.check_harmonic_h1(square_mesh.cell(0), 1, cs)
    assert w.max_ratio_observed == pytest.approx(12.0, rel=1e-9)
    assert w.bound == pytest.approx(144.0, rel=1e-12)
    assert w.extras["dim_harmonic"] == 3
    assert "full_space_ratio" in w.extras
    assert isinstance(w.extras["full_space_exceeds_bound"], bool)


def test_harmonic_h1_degree_range(square_mesh):
    with pytest.raises(ValueError, match="0..6"):
        vf.check_harmonic_h1(square_mesh.cell(0), 7, 1.0)


def test_bound_violation_carries_witness(square_mesh):
    # shrink the cell constant until the bound must fail
    with pytest.raises(vf.BoundViolation) as exc_info:
        vf.check_polytopic_trace(square_mesh.cell(0), 2, 1e-6)
    w = exc_info.value.witness
    assert w.max_ratio_observed > w.bound
    d = w.as_dict()
    assert set(d) == {"name", "max_ratio_observed", "bound", "slack",
                      "argmax_coefficients", "sample_count", "extras"}
    assert isinstance(d["argmax_coefficients"], list)


def test_dilation_scaling(voronoi16):
    cs = vf.cell_c_s(voronoi16, 2)
    out = vf.dilation_scaling_check(voronoi16.cell(2), 2, cs)
    assert out["passed"]
    # pure dilation scales the quotient exactly; 1% is generous, roundoff is real
    assert out["max_relative_deviation"] < 1e-9


def test_simplex_suite_small():
    report = vf.run_simplex_suite(n_triangles=15, p_max=3, seed=4, n_samples=10)
    assert report["suite"] == "simplex-trace"
    assert report["passed"]
    assert report["checks"] == 15 * 4 * 3
    assert report["violations"] == []
    assert report["min_relative_slack"] >= -1e-8
    assert report["worst_case"]["bound"] > 0


def test_cell_suite_on_mesh(two_cell_mesh):
    report = vf.run_cell_suite(two_cell_mesh, degrees=[2, 3])
    assert report["passed"]
    # 2 cells x 2 degrees x (trace + harmonic)
    assert report["checks"] == 8


def test_cell_suite_without_harmonic(two_cell_mesh):
    report = vf.run_cell_suite(two_cell_mesh, degrees=[2], harmonic=False)
    assert report["checks"] == 2
    assert report["passed"]


def test_witness_slack_sign_convention():
    w = vf.InequalityWitness(name="t", max_ratio_observed=3.0, bound=5.0,
                             argmax_coefficients=np.zeros(2), sample_count=0)
    assert w.slack == pytest.approx(2.0)
