import math

import numpy as np
import pytest

from semisplit.classify import DecompositionType
from semisplit.fixtures import get
from semisplit.split import (
    SplitConfig,
    construct_warping,
    reconstruct_and_verify,
    sample_leaf_points,
    split_report,
)


@pytest.fixture(scope="module")
def warped_fx():
    return get("exp_warped_line_circle")


@pytest.fixture(scope="module")
def twisted_fx():
    return get("twisted_strip")


# ----------------------------------------------------------- warping tables

def test_warping_exponential(warped_fx):
    m, U = warped_fx.manifold, warped_fx.vector_field()
    pts = sample_leaf_points(m, U, np.array([0.0, 1.0]), 8, seed=1)
    t_grid = np.linspace(-1.0, 1.0, 21)
    table = construct_warping(m, U, pts, t_grid)
    for t, f in zip(t_grid, table.values[0]):
        assert f == pytest.approx(math.exp(t), abs=1e-8)
    assert table.values[0][0] != 1.0 or t_grid[0] == 0.0
    # normalization on the base leaf
    k0 = int(np.argmin(np.abs(t_grid)))
    assert table.values[:, k0] == pytest.approx(np.ones(len(pts)), abs=1e-12)
    assert table.leaf_independence < 1e-8
    assert table.construction_agreement is not None
    assert table.construction_agreement < 1e-7


def test_warping_direct_is_one():
    fx = get("direct_line_circle_lorentzian")
    m, U = fx.manifold, fx.vector_field()
    pts = sample_leaf_points(m, U, np.array([0.0, 1.0]), 6, seed=2)
    t_grid = np.linspace(-1.0, 1.0, 11)
    table = construct_warping(m, U, pts, t_grid)
    assert np.max(np.abs(table.values - 1.0)) < 1e-10


def test_warping_twisted_closed_form(twisted_fx):
    m, U = twisted_fx.manifold, twisted_fx.vector_field()
    pts = sample_leaf_points(m, U, np.array([0.0, 1.0]), 10, seed=3)
    t_grid = np.linspace(-1.5, 1.5, 25)
    table = construct_warping(m, U, pts, t_grid)
    worst = 0.0
    for j, q in enumerate(pts):
        s = q[1]
        for k, t in enumerate(t_grid):
            f = table.values[j, k]
            if math.isnan(f):
                assert t <= -1.0 + 1e-9  # only nodes beyond the escape are missing
                continue
            model = (t + 2.0 + math.cos(s)) / (2.0 + math.cos(s))
            worst = max(worst, abs(f - model))
    assert worst < 1e-5
    assert table.achieved[0] == pytest.approx(-1.0, abs=1e-6)
    assert table.leaf_independence > 1e-2  # genuinely leaf-dependent


def test_warping_base_point_independence(warped_fx):
    m, U = warped_fx.manifold, warped_fx.vector_field()
    t_grid = np.linspace(-1.0, 1.0, 9)
    t1 = construct_warping(m, U, sample_leaf_points(m, U, np.array([0.0, 1.0]), 4, seed=4), t_grid)
    t2 = construct_warping(m, U, sample_leaf_points(m, U, np.array([0.0, 4.0]), 4, seed=5), t_grid)
    assert np.max(np.abs(t1.values[0] - t2.values[0])) < 1e-6


# ------------------------------------------------------------ reconstruction

def test_reconstruct_direct():
    fx = get("direct_line_circle_lorentzian")
    m, U = fx.manifold, fx.vector_field()
    pts = sample_leaf_points(m, U, np.array([0.0, 1.0]), 8, seed=6)
    res = reconstruct_and_verify(m, U, pts, np.linspace(-1, 1, 11), DecompositionType.DIRECT)
    assert res.max_residual < 1e-8
    assert res.nodes_unreachable == 0


def test_reconstruct_warped_grid(warped_fx):
    m, U = warped_fx.manifold, warped_fx.vector_field()
    pts = sample_leaf_points(m, U, np.array([0.0, 1.0]), 16, seed=7)
    res = reconstruct_and_verify(m, U, pts, np.linspace(-1, 1, 21), DecompositionType.WARPED)
    assert res.max_residual < 1e-6
    assert res.nodes_total == 21 * 16
    assert res.warping.construction_agreement < 1e-7


def test_reconstruct_twisted(twisted_fx):
    m, U = twisted_fx.manifold, twisted_fx.vector_field()
    pts = sample_leaf_points(m, U, np.array([0.0, 1.0]), 12, seed=8)
    res = reconstruct_and_verify(m, U, pts, np.linspace(-1.5, 1.5, 21), DecompositionType.TWISTED)
    assert res.max_residual < 1e-5
    assert res.nodes_unreachable > 0  # nodes past the left escape
    assert res.base.interval[0] == pytest.approx(-1.0, abs=1e-6)


def test_twisted_model_degrades_to_warped(warped_fx):
    # running the leaf-dependent model on a leaf-independent fixture must
    # produce a table constant across the leaf
    m, U = warped_fx.manifold, warped_fx.vector_field()
    pts = sample_leaf_points(m, U, np.array([0.0, 1.0]), 8, seed=9)
    res = reconstruct_and_verify(m, U, pts, np.linspace(-1, 1, 11), DecompositionType.TWISTED)
    assert res.warping.leaf_independence < 1e-8
    assert res.max_residual < 1e-6


# ----------------------------------------------------------------- verdicts

def _report(name):
    fx = get(name)
    return split_report(fx.manifold, fx.vector_field(), fx.config)


def test_report_warped_line(warped_fx):
    rep = split_report(warped_fx.manifold, warped_fx.vector_field(), warped_fx.config)
    assert rep.verdict == "RxL warped"
    assert rep.returns_status == "none"
    assert rep.decomposition.max_residual < 1e-6
    # f(1) = e from the exponential profile
    t_grid = rep.decomposition.warping.t_grid
    k = int(np.argmin(np.abs(t_grid - 1.0)))
    assert rep.decomposition.warping.values[0][k] == pytest.approx(math.e, abs=1e-7)


def test_report_direct_products():
    for name in ("direct_line_circle_lorentzian", "direct_line_circle_riemannian"):
        rep = _report(name)
        assert rep.verdict == "RxL direct"
        assert rep.decomposition.max_residual < 1e-8


def test_report_twisted(twisted_fx):
    rep = split_report(twisted_fx.manifold, twisted_fx.vector_field(), twisted_fx.config)
    assert rep.verdict == "RxL twisted"
    assert rep.decomposition.base.interval[0] == pytest.approx(-1.0, abs=1e-3)
    assert rep.bochner is not None
    assert rep.bochner.equality_case


def test_report_circle_product():
    rep = _report("flat_two_torus")
    assert rep.verdict == "S1xL direct"
    assert rep.base.kind == "circle"
    assert rep.base.period == pytest.approx(1.0, abs=1e-8)
    assert rep.monodromy.verdict == "identity"


def test_report_covering_only():
    rep = _report("sphere_warped_quotient")
    assert rep.verdict == "covering-only"
    assert rep.monodromy.verdict == "nontrivial"
    assert rep.monodromy.max_displacement > 0.5
    assert rep.base.period == pytest.approx(math.pi, abs=1e-6)


def test_report_no_split_cylinder():
    rep = _report("minkowski_cylinder")
    assert rep.verdict == "no-split-evidence"
    assert rep.decomposition_type == DecompositionType.DIRECT
    assert rep.periods.classification == "discrete"
    assert rep.returns_status == "indeterminate"


def test_report_no_split_dense():
    rep = _report("dense_period_torus")
    assert rep.verdict == "no-split-evidence"
    assert rep.periods.classification == "dense"


def test_report_no_split_shear():
    rep = _report("shear_flat_plane")
    assert rep.verdict == "no-split-evidence"
    assert not rep.classification.flags["geodesic_unit"].value


def test_report_sphere_warped_line():
    rep = _report("sphere_warped_line")
    assert rep.verdict == "RxL warped"
    assert rep.returns_status == "none"
    assert rep.periods is None  # no loops declared
