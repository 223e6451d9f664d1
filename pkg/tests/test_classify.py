import math

import numpy as np
import pytest

from semisplit import expr as ex
from semisplit.classify import (
    DecompositionType,
    NonUnitFieldError,
    bochner_check,
    classify_field,
    curvature_conditions,
    decomposition_type,
    hessian_classify,
    nabla_form_fit,
)
from semisplit.fixtures import get
from semisplit.geometry import NullFieldError, VectorField
from semisplit.manifold import Interval, ManifoldSpec, sample_points
from semisplit.split import sample_leaf_points

from conftest import make_manifold


def _field(m, *comps):
    return VectorField(m, [ex.parse(c, m.coords) for c in comps])


@pytest.fixture(scope="module")
def twisted():
    fx = get("twisted_strip")
    return fx.manifold, fx.vector_field()


# ------------------------------------------------------------- classify_field

def test_parallel_unit_timelike(minkowski2):
    U = _field(minkowski2, "sqrt(3/2)", "sqrt(1/2)")
    samples = sample_points(minkowski2, 40, seed=1)
    c = classify_field(minkowski2, U, samples)
    assert c.eps == -1
    assert c.flags["parallel"].value
    assert c.flags["unit"].value
    assert c.flags["irrotational"].value
    assert c.flags["conformal"].value
    assert c.flags["geodesic_unit"].value
    assert not c.inconsistencies


def test_conformal_expansion_field(expanding3):
    U = _field(expanding3, "exp(t)", "0", "0")
    samples = sample_points(expanding3, 40, seed=2)
    c = classify_field(expanding3, U, samples)
    assert c.flags["irrotational"].value
    assert c.flags["conformal"].value
    assert not c.flags["parallel"].value
    assert not c.flags["unit"].value
    # conformal factor a = E(lambda) = e^t alongside L_U g = 2 a g
    for p, a in zip(samples, c.conformal_factor):
        assert a == pytest.approx(math.exp(p[0]), rel=1e-9)


def test_twisted_fixture_flags(twisted):
    m, U = twisted
    samples = sample_points(m, 60, seed=3)
    c = classify_field(m, U, samples)
    assert c.flags["unit"].value
    assert c.flags["irrotational"].value
    assert c.flags["orth_conformal"].value
    assert not c.flags["conformal"].value
    assert not c.flags["grad_div_unit_parallel"].value
    assert c.flags["geodesic_unit"].value


def test_null_field_errors(minkowski2):
    with pytest.raises(NullFieldError):
        U = _field(minkowski2, "1", "1")
        classify_field(minkowski2, U, sample_points(minkowski2, 4, seed=4))


def test_unit_orth_irrotational_geodesic_iff_irrotational():
    # the equivalence for unit orthogonally-irrotational fields, checked as
    # flag agreement on fixtures where the hypotheses hold
    for name in ("twisted_strip", "direct_line_circle_lorentzian", "flat_two_torus"):
        fx = get(name)
        m = fx.manifold
        U = fx.vector_field()
        samples = sample_points(m, 30, seed=5)
        c = classify_field(m, U, samples)
        if c.flags["unit"].value and c.flags["orth_irrotational"].value:
            assert c.flags["geodesic_unit"].value == c.flags["irrotational"].value


def test_lambda_constant_on_leaves():
    fx = get("exp_warped_line_circle")
    m = fx.manifold
    U = fx.vector_field()
    pts = sample_leaf_points(m, U, np.array([0.0, 1.0]), 12, seed=6)
    lams = [U.lambda_at(p) for p in pts]
    assert max(lams) - min(lams) < 1e-10


# -------------------------------------------------------------- nabla_form_fit

def test_nabla_fit_parallel(minkowski2):
    U = _field(minkowski2, "sqrt(3/2)", "sqrt(1/2)")
    fit = nabla_form_fit(minkowski2, U, sample_points(minkowski2, 20, seed=7))
    assert max(abs(a) for a in fit.a_samples) < 1e-12
    assert max(abs(b) for b in fit.b_samples) < 1e-12
    assert fit.conformal_candidate


def test_nabla_fit_conformal(expanding3):
    U = _field(expanding3, "exp(t)", "0", "0")
    samples = sample_points(expanding3, 20, seed=8)
    fit = nabla_form_fit(expanding3, U, samples)
    for p, a in zip(samples, fit.a_samples):
        assert a == pytest.approx(math.exp(p[0]), rel=1e-9)
    assert max(abs(b) for b in fit.b_samples) < 1e-9
    assert fit.max_residual < 1e-9


def test_nabla_fit_twisted(twisted):
    # unit geodesic field: the perp slope is f_t/f = 1/f, and the unit-slot
    # coefficient compensates it (a + eps*b = 0), so b = -eps*a = a here
    m, U = twisted
    samples = sample_points(m, 20, seed=9)
    fit = nabla_form_fit(m, U, samples)
    for p, a, b in zip(samples, fit.a_samples, fit.b_samples):
        f = p[0] + 2.0 + math.cos(p[1])
        assert a == pytest.approx(1.0 / f, rel=1e-9)
        assert b == pytest.approx(1.0 / f, rel=1e-9)
    assert not fit.conformal_candidate


# ------------------------------------------------------------ hessian_classify

def test_hessian_zero(minkowski2):
    f = ex.parse("t", minkowski2.coords)
    hc = hessian_classify(minkowski2, f, sample_points(minkowski2, 12, seed=10))
    assert hc.kind == "zero"


def test_hessian_a_times_g():
    m = make_manifold(
        ["t", "x", "y"],
        [["1", "0", "0"], ["0", "exp(2*t)", "0"], ["0", "0", "exp(2*t)"]],
        {"t": Interval(-1.0, 1.0), "x": Interval(-1.0, 1.0), "y": Interval(-1.0, 1.0)},
        name="riem_expanding",
    )
    f = ex.parse("exp(t)", m.coords)  # grad f = e^t d_t; Hessian is e^t g
    samples = sample_points(m, 16, seed=11)
    hc = hessian_classify(m, f, samples)
    assert hc.kind == "a_times_g"
    for p, a in zip(samples, hc.a_samples):
        assert a == pytest.approx(math.exp(p[0]), rel=1e-9)


def test_hessian_general():
    m = make_manifold(
        ["x", "y"],
        [["1+0.3*sin(x*y)", "0.1*cos(x)"], ["0.1*cos(x)", "1+0.2*cos(y)"]],
        {"x": Interval(-1.0, 1.0), "y": Interval(-1.0, 1.0)},
        name="bumpy",
    )
    f = ex.parse("x^2-y^3+x*y", m.coords)
    hc = hessian_classify(m, f, sample_points(m, 16, seed=12))
    assert hc.kind == "general"


# --------------------------------------------------------- decomposition type

@pytest.mark.parametrize(
    "fixture_name,expected",
    [
        ("minkowski_cylinder", DecompositionType.DIRECT),
        ("exp_warped_line_circle", DecompositionType.WARPED),
        ("twisted_strip", DecompositionType.TWISTED),
        ("shear_flat_plane", DecompositionType.PARAMETRIZED),
    ],
)
def test_decomposition_types(fixture_name, expected):
    fx = get(fixture_name)
    samples = sample_points(fx.manifold, 40, seed=13)
    c = classify_field(fx.manifold, fx.vector_field(), samples)
    assert decomposition_type(c) == expected


def test_decomposition_invariant_under_rescaling():
    fx = get("exp_warped_line_circle")
    m = fx.manifold
    samples = sample_points(m, 30, seed=14)
    base = decomposition_type(classify_field(m, fx.vector_field(), samples))
    scaled = VectorField(m, [ex.parse("3*exp(t)", m.coords), ex.parse("0", m.coords)])
    assert decomposition_type(classify_field(m, scaled, samples)) == base


# -------------------------------------------------------- curvature conditions

def test_curvature_conditions_expansion(expanding2):
    U = _field(expanding2, "exp(t)", "0")
    samples = sample_points(expanding2, 30, seed=15)
    rep = curvature_conditions(expanding2, U, samples)
    assert rep.applicable
    assert rep.div_sign == "nonnegative"
    assert all(v > 0 for v in rep.div_values)
    assert rep.div_identity_residual < 1e-8
    assert rep.ric_identity_residual < 1e-8
    for p, v in zip(samples, rep.div_values):
        assert v == pytest.approx(2.0 * math.exp(p[0]), rel=1e-10)


def test_curvature_conditions_parallel(minkowski2):
    U = _field(minkowski2, "sqrt(3/2)", "sqrt(1/2)")
    rep = curvature_conditions(minkowski2, U, sample_points(minkowski2, 12, seed=16))
    assert rep.div_sign == "zero"
    assert rep.ric_sign == "zero"
    assert rep.div_identity_residual < 1e-12


# ----------------------------------------------------------------- bochner

def test_bochner_twisted_equality(twisted):
    m, U = twisted
    samples = sample_points(m, 40, seed=17)
    rep = bochner_check(m, U, samples)
    assert rep.identity_residual < 1e-7
    assert rep.trace_residual < 1e-9
    assert rep.cs_gap_min >= -1e-9
    assert rep.equality_case  # E(div E) = -(div E)^2/(n-1) exactly here
    assert rep.hypotheses_hold
    # div E = 1/(t+2+cos s), frozen from differentiating the twist profile
    for p, v in zip(samples, rep.div_values):
        assert v == pytest.approx(1.0 / (p[0] + 2.0 + math.cos(p[1])), rel=1e-9)


def test_bochner_flat_zero():
    fx = get("direct_line_circle_lorentzian")
    samples = sample_points(fx.manifold, 16, seed=18)
    rep = bochner_check(fx.manifold, fx.vector_field(), samples)
    assert rep.identity_residual < 1e-10
    assert abs(rep.expansion_condition_min) < 1e-12
    assert abs(rep.ricci_min) < 1e-12


def test_bochner_requires_unit(expanding3):
    U = _field(expanding3, "exp(t)", "0", "0")
    with pytest.raises(NonUnitFieldError):
        bochner_check(expanding3, U, sample_points(expanding3, 4, seed=19))
