import math

import numpy as np
import pytest

from semisplit import expr as ex
from semisplit.geometry import (
    DegeneratePlaneError,
    NullFieldError,
    VectorField,
    christoffel,
    div_nabla_unit,
    divergence,
    frame_from_vector,
    gradient,
    hessian,
    inverse_metric_at,
    laplacian,
    lie_derivative_metric,
    metric_at,
    nabla_matrix,
    orthogonal_frame,
    ricci_quadratic,
    ricci_tensor,
    riemann,
    sectional,
)
from semisplit.manifold import sample_points


# ------------------------------------------------------------------- oracles

def fd_christoffel(m, p, h=1e-5):
    """Independent finite-difference oracle for the connection symbols."""
    comp = m.compiled()
    n = m.n
    p = np.asarray(p, dtype=float)
    dg = np.empty((n, n, n))
    for a in range(n):
        dp = np.zeros(n)
        dp[a] = h
        dg[a] = (comp.metric_at(p + dp) - comp.metric_at(p - dp)) / (2 * h)
    gi = np.linalg.inv(comp.metric_at(p))
    out = np.empty((n, n, n))
    for k in range(n):
        for i in range(n):
            for j in range(n):
                out[k, i, j] = 0.5 * sum(
                    gi[k, mm] * (dg[i, j, mm] + dg[j, i, mm] - dg[mm, i, j])
                    for mm in range(n)
                )
    return out


# ----------------------------------------------------------------- christoffel

def test_christoffel_flat_minkowski(minkowski2):
    for p in sample_points(minkowski2, 5, seed=1):
        assert np.max(np.abs(christoffel(minkowski2, p))) < 1e-14


def test_christoffel_expanding_values(expanding3):
    # frozen from the finite-difference oracle; analytically e^{2t} and 1
    idx = {c: i for i, c in enumerate(expanding3.coords)}
    for p in sample_points(expanding3, 4, seed=2):
        gamma = christoffel(expanding3, p)
        oracle = fd_christoffel(expanding3, p)
        assert np.max(np.abs(gamma - oracle)) / max(1.0, np.max(np.abs(gamma))) < 1e-6
        t = p[idx["t"]]
        assert gamma[idx["t"], idx["x"], idx["x"]] == pytest.approx(math.exp(2 * t), rel=1e-12)
        assert gamma[idx["x"], idx["t"], idx["x"]] == pytest.approx(1.0, rel=1e-12)
        assert np.max(np.abs(gamma - gamma.transpose(0, 2, 1))) < 1e-14


def test_metric_compatibility(expanding3, sphere2):
    # nabla g = 0 is the defining property of the symbols
    for m in (expanding3, sphere2):
        comp = m.compiled()
        for p in sample_points(m, 6, seed=3):
            g = metric_at(m, p)
            dg = comp.dg_at(p)
            gamma = christoffel(m, p)
            nabla_g = (
                dg
                - np.einsum("mai,mj->aij", gamma, g)
                - np.einsum("maj,im->aij", gamma, g)
            )
            assert np.max(np.abs(nabla_g)) < 1e-10


# --------------------------------------------------------------------- riemann

def test_riemann_flat(minkowski2):
    for p in sample_points(minkowski2, 3, seed=4):
        assert np.max(np.abs(riemann(minkowski2, p))) < 1e-13


def test_sphere_sectional_is_one(sphere2):
    for p in sample_points(sphere2, 20, seed=5):
        v = np.array([1.0, 0.0])
        w = np.array([0.0, 1.0])
        assert sectional(sphere2, p, v, w) == pytest.approx(1.0, abs=1e-8)


def test_first_bianchi(expanding3, sphere2):
    for m in (expanding3, sphere2):
        for p in sample_points(m, 5, seed=6):
            r = riemann(m, p)
            cyc = r + np.einsum("jkil->ijkl", r) + np.einsum("kijl->ijkl", r)
            assert np.max(np.abs(cyc)) < 1e-9


def test_riemann_symmetries(expanding3):
    for p in sample_points(expanding3, 4, seed=7):
        r = riemann(expanding3, p)
        assert np.max(np.abs(r + np.einsum("jikl->ijkl", r))) < 1e-10
        assert np.max(np.abs(r - np.einsum("klij->ijkl", r))) < 1e-10


def test_timelike_plane_sectional_warped(expanding2):
    # planes containing the expansion field have curvature E(E(lambda))/lambda = 1
    for p in sample_points(expanding2, 10, seed=8):
        K = sectional(expanding2, p, np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        assert K == pytest.approx(1.0, abs=1e-10)


def test_sectional_degenerate_plane_raises(expanding3):
    # null plane: span of a null vector and an orthogonal spacelike vector
    p = np.array([0.2, 0.1, -0.1])
    null = np.array([1.0, math.exp(-p[0]), 0.0])
    spacelike = np.array([0.0, 0.0, 1.0])
    with pytest.raises(DegeneratePlaneError):
        sectional(expanding3, p, null, spacelike)
    with pytest.raises(DegeneratePlaneError):
        sectional(expanding3, p, spacelike, 2.0 * spacelike)


# ----------------------------------------------------------------------- ricci

def test_ricci_flat(minkowski2):
    for p in sample_points(minkowski2, 3, seed=9):
        assert np.max(np.abs(ricci_tensor(minkowski2, p))) < 1e-13


def test_ricci_sphere_positive(sphere2):
    # Ric = (n-1) g on the unit sphere with this sign convention
    for p in sample_points(sphere2, 5, seed=10):
        ric = ricci_tensor(sphere2, p)
        g = metric_at(sphere2, p)
        assert np.max(np.abs(ric - g)) < 1e-9


def test_ricci_of_conformal_field(expanding3):
    # U = e^t d_t on the 3D expanding metric: Ric(U) = -2 e^{2t}
    idx_t = expanding3.coords.index("t")
    for p in sample_points(expanding3, 5, seed=11):
        u = np.zeros(3)
        u[idx_t] = math.exp(p[idx_t])
        assert ricci_quadratic(expanding3, p, u) == pytest.approx(
            -2.0 * math.exp(2 * p[idx_t]), rel=1e-10
        )


# ------------------------------------------------------- scalar-field calculus

def test_laplacian_euclidean(euclidean2):
    f = ex.parse("x^2+y^2", euclidean2.coords)
    for p in sample_points(euclidean2, 4, seed=12):
        assert laplacian(euclidean2, p, f) == pytest.approx(4.0, abs=1e-12)


def test_hessian_linear_flat(minkowski2):
    f = ex.parse("t", minkowski2.coords)
    for p in sample_points(minkowski2, 3, seed=13):
        assert np.max(np.abs(hessian(minkowski2, p, f))) < 1e-14


def test_laplacian_is_trace_of_hessian(expanding3):
    f = ex.parse("exp(t)*cos(x)", expanding3.coords)
    for p in sample_points(expanding3, 5, seed=14):
        gi = inverse_metric_at(expanding3, p)
        h = hessian(expanding3, p, f)
        assert laplacian(expanding3, p, f) == pytest.approx(
            float(np.einsum("ij,ij->", gi, h)), abs=1e-10
        )


def test_divergence_of_conformal_field(expanding3):
    # div U = n E(lambda) = 3 e^t for U = e^t d_t
    U = VectorField(expanding3, [ex.parse(s, expanding3.coords) for s in ("exp(t)", "0", "0")])
    for p in sample_points(expanding3, 5, seed=15):
        t = p[expanding3.coords.index("t")]
        assert divergence(expanding3, p, U) == pytest.approx(3 * math.exp(t), rel=1e-12)
        assert 3.0 * U.unit_lambda_at(p) == pytest.approx(3 * math.exp(t), rel=1e-12)


def test_gradient_matches_inverse_metric(expanding3):
    f = ex.parse("t*t+x", expanding3.coords)
    for p in sample_points(expanding3, 3, seed=16):
        grad = gradient(expanding3, p, f)
        gi = inverse_metric_at(expanding3, p)
        df = np.array([2 * p[0], 1.0, 0.0])
        assert np.allclose(grad, gi @ df, atol=1e-12)


# --------------------------------------------------------------- lie derivative

def test_lie_derivative_killing(minkowski2):
    X = VectorField(minkowski2, [ex.parse("0", minkowski2.coords), ex.parse("1", minkowski2.coords)])
    for p in sample_points(minkowski2, 3, seed=17):
        assert np.max(np.abs(lie_derivative_metric(minkowski2, p, X))) < 1e-14


def test_lie_derivative_conformal(expanding3):
    # L_U g = 2 a g with a = E(lambda) = e^t
    U = VectorField(expanding3, [ex.parse(s, expanding3.coords) for s in ("exp(t)", "0", "0")])
    for p in sample_points(expanding3, 5, seed=18):
        lug = lie_derivative_metric(expanding3, p, U)
        a = U.unit_lambda_at(p)
        g = metric_at(expanding3, p)
        assert np.max(np.abs(lug - 2 * a * g)) < 1e-10 * max(1.0, abs(a))


def test_lie_derivative_flow_pullback_oracle(expanding2):
    # (Phi_h^* g - g)/h approaches L_E g as h -> 0 (first order)
    from semisplit.flow import integrate_flow

    m = expanding2
    Ef = VectorField(m, [ex.parse("1", m.coords), ex.parse("0", m.coords)])
    p = np.array([0.1, 1.0])
    lug = lie_derivative_metric(m, p, Ef)
    h = 1e-4
    flow = integrate_flow(m, Ef, p, (0.0, h), tol=1e-12)
    q = flow.state_at(h)
    J = flow.jacobian_at(h)
    g_q = metric_at(m, q)
    pulled = J.T @ g_q @ J
    fd = (pulled - metric_at(m, p)) / h
    assert np.max(np.abs(fd - lug)) < 5e-3  # O(h) agreement


# ---------------------------------------------------------------------- frames

def test_frame_unit_timelike_combination(minkowski2):
    comps = [ex.parse("sqrt(3/2)", minkowski2.coords), ex.parse("sqrt(1/2)", minkowski2.coords)]
    U = VectorField(minkowski2, comps)
    p = np.array([0.0, 0.3])
    assert U.norm_sq_at(p) == pytest.approx(-1.0, abs=1e-14)
    fp = orthogonal_frame(minkowski2, p, U)
    assert fp.eps == -1
    assert np.allclose(fp.E, U.at(p), atol=1e-12)
    assert fp.gram_residual(metric_at(minkowski2, p)) < 1e-10


def test_frame_scaled_spacelike(euclidean2):
    U = VectorField(euclidean2, [ex.parse("2", euclidean2.coords), ex.parse("0", euclidean2.coords)])
    p = np.array([0.5, 0.5])
    fp = orthogonal_frame(euclidean2, p, U)
    assert fp.lam == pytest.approx(2.0, abs=1e-14)
    assert np.allclose(fp.E, [1.0, 0.0], atol=1e-14)
    assert fp.eps == 1


def test_frame_null_field_errors(minkowski2):
    p = np.array([0.0, 0.0])
    with pytest.raises(NullFieldError) as err:
        frame_from_vector(minkowski2, p, np.array([1.0, 1.0]))
    assert abs(err.value.norm_sq) < 1e-12


def test_frame_deterministic(expanding3):
    U = VectorField(expanding3, [ex.parse(s, expanding3.coords) for s in ("exp(t)", "0", "0")])
    p = sample_points(expanding3, 1, seed=19)[0]
    f1 = orthogonal_frame(expanding3, p, U)
    f2 = orthogonal_frame(expanding3, p, U)
    assert np.array_equal(f1.e_perp, f2.e_perp)
    assert f1.gram_residual(metric_at(expanding3, p)) < 1e-10


# ---------------------------------------------------------- divergence helpers

def test_div_unit_expression_matches_trace_route(expanding3):
    U = VectorField(expanding3, [ex.parse(s, expanding3.coords) for s in ("exp(t)", "0", "0")])
    for p in sample_points(expanding3, 5, seed=20):
        via_w = U.div_unit_at(p)
        via_trace = divergence(expanding3, p, U, unit=True)
        assert via_w == pytest.approx(via_trace, rel=1e-10, abs=1e-10)
        assert via_w == pytest.approx(2.0, rel=1e-12)  # (n-1) f'/f with f = e^t


def test_div_nabla_unit_zero_for_geodesic(expanding3):
    U = VectorField(expanding3, [ex.parse(s, expanding3.coords) for s in ("exp(t)", "0", "0")])
    for p in sample_points(expanding3, 3, seed=21):
        assert abs(div_nabla_unit(expanding3, p, U)) < 1e-10


def test_nabla_matrix_parallel_field(minkowski2):
    comps = [ex.parse("sqrt(3/2)", minkowski2.coords), ex.parse("sqrt(1/2)", minkowski2.coords)]
    U = VectorField(minkowski2, comps)
    p = np.array([0.1, 0.4])
    assert np.max(np.abs(nabla_matrix(minkowski2, p, U))) < 1e-14
