"""Metric tensor machinery at sample points.

Every derivative that enters a geometric quantity is taken symbolically on
the metric / field expressions and only then evaluated; the numeric layer is
pure linear algebra (inversion and contractions).  Curvature follows the
convention R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z,
with Ric(v) = sum_i eps_i g(R(e_i, v) v, e_i) over an orthonormal frame, so
the round sphere has positive curvature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import expr as ex
from .manifold import ManifoldSpec, sample_points


class GeometryError(ValueError):
    pass


class DegenerateMetricError(GeometryError):
    pass


class DegeneratePlaneError(GeometryError):
    pass


class NullFieldError(GeometryError):
    def __init__(self, norm_sq: float, point):
        self.norm_sq = norm_sq
        self.point = list(point)
        super().__init__(
            f"vector field is null or near-null at {self.point}: g(U,U) = {norm_sq:.3e}"
        )


# ------------------------------------------------------------------ raw tensors

def metric_at(m: ManifoldSpec, p) -> np.ndarray:
    return m.compiled().metric_at(p)


def inverse_metric_at(m: ManifoldSpec, p) -> np.ndarray:
    g = metric_at(m, p)
    det = np.linalg.det(g)
    if abs(det) < 1e-14:
        raise DegenerateMetricError(f"metric degenerate at {list(p)} (det={det:.3e})")
    return np.linalg.inv(g)


def metric_scale(m: ManifoldSpec, p) -> float:
    """Largest |g_ij| at p; residual tolerances are normalized by this."""
    return max(1e-30, float(np.max(np.abs(metric_at(m, p)))))


def christoffel(m: ManifoldSpec, p) -> np.ndarray:
    """Levi-Civita symbols Gamma[k,i,j] of the expression metric at p."""
    comp = m.compiled()
    gi = inverse_metric_at(m, p)
    dg = comp.dg_at(p)  # dg[a,i,j] = d_a g_ij
    n = m.n
    br = np.empty((n, n, n))  # br[i,j,m] = d_i g_jm + d_j g_im - d_m g_ij
    for i in range(n):
        for j in range(n):
            for mm in range(n):
                br[i, j, mm] = dg[i, j, mm] + dg[j, i, mm] - dg[mm, i, j]
    return 0.5 * np.einsum("km,ijm->kij", gi, br)


def christoffel_partials(m: ManifoldSpec, p) -> np.ndarray:
    """dGamma[a,k,i,j] = d_a Gamma^k_ij, from symbolic metric derivatives."""
    comp = m.compiled()
    gi = inverse_metric_at(m, p)
    dg = comp.dg_at(p)
    ddg = comp.ddg_at(p)  # ddg[b,a,i,j] = d_b d_a g_ij
    n = m.n
    br = np.empty((n, n, n))
    dbr = np.empty((n, n, n, n))
    for i in range(n):
        for j in range(n):
            for mm in range(n):
                br[i, j, mm] = dg[i, j, mm] + dg[j, i, mm] - dg[mm, i, j]
                for a in range(n):
                    dbr[a, i, j, mm] = ddg[a, i, j, mm] + ddg[a, j, i, mm] - ddg[a, mm, i, j]
    dgi = -np.einsum("lp,apq,qm->alm", gi, dg, gi)
    return 0.5 * (
        np.einsum("akm,ijm->akij", dgi, br) + np.einsum("km,aijm->akij", gi, dbr)
    )


def riemann(m: ManifoldSpec, p) -> np.ndarray:
    """Fully covariant curvature Riem[i,j,k,l] = g(R(e_i,e_j)e_k, e_l)."""
    g = metric_at(m, p)
    gamma = christoffel(m, p)
    dgamma = christoffel_partials(m, p)
    rup = (
        np.einsum("iljk->lijk", dgamma)
        - np.einsum("jlik->lijk", dgamma)
        + np.einsum("lim,mjk->lijk", gamma, gamma)
        - np.einsum("ljm,mik->lijk", gamma, gamma)
    )
    return np.einsum("lm,mijk->ijkl", g, rup)


def sectional(m: ManifoldSpec, p, v, w, tol: float = 1e-9) -> float:
    """Sectional curvature of span{v,w}; degenerate planes are an error."""
    g = metric_at(m, p)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    gvv = float(v @ g @ v)
    gww = float(w @ g @ w)
    gvw = float(v @ g @ w)
    q = gvv * gww - gvw * gvw
    scale = metric_scale(m, p) ** 2 * max(1.0, float(v @ v) * float(w @ w))
    if abs(q) <= tol * scale:
        raise DegeneratePlaneError(
            f"plane span{{v,w}} degenerate at {list(p)} (discriminant {q:.3e})"
        )
    riem = riemann(m, p)
    num = float(np.einsum("ijkl,i,j,k,l->", riem, v, w, w, v))
    return num / q


def ricci_tensor(m: ManifoldSpec, p) -> np.ndarray:
    gi = inverse_metric_at(m, p)
    riem = riemann(m, p)
    return np.einsum("ab,ajkb->jk", gi, riem)


def ricci_quadratic(m: ManifoldSpec, p, X) -> float:
    """Ric(X,X) for a coordinate vector X at p."""
    x = np.asarray(X, dtype=float)
    ric = ricci_tensor(m, p)
    return float(x @ ric @ x)


# -------------------------------------------------------- scalar-field calculus

def _scalar_cache(m: ManifoldSpec, f: ex.Expr):
    comp = m.compiled()
    cache = getattr(comp, "_scalar_cache", None)
    if cache is None:
        cache = {}
        comp._scalar_cache = cache
    hit = cache.get(f)
    if hit is None:
        n = m.n
        coords = m.coords
        df = [ex.differentiate(f, c) for c in coords]
        ddf = [[ex.differentiate(df[i], c) for c in coords] for i in range(n)]
        grad_fn = ex.compile_exprs(df, coords)
        hess_fn = ex.compile_exprs([ddf[i][j] for i in range(n) for j in range(n)], coords)
        hit = (grad_fn, hess_fn, n)
        cache[f] = hit
    return hit


def gradient(m: ManifoldSpec, p, f: ex.Expr) -> np.ndarray:
    grad_fn, _, _ = _scalar_cache(m, f)
    df = np.array(grad_fn(p))
    return inverse_metric_at(m, p) @ df


def hessian(m: ManifoldSpec, p, f: ex.Expr) -> np.ndarray:
    grad_fn, hess_fn, n = _scalar_cache(m, f)
    df = np.array(grad_fn(p))
    ddf = np.array(hess_fn(p)).reshape(n, n)
    gamma = christoffel(m, p)
    return ddf - np.einsum("kij,k->ij", gamma, df)


def laplacian(m: ManifoldSpec, p, f: ex.Expr) -> float:
    gi = inverse_metric_at(m, p)
    return float(np.einsum("ij,ij->", gi, hessian(m, p, f)))


# ------------------------------------------------------------------ vector fields

class VectorField:
    """A field given by component expressions, with cached symbolic data:
    the norm function, the unit field, the metrically equivalent one-form and
    its exterior derivative, and the divergence of the unit field."""

    def __init__(self, m: ManifoldSpec, components: Sequence[ex.Expr], null_tol: float = 1e-10):
        self.manifold = m
        n = m.n
        coords = m.coords
        comp = m.compiled()
        self.components = tuple(ex.simplify(c) for c in components)
        if len(self.components) != n:
            raise GeometryError(f"field needs {n} components, got {len(self.components)}")

        g = comp.g_exprs
        uu = None
        for i in range(n):
            for j in range(n):
                term = ex.Binary("mul", g[i][j],
                                 ex.Binary("mul", self.components[i], self.components[j]))
                uu = term if uu is None else ex.Binary("add", uu, term)
        self.norm_sq_expr = ex.simplify(uu)
        self.norm_sq_at = ex.compile_expr(self.norm_sq_expr, coords)

        # sign of g(U,U): must be constant; fixed here from samples
        probe = sample_points(m, 16, seed=11)
        signs = {float(np.sign(self.norm_sq_at(p))) for p in probe}
        if len(signs) != 1 or 0.0 in signs:
            raise NullFieldError(self.norm_sq_at(probe[0]), probe[0])
        self.eps = int(signs.pop())

        eps_expr = ex.Const(float(self.eps))
        lam = ex.Unary("sqrt", ex.simplify(ex.Binary("mul", eps_expr, self.norm_sq_expr)))
        self.lambda_expr = lam
        self.lambda_at = ex.compile_expr(lam, coords)
        self.unit_exprs = tuple(
            ex.simplify(ex.Binary("div", c, lam)) for c in self.components
        )

        self.at = _vec(ex.compile_exprs(self.components, coords), n)
        self.unit_at = _vec(ex.compile_exprs(self.unit_exprs, coords), n)

        dU = [[ex.differentiate(c, x) for c in self.components] for x in coords]
        self.dU_at = _mat(ex.compile_exprs(_flat2(dU), coords), n)  # [a,k] = d_a U^k
        dE = [[ex.differentiate(c, x) for c in self.unit_exprs] for x in coords]
        self.dE_at = _mat(ex.compile_exprs(_flat2(dE), coords), n)
        self._dE_exprs = dE

        omega = []
        for i in range(n):
            acc = None
            for j in range(n):
                term = ex.Binary("mul", g[i][j], self.components[j])
                acc = term if acc is None else ex.Binary("add", acc, term)
            omega.append(ex.simplify(acc))
        self.omega_exprs = tuple(omega)
        self.omega_at = _vec(ex.compile_exprs(omega, coords), n)
        domega = [
            [
                ex.simplify(
                    ex.Binary(
                        "sub",
                        ex.differentiate(omega[j], coords[i]),
                        ex.differentiate(omega[i], coords[j]),
                    )
                )
                for j in range(n)
            ]
            for i in range(n)
        ]
        self.domega_at = _mat(ex.compile_exprs(_flat2(domega), coords), n)

        # divergence of the unit field via the volume weight w = sqrt(|det g|)
        det = comp.det_expr
        det_sign = ex.Const(float(np.sign(comp.det_at(probe[0]))))
        w = ex.Unary("sqrt", ex.simplify(ex.Binary("mul", det_sign, det)))
        div_sum = None
        for i, x in enumerate(coords):
            term = ex.differentiate(ex.Binary("mul", w, self.unit_exprs[i]), x)
            div_sum = term if div_sum is None else ex.Binary("add", div_sum, term)
        self.div_unit_expr = ex.simplify(ex.Binary("div", div_sum, w))
        self.div_unit_at = ex.compile_expr(self.div_unit_expr, coords)
        ddiv = [ex.differentiate(self.div_unit_expr, x) for x in coords]
        self.ddiv_unit_at = _vec(ex.compile_exprs(ddiv, coords), n)

        # lambda derivatives along the field
        dlam = [ex.differentiate(lam, x) for x in coords]
        e_lam = None
        for i in range(n):
            term = ex.Binary("mul", self.unit_exprs[i], dlam[i])
            e_lam = term if e_lam is None else ex.Binary("add", e_lam, term)
        e_lam = ex.simplify(e_lam)
        self.unit_lambda_expr = e_lam  # E(lambda)
        self.unit_lambda_at = ex.compile_expr(e_lam, coords)
        de_lam = [ex.differentiate(e_lam, x) for x in coords]
        ee_lam = None
        uu_lam = None
        for i in range(n):
            t1 = ex.Binary("mul", self.unit_exprs[i], de_lam[i])
            t2 = ex.Binary("mul", self.components[i], de_lam[i])
            ee_lam = t1 if ee_lam is None else ex.Binary("add", ee_lam, t1)
            uu_lam = t2 if uu_lam is None else ex.Binary("add", uu_lam, t2)
        self.unit_unit_lambda_at = ex.compile_expr(ex.simplify(ee_lam), coords)  # E(E(lambda))
        self.field_unit_lambda_at = ex.compile_expr(ex.simplify(uu_lam), coords)  # U(E(lambda))

        self._ddE_at = None
        self.null_tol = null_tol

    def ddE_at(self, p) -> np.ndarray:
        """Second partials of the unit field: [a,b,k] = d_a d_b E^k."""
        if self._ddE_at is None:
            n = self.manifold.n
            coords = self.manifold.coords
            dd = [
                ex.differentiate(self._dE_exprs[b][k], coords[a])
                for a in range(n)
                for b in range(n)
                for k in range(n)
            ]
            fn = ex.compile_exprs(dd, coords)
            self._ddE_at = lambda pt, n=n, fn=fn: np.array(fn(pt)).reshape(n, n, n)
        return self._ddE_at(p)

    def check_not_null(self, p):
        q = self.norm_sq_at(p)
        if abs(q) <= self.null_tol * metric_scale(self.manifold, p):
            raise NullFieldError(q, p)


def _flat2(rows):
    return [e for row in rows for e in row]


def _vec(fn, n):
    return lambda p: np.array(fn(p), dtype=float)


def _mat(fn, n):
    return lambda p: np.array(fn(p), dtype=float).reshape(n, n)


def nabla_matrix(m: ManifoldSpec, p, field: VectorField, unit: bool = False) -> np.ndarray:
    """Covariant derivative as a matrix N[i,k] = (nabla_{d_i} X)^k."""
    gamma = christoffel(m, p)
    if unit:
        dX = field.dE_at(p)
        X = field.unit_at(p)
    else:
        dX = field.dU_at(p)
        X = field.at(p)
    return dX + np.einsum("kim,m->ik", gamma, X)


def divergence(m: ManifoldSpec, p, field: VectorField, unit: bool = False) -> float:
    """Trace of the covariant derivative (independent of the volume-weight
    route used for the unit-field divergence expression)."""
    return float(np.trace(nabla_matrix(m, p, field, unit=unit).T))


def lie_derivative_metric(m: ManifoldSpec, p, field: VectorField) -> np.ndarray:
    """(L_X g)_ij = g(nabla_i X, d_j) + g(d_i, nabla_j X)."""
    g = metric_at(m, p)
    nab = nabla_matrix(m, p, field)  # [i,k]
    lowered = np.einsum("ik,kj->ij", nab, g)
    return lowered + lowered.T


def div_nabla_unit(m: ManifoldSpec, p, field: VectorField) -> float:
    """div(nabla_E E) assembled from symbolic field derivatives and the
    numeric connection and its partials."""
    gamma = christoffel(m, p)
    dgamma = christoffel_partials(m, p)
    E = field.unit_at(p)
    dE = field.dE_at(p)
    ddE = field.ddE_at(p)
    W = np.einsum("i,ik->k", E, dE) + np.einsum("kim,i,m->k", gamma, E, E)
    t1 = np.einsum("ki,ik->", dE, dE)
    t2 = np.einsum("i,kik->", E, ddE)
    t3 = np.einsum("ki,kim,m->", dE, gamma, E)
    t4 = np.einsum("i,kkim,m->", E, dgamma, E)
    t5 = np.einsum("i,kim,km->", E, gamma, dE)
    t6 = np.einsum("aak,k->", gamma, W)
    return float(t1 + t2 + t3 + t4 + t5 + t6)


# ----------------------------------------------------------------------- frames

@dataclass
class FramePair:
    """Orthonormal frame adapted to a field: unit vector, its orthogonal
    complement, and the signature signs."""

    point: np.ndarray
    E: np.ndarray
    e_perp: np.ndarray  # shape (n-1, n)
    eps: int
    perp_signs: np.ndarray  # shape (n-1,)
    lam: float = 1.0  # norm of the generating field at the point

    def gram_residual(self, g: np.ndarray) -> float:
        vectors = np.vstack([self.E[None, :], self.e_perp])
        signs = np.concatenate([[self.eps], self.perp_signs])
        gram = vectors @ g @ vectors.T
        return float(np.max(np.abs(gram - np.diag(signs))))


def frame_from_vector(m: ManifoldSpec, p, u: np.ndarray, null_tol: float = 1e-10) -> FramePair:
    """Deterministic Gram-Schmidt: coordinate basis vectors in declaration
    order, skipping projections with |squared norm| below 1e-12."""
    g = metric_at(m, p)
    u = np.asarray(u, dtype=float)
    q = float(u @ g @ u)
    scale = metric_scale(m, p)
    if abs(q) <= null_tol * scale * max(1.0, float(u @ u)):
        raise NullFieldError(q, p)
    eps = int(np.sign(q))
    E = u / math.sqrt(abs(q))
    frame = [(E, eps)]
    n = m.n
    for idx in range(n):
        if len(frame) == n:
            break
        w = np.zeros(n)
        w[idx] = 1.0
        for v, sv in frame:
            w = w - sv * float(w @ g @ v) * v
        qq = float(w @ g @ w)
        if abs(qq) < 1e-12 * scale:
            continue
        frame.append((w / math.sqrt(abs(qq)), int(np.sign(qq))))
    if len(frame) < n:
        raise GeometryError(
            f"could not complete an orthonormal frame at {list(p)};"
            f" coordinate basis projections were degenerate"
        )
    perp = np.array([v for v, _ in frame[1:]])
    signs = np.array([s for _, s in frame[1:]], dtype=int)
    return FramePair(point=np.asarray(p, dtype=float), E=E, e_perp=perp, eps=eps,
                     perp_signs=signs)


def orthogonal_frame(m: ManifoldSpec, p, field: VectorField) -> FramePair:
    """Frame adapted to the field at p; raises NullFieldError for (near-)null
    field values, reporting g(U,U)."""
    field.check_not_null(p)
    fp = frame_from_vector(m, p, field.at(p), null_tol=field.null_tol)
    fp.lam = field.lambda_at(p)
    return fp
