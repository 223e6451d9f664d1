"""Per-sample classification of a vector field against the decomposition
hypotheses, with residuals, witnesses, and a chart-scale-normalized tolerance.

A flag is true only when its defining residual stays below tolerance at every
sample; sampling refutes, so verdicts downstream are phrased "consistent
with".  All residuals are divided by the largest |g_ij| at the point before
comparison.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as ex
from .geometry import (
    GeometryError,
    NullFieldError,
    VectorField,
    div_nabla_unit,
    divergence,
    frame_from_vector,
    gradient,
    hessian,
    inverse_metric_at,
    lie_derivative_metric,
    metric_at,
    metric_scale,
    nabla_matrix,
    orthogonal_frame,
    ricci_quadratic,
)
from .manifold import ManifoldSpec

DEFAULT_TOL = 1e-7

FLAG_ORDER = (
    "never_null",
    "unit",
    "pregeodesic",
    "geodesic_unit",
    "irrotational",
    "orth_irrotational",
    "conformal",
    "orth_conformal",
    "parallel",
    "grad_div_unit_parallel",
)


class InconsistentFlagsError(ValueError):
    pass


class EmptySampleError(ValueError):
    pass


class NonUnitFieldError(ValueError):
    pass


class NullGradientError(ValueError):
    pass


@dataclass
class FlagReport:
    value: bool
    max_residual: float
    worst_point: list[float]
    failing: int
    total: int

    @property
    def pattern(self) -> str:
        if self.failing == 0:
            return "holds"
        return "fails everywhere" if self.failing == self.total else "fails somewhere"


@dataclass
class Classification:
    eps: int
    tol: float
    flags: dict[str, FlagReport]
    conformal_factor: list[float]       # a with L_U g = 2 a g
    orth_conformal_factor: list[float]  # rho with (L_U g)|_perp = rho g|_perp
    lambda_values: list[float]
    inconsistencies: list[str] = field(default_factory=list)

    def __getattr__(self, name):
        flags = object.__getattribute__(self, "flags")
        if name in flags:
            return flags[name].value
        raise AttributeError(name)

    def as_dict(self) -> dict:
        return {
            "eps": self.eps,
            "tolerance": self.tol,
            "flags": {
                k: {
                    "value": v.value,
                    "max_residual": v.max_residual,
                    "worst_point": v.worst_point,
                    "pattern": v.pattern,
                }
                for k, v in self.flags.items()
            },
            "inconsistencies": list(self.inconsistencies),
        }


class DecompositionType(str, enum.Enum):
    DIRECT = "direct"
    WARPED = "warped"
    TWISTED = "twisted"
    PARAMETRIZED = "parametrized"


def _lower(g: np.ndarray, vec: np.ndarray) -> np.ndarray:
    return g @ vec


def _flag(residuals, points, tol) -> FlagReport:
    residuals = np.asarray(residuals, dtype=float)
    worst = int(np.argmax(residuals))
    failing = int(np.sum(residuals >= tol))
    return FlagReport(
        value=bool(failing == 0),
        max_residual=float(residuals[worst]),
        worst_point=[float(v) for v in points[worst]],
        failing=failing,
        total=len(residuals),
    )


def classify_field(
    m: ManifoldSpec,
    fld: VectorField,
    samples: Sequence[np.ndarray],
    tol: float = DEFAULT_TOL,
) -> Classification:
    """Evaluate every hypothesis flag at the samples.

    Irrotationality is antisymmetry of the derivative of the one-form
    g(U, .); the orthogonal variants restrict to the frame of the field's
    orthogonal complement."""
    samples = list(samples)
    if not samples:
        raise EmptySampleError("classification needs at least one sample point")
    n = m.n
    res: dict[str, list[float]] = {k: [] for k in FLAG_ORDER}
    a_samples: list[float] = []
    rho_samples: list[float] = []
    lam_samples: list[float] = []
    eps = fld.eps

    for p in samples:
        fld.check_not_null(p)  # null-norm error per precondition
        g = metric_at(m, p)
        gi = inverse_metric_at(m, p)
        scale = metric_scale(m, p)
        U = fld.at(p)
        E = fld.unit_at(p)
        lam = fld.lambda_at(p)
        lam_samples.append(float(lam))
        frame = orthogonal_frame(m, p, fld)
        perp = frame.e_perp
        psigns = frame.perp_signs

        nabU = nabla_matrix(m, p, fld)          # [i,k] = (nabla_i U)^k
        nabE = nabla_matrix(m, p, fld, unit=True)
        nabU_low = nabU @ g                      # [i,j] = g(nabla_i U, d_j)
        lug = nabU_low + nabU_low.T
        dom = fld.domega_at(p)

        res["never_null"].append(0.0 if abs(fld.norm_sq_at(p)) > tol * scale else 1.0)
        res["unit"].append(abs(lam - 1.0))

        w = E @ nabE  # nabla_E E
        res["geodesic_unit"].append(float(np.max(np.abs(_lower(g, w)))) / scale)

        v = U @ nabU  # nabla_U U; pregeodesic iff proportional to U
        v_perp = v - eps * float(_lower(g, v) @ E) * E
        res["pregeodesic"].append(float(np.max(np.abs(_lower(g, v_perp)))) / scale)

        res["irrotational"].append(float(np.max(np.abs(dom))) / scale)
        orth_dom = perp @ dom @ perp.T
        res["orth_irrotational"].append(float(np.max(np.abs(orth_dom))) / scale)

        rho_full = float(np.einsum("ij,ij->", gi, lug)) / n
        res["conformal"].append(float(np.max(np.abs(lug - rho_full * g))) / scale)
        a_samples.append(rho_full / 2.0)

        M = perp @ lug @ perp.T
        rho = float(np.sum(psigns * np.diag(M))) / (n - 1)
        res["orth_conformal"].append(
            float(np.max(np.abs(M - rho * np.diag(psigns.astype(float))))) / scale
        )
        rho_samples.append(rho)

        res["parallel"].append(float(np.max(np.abs(nabU_low))) / scale)

        grad_div = gi @ fld.ddiv_unit_at(p)
        comps = np.array([s * float(_lower(g, grad_div) @ e) for s, e in zip(psigns, perp)])
        res["grad_div_unit_parallel"].append(float(np.max(np.abs(comps))) / scale if n > 1 else 0.0)

    flags = {k: _flag(res[k], samples, tol) for k in FLAG_ORDER}
    cls = Classification(
        eps=eps,
        tol=tol,
        flags=flags,
        conformal_factor=a_samples,
        orth_conformal_factor=rho_samples,
        lambda_values=lam_samples,
    )
    _check_implications(cls)
    return cls


def _check_implications(c: Classification):
    f = c.flags
    rules = [
        ("parallel", "conformal"),
        ("parallel", "geodesic_unit"),
        ("conformal", "orth_conformal"),
        ("irrotational", "orth_irrotational"),
    ]
    for strong, weak in rules:
        if f[strong].value and not f[weak].value:
            c.inconsistencies.append(f"{strong} holds but {weak} fails at the same tolerance")
    if f["parallel"].value and max(abs(a) for a in c.conformal_factor) > math.sqrt(c.tol):
        c.inconsistencies.append("parallel field with non-vanishing conformal factor")


def decomposition_type(c: Classification) -> DecompositionType:
    """Map the flags to the predicted product structure.  With a non-geodesic
    unit field no stronger claim than a parametrized family survives."""
    if c.inconsistencies:
        raise InconsistentFlagsError("; ".join(c.inconsistencies))
    f = c.flags
    if not f["geodesic_unit"].value:
        return DecompositionType.PARAMETRIZED
    if f["parallel"].value:
        return DecompositionType.DIRECT
    if f["irrotational"].value and f["orth_conformal"].value:
        if f["grad_div_unit_parallel"].value:
            return DecompositionType.WARPED
        return DecompositionType.TWISTED
    return DecompositionType.PARAMETRIZED


# -------------------------------------------------------------- nabla fitting

@dataclass
class NablaFit:
    a_samples: list[float]
    b_samples: list[float]
    max_residual: float
    conformal_candidate: bool  # b vanishes at every sample


def nabla_form_fit(
    m: ManifoldSpec, fld: VectorField, samples: Sequence[np.ndarray], tol: float = DEFAULT_TOL
) -> NablaFit:
    """Fit nabla_X U = a X + b g(X,E) E at each sample: a from the orthogonal
    frame directions first, then b from the unit direction (documented order;
    in dimension 2 the two slots would otherwise collide)."""
    a_s: list[float] = []
    b_s: list[float] = []
    resid = 0.0
    n = m.n
    eps = fld.eps
    for p in samples:
        g = metric_at(m, p)
        scale = metric_scale(m, p)
        E = fld.unit_at(p)
        frame = orthogonal_frame(m, p, fld)
        nabU = nabla_matrix(m, p, fld)
        a = sum(
            s * float((e @ nabU) @ g @ e) for s, e in zip(frame.perp_signs, frame.e_perp)
        ) / (n - 1)
        c = eps * float((E @ nabU) @ g @ E)
        b = eps * (c - a)
        lowE = g @ E
        model = a * np.eye(n) + b * np.outer(lowE, E)
        resid = max(resid, float(np.max(np.abs((nabU - model) @ g))) / scale)
        a_s.append(a)
        b_s.append(b)
    return NablaFit(
        a_samples=a_s,
        b_samples=b_s,
        max_residual=resid,
        conformal_candidate=max(abs(b) for b in b_s) < tol,
    )


# ---------------------------------------------------------- hessian criteria

@dataclass
class HessianClass:
    kind: str  # zero | a_times_g | a_g_plus_b_EE | general
    a_samples: list[float]
    b_samples: list[float]
    residuals: dict[str, float]


def hessian_classify(
    m: ManifoldSpec, f: ex.Expr, samples: Sequence[np.ndarray], tol: float = DEFAULT_TOL
) -> HessianClass:
    """Best-fitting shape of the Hessian of f among zero, a*g, and
    a*g + b E* (x) E* with E the unit gradient; ties break toward the more
    special kind."""
    r_zero = r_ag = r_agb = 0.0
    a_ag: list[float] = []
    a_agb: list[float] = []
    b_agb: list[float] = []
    n = m.n
    for p in samples:
        g = metric_at(m, p)
        gi = inverse_metric_at(m, p)
        scale = metric_scale(m, p)
        H = hessian(m, p, f)
        grad = gradient(m, p, f)
        try:
            frame = frame_from_vector(m, p, grad)
        except NullFieldError as err:
            raise NullGradientError(
                f"gradient of the scalar is null at {list(p)}: {err}"
            ) from err
        E, eps = frame.E, frame.eps
        r_zero = max(r_zero, float(np.max(np.abs(H))) / scale)
        a_full = float(np.einsum("ij,ij->", gi, H)) / n
        r_ag = max(r_ag, float(np.max(np.abs(H - a_full * g))) / scale)
        a_ag.append(a_full)
        a_perp = sum(
            s * float(e @ H @ e) for s, e in zip(frame.perp_signs, frame.e_perp)
        ) / (n - 1)
        b = float(E @ H @ E) - a_perp * eps
        lowE = g @ E
        model = a_perp * g + b * np.outer(lowE, lowE)
        r_agb = max(r_agb, float(np.max(np.abs(H - model))) / scale)
        a_agb.append(a_perp)
        b_agb.append(b)
    residuals = {"zero": r_zero, "a_times_g": r_ag, "a_g_plus_b_EE": r_agb}
    if r_zero < tol:
        return HessianClass("zero", [0.0] * len(a_ag), [0.0] * len(a_ag), residuals)
    if r_ag < tol:
        return HessianClass("a_times_g", a_ag, [0.0] * len(a_ag), residuals)
    if r_agb < tol:
        return HessianClass("a_g_plus_b_EE", a_agb, b_agb, residuals)
    return HessianClass("general", a_agb, b_agb, residuals)


# ------------------------------------------------- divergence/Ricci identities

@dataclass
class CurvatureConditionsReport:
    applicable: bool
    div_values: list[float]
    ric_values: list[float]
    div_sign: str
    ric_sign: str
    div_identity_residual: float   # |div U - n E(lambda)|
    ric_identity_residual: float   # |Ric(U) + (n-1) U(E(lambda))|


def _sign_pattern(values, tol) -> str:
    arr = np.asarray(values)
    if np.all(np.abs(arr) <= tol):
        return "zero"
    if np.all(arr >= -tol):
        return "nonnegative"
    if np.all(arr <= tol):
        return "nonpositive"
    return "mixed"


def curvature_conditions(
    m: ManifoldSpec,
    fld: VectorField,
    samples: Sequence[np.ndarray],
    classification: Classification | None = None,
    tol: float = DEFAULT_TOL,
) -> CurvatureConditionsReport:
    """Sign pattern of div U and Ric(U) plus the residuals of the two
    identities these quantities satisfy for irrotational conformal fields
    (div U = n E(lambda), Ric(U) = -(n-1) U(E(lambda)))."""
    if classification is None:
        classification = classify_field(m, fld, samples, tol)
    applicable = classification.flags["irrotational"].value and classification.flags["conformal"].value
    n = m.n
    divs: list[float] = []
    rics: list[float] = []
    r_div = r_ric = 0.0
    for p in samples:
        divU = divergence(m, p, fld)
        ricU = ricci_quadratic(m, p, fld.at(p))
        divs.append(divU)
        rics.append(ricU)
        r_div = max(r_div, abs(divU - n * fld.unit_lambda_at(p)))
        r_ric = max(r_ric, abs(ricU + (n - 1) * fld.field_unit_lambda_at(p)))
    return CurvatureConditionsReport(
        applicable=applicable,
        div_values=divs,
        ric_values=rics,
        div_sign=_sign_pattern(divs, tol),
        ric_sign=_sign_pattern(rics, tol),
        div_identity_residual=r_div if applicable else float("nan"),
        ric_identity_residual=r_ric if applicable else float("nan"),
    )


# -------------------------------------------------------------- Bochner check

@dataclass
class BochnerReport:
    identity_residual: float        # |Ric(E) - (div nabla_E E - E(div E) - |A|^2)|
    trace_residual: float           # |tr A - div E|
    cs_gap_min: float               # min of |A|^2 - (div E)^2/(n-1)
    expansion_condition_min: float  # min of E(div E) + (div E)^2/(n-1)
    ricci_min: float                # min of Ric(E)
    equality_case: bool             # expansion condition is an equality everywhere
    hypotheses_hold: bool           # both inequalities hold at every sample
    leaf_metric_definite: bool
    div_values: list[float]


def bochner_check(
    m: ManifoldSpec,
    fld: VectorField,
    samples: Sequence[np.ndarray],
    tol: float = DEFAULT_TOL,
) -> BochnerReport:
    """Assemble Ric(E) = div(nabla_E E) - E(div E) - |A|^2 from independently
    computed pieces (A(X) = nabla_X E on the orthogonal complement), compare
    against the curvature contraction, and evaluate the expansion inequalities
    E(div E) >= -(div E)^2/(n-1), Ric(E) >= 0 with their Cauchy-Schwarz gap."""
    n = m.n
    ident_res = trace_res = 0.0
    cs_min = exp_min = ric_min = math.inf
    equality = True
    definite = True
    divs: list[float] = []
    for p in samples:
        lam = fld.lambda_at(p)
        if abs(lam - 1.0) > 1e-6:
            raise NonUnitFieldError(f"field is not unit at {list(p)} (lambda={lam})")
        g = metric_at(m, p)
        E = fld.unit_at(p)
        frame = orthogonal_frame(m, p, fld)
        if np.any(frame.perp_signs != frame.perp_signs[0]):
            definite = False
        nabE = nabla_matrix(m, p, fld, unit=True)
        divE = fld.div_unit_at(p)
        divs.append(float(divE))
        EdivE = float(E @ fld.ddiv_unit_at(p))
        dnee = div_nabla_unit(m, p, fld)
        normA = 0.0
        trA = 0.0
        for s, e in zip(frame.perp_signs, frame.e_perp):
            Ae = e @ nabE
            normA += s * float(Ae @ g @ Ae)
            trA += s * float(Ae @ g @ e)
        ricE = ricci_quadratic(m, p, E)
        ident_res = max(ident_res, abs(ricE - (dnee - EdivE - normA)))
        trace_res = max(trace_res, abs(trA - divE))
        gap = normA - divE * divE / (n - 1)
        expansion = EdivE + divE * divE / (n - 1)
        cs_min = min(cs_min, gap)
        exp_min = min(exp_min, expansion)
        ric_min = min(ric_min, ricE)
        if abs(expansion) > tol:
            equality = False
    return BochnerReport(
        identity_residual=ident_res,
        trace_residual=trace_res,
        cs_gap_min=cs_min,
        expansion_condition_min=exp_min,
        ricci_min=ric_min,
        equality_case=equality,
        hypotheses_hold=exp_min >= -tol and ric_min >= -tol,
        leaf_metric_definite=definite,
        div_values=divs,
    )
