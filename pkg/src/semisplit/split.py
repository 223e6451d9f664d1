"""Decomposition verdicts: orchestrate classification and flow evidence,
build the warping table by accumulating the unit-field divergence along the
flow, reconstruct the product metric, and verify it against the original by
pushing a product frame through the flow differential.

Verdicts are phrased "consistent with ... at sampled resolution": sampling
can refute a product structure but never prove one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as ex
from .classify import (
    Classification,
    CurvatureConditionsReport,
    BochnerReport,
    DecompositionType,
    bochner_check,
    classify_field,
    curvature_conditions,
    decomposition_type,
)
from .flow import (
    FlowResult,
    LeafFunctionError,
    MonodromyReport,
    NonClosedOneFormError,
    PeriodReport,
    integrate_flow,
    leaf_return_events,
    monodromy,
    period_group,
)
from .geometry import VectorField, metric_at, metric_scale, orthogonal_frame
from .manifold import ManifoldSpec, SpecValidationError, sample_points


@dataclass
class SplitConfig:
    tol: float = 1e-7
    seed: int = 0
    samples: int = 200
    t_span: tuple[float, float] = (-1.0, 1.0)
    grid_t: int = 21
    grid_leaf: int = 16
    flow_tol: float = 1e-11
    monodromy_samples: int = 8
    monodromy_tol: float = 1e-6
    return_scan_span: float = 8.0  # how far to look for leaf returns
    base_point: tuple[float, ...] | None = None


@dataclass
class BaseDescriptor:
    kind: str  # line | circle | covering-only | unknown
    interval: tuple[float, float] | None = None
    period: float | None = None
    evidence: str = ""


@dataclass
class WarpingTable:
    t_grid: np.ndarray
    leaf_points: np.ndarray         # (n_leaf, n)
    values: np.ndarray              # (n_leaf, n_t), NaN where unreachable
    lambda_ratio: np.ndarray | None  # independent construction at the base sample
    achieved: tuple[float, float]
    leaf_independence: float        # max over leaf of |f(t,x) - f(t,x_ref)|
    construction_agreement: float | None  # max |quadrature f - lambda-ratio f|


@dataclass
class DecompositionResult:
    type: DecompositionType
    base: BaseDescriptor
    leaf_point: list[float]
    leaf_value: float | None
    warping: WarpingTable | None
    leaf_metric_signs: list[int]
    parametrized_gt: np.ndarray | None  # (n_t, n-1, n-1) leaf metric family when read off
    max_residual: float
    rms_residual: float
    nodes_total: int
    nodes_unreachable: int
    verdict_text: str


# ----------------------------------------------------------- leaf point sampling

def unit_field(fld: VectorField) -> VectorField:
    cached = getattr(fld, "_unit_vf", None)
    if cached is None:
        cached = VectorField(fld.manifold, fld.unit_exprs)
        fld._unit_vf = cached
    return cached


def validate_leaf_function(m: ManifoldSpec, fld: VectorField, points, tol=1e-7) -> None:
    """The level sets of the leaf function must be the orthogonal leaves:
    its differential must be parallel to the one-form of the field."""
    if m.leaf_function is None:
        raise LeafFunctionError("no leaf function declared")
    comp = m.compiled()
    for p in points:
        dh = comp.leaf_grad_at(p)
        om = fld.omega_at(p)
        wedge = np.outer(dh, om) - np.outer(om, dh)
        scale = max(np.max(np.abs(dh)) * np.max(np.abs(om)), 1e-30)
        if np.max(np.abs(wedge)) / scale > tol:
            raise SpecValidationError(
                f"leaf function level sets are not orthogonal leaves:"
                f" dh and g(U,.) are not parallel at {list(p)}"
            )


def sample_leaf_points(
    m: ManifoldSpec,
    fld: VectorField,
    base_point: np.ndarray,
    count: int,
    seed: int = 0,
) -> np.ndarray:
    """Points on the leaf through base_point: quasi-random domain draws with
    one coordinate Newton-adjusted onto the leaf level."""
    comp = m.compiled()
    if comp.leaf_at is None:
        raise LeafFunctionError("no leaf function declared")
    base_point = np.asarray(base_point, dtype=float)
    h0 = comp.leaf_at(base_point)
    j = int(np.argmax(np.abs(comp.leaf_grad_at(base_point))))
    out = [base_point.copy()]
    draws = sample_points(m, max(8 * count, 64), seed=seed + 1)
    for draw in draws:
        if len(out) >= count:
            break
        x = draw.copy()
        x[j] = base_point[j]
        ok = False
        for _ in range(40):
            r = comp.leaf_at(x) - h0
            if abs(r) < 1e-12:
                ok = True
                break
            dj = comp.leaf_grad_at(x)[j]
            if abs(dj) < 1e-14:
                break
            x[j] -= r / dj
        if ok and m.in_domain(x):
            out.append(x)
    if len(out) < count:
        raise SpecValidationError(
            f"could only place {len(out)}/{count} samples on the leaf"
        )
    return np.array(out)


# -------------------------------------------------------------------- warping

def _leaf_flows(
    m: ManifoldSpec,
    fld: VectorField,
    leaf_points: np.ndarray,
    t_span: tuple[float, float],
    flow_tol: float,
) -> list[FlowResult]:
    unit = unit_field(fld)
    return [integrate_flow(m, unit, q, t_span, tol=flow_tol) for q in leaf_points]


def construct_warping(
    m: ManifoldSpec,
    fld: VectorField,
    leaf_points: np.ndarray,
    t_grid: np.ndarray,
    flow_tol: float = 1e-11,
    flows: list[FlowResult] | None = None,
) -> WarpingTable:
    """f(t, x) = exp( (accumulated div E along the flow from x) / (n-1) ),
    normalized to 1 on the base leaf.  The divergence is an extra quadrature
    state of the flow integration, so escapes truncate the table."""
    n = m.n
    t_grid = np.asarray(t_grid, dtype=float)
    span = (min(0.0, float(t_grid.min())), max(0.0, float(t_grid.max())))
    if flows is None:
        flows = _leaf_flows(m, fld, leaf_points, span, flow_tol)
    values = np.full((len(leaf_points), len(t_grid)), np.nan)
    for jj, flow in enumerate(flows):
        for kk, t in enumerate(t_grid):
            if flow.covers(t):
                values[jj, kk] = math.exp(flow.quad_at(t) / (n - 1))
    lo = max(f.achieved[0] for f in flows)
    hi = min(f.achieved[1] for f in flows)

    base_flow = flows[0]
    lam0 = fld.lambda_at(np.asarray(leaf_points[0], dtype=float))
    ratio = np.full(len(t_grid), np.nan)
    for kk, t in enumerate(t_grid):
        if base_flow.covers(t):
            ratio[kk] = fld.lambda_at(base_flow.state_at(t)) / lam0
    mask = ~np.isnan(values[0]) & ~np.isnan(ratio)
    agreement = float(np.max(np.abs(values[0][mask] - ratio[mask]))) if mask.any() else None

    ref = values[0]
    diff = np.abs(values - ref[None, :])
    leaf_dep = float(np.nanmax(diff)) if np.isfinite(diff).any() else float("nan")
    return WarpingTable(
        t_grid=t_grid,
        leaf_points=np.asarray(leaf_points, dtype=float),
        values=values,
        lambda_ratio=ratio,
        achieved=(lo, hi),
        leaf_independence=leaf_dep,
        construction_agreement=agreement,
    )


# -------------------------------------------------------------- reconstruction

def reconstruct_and_verify(
    m: ManifoldSpec,
    fld: VectorField,
    leaf_points: np.ndarray,
    t_grid: np.ndarray,
    model: DecompositionType,
    flow_tol: float = 1e-11,
    flows: list[FlowResult] | None = None,
    warping: WarpingTable | None = None,
    base: BaseDescriptor | None = None,
) -> DecompositionResult:
    """Push the product frame (d_t -> unit field, leaf frame -> flow
    differential of leaf vectors) into the manifold at every grid node and
    compare the metric on the images against the model."""
    n = m.n
    t_grid = np.asarray(t_grid, dtype=float)
    span = (min(0.0, float(t_grid.min())), max(0.0, float(t_grid.max())))
    if flows is None:
        flows = _leaf_flows(m, fld, leaf_points, span, flow_tol)
    if warping is None and model in (DecompositionType.WARPED, DecompositionType.TWISTED):
        warping = construct_warping(m, fld, leaf_points, t_grid, flow_tol, flows=flows)
    unit = unit_field(fld)

    sq_sum = 0.0
    sq_n = 0
    max_res = 0.0
    unreachable = 0
    gt_read = np.full((len(t_grid), n - 1, n - 1), np.nan)
    frames = [orthogonal_frame(m, q, fld) for q in leaf_points]
    eps = fld.eps
    for jj, (q, flow) in enumerate(zip(leaf_points, flows)):
        perp = frames[jj].e_perp
        psigns = frames[jj].perp_signs.astype(float)
        g0 = np.diag(psigns)
        for kk, t in enumerate(t_grid):
            if not flow.covers(t):
                unreachable += 1
                continue
            y = flow.state_at(t)
            J = flow.jacobian_at(t)
            g_y = metric_at(m, y)
            scale = metric_scale(m, y)
            Ey = unit.at(y)
            imgs = (J @ perp.T).T  # rows: images of the leaf frame
            G00 = float(Ey @ g_y @ Ey)
            G0a = imgs @ g_y @ Ey
            Gab = imgs @ g_y @ imgs.T
            if model is DecompositionType.DIRECT:
                target = g0
            elif model in (DecompositionType.WARPED, DecompositionType.TWISTED):
                f_row = warping.values[0 if model is DecompositionType.WARPED else jj]
                f = f_row[kk]
                if math.isnan(f):
                    unreachable += 1
                    continue
                target = f * f * g0
            else:  # parametrized: leaf block read off, only block structure checked
                target = Gab
                if jj == 0:
                    gt_read[kk] = Gab
            block = np.abs(Gab - target) / scale
            res = max(abs(G00 - eps) / scale, float(np.max(np.abs(G0a))) / scale,
                      float(np.max(block)) if block.size else 0.0)
            max_res = max(max_res, res)
            sq_sum += res * res
            sq_n += 1

    lo = max(f.achieved[0] for f in flows)
    hi = min(f.achieved[1] for f in flows)
    if base is None:
        base = BaseDescriptor(kind="line", interval=(lo, hi))
    elif base.kind == "line" and base.interval is None:
        base.interval = (lo, hi)
    comp = m.compiled()
    leaf_value = comp.leaf_at(leaf_points[0]) if comp.leaf_at is not None else None
    verdict_text = (
        f"consistent with a {model.value} product over a {base.kind} base"
        f" at sampled resolution (max pullback residual {max_res:.3e})"
    )
    return DecompositionResult(
        type=model,
        base=base,
        leaf_point=[float(v) for v in leaf_points[0]],
        leaf_value=leaf_value,
        warping=warping,
        leaf_metric_signs=[int(s) for s in frames[0].perp_signs],
        parametrized_gt=gt_read if model is DecompositionType.PARAMETRIZED else None,
        max_residual=max_res,
        rms_residual=math.sqrt(sq_sum / sq_n) if sq_n else float("nan"),
        nodes_total=len(leaf_points) * len(t_grid),
        nodes_unreachable=unreachable,
        verdict_text=verdict_text,
    )


# ------------------------------------------------------------------ full report

@dataclass
class SplitReport:
    verdict: str
    verdict_detail: str
    classification: Classification
    decomposition_type: DecompositionType | None
    base: BaseDescriptor
    curvature: CurvatureConditionsReport | None
    bochner: BochnerReport | None
    decomposition: DecompositionResult | None
    returns: list[tuple[float, list[float]]]
    returns_status: str  # none | returned | indeterminate
    monodromy: MonodromyReport | None
    periods: PeriodReport | None
    errors: list[str] = field(default_factory=list)


def _pick_base_point(m: ManifoldSpec, config: SplitConfig) -> np.ndarray:
    if config.base_point is not None:
        return np.asarray(config.base_point, dtype=float)
    return sample_points(m, 1, seed=config.seed)[0]


def split_report(m: ManifoldSpec, fld: VectorField, config: SplitConfig | None = None) -> SplitReport:
    """Full pipeline: classify, decide the decomposition type, look for leaf
    returns and monodromy, construct and verify the warping, and integrate the
    declared loop periods.  Module errors are aggregated into the report."""
    config = config or SplitConfig()
    samples = sample_points(m, config.samples, seed=config.seed)
    errors: list[str] = []

    cls = classify_field(m, fld, samples, tol=config.tol)
    dtype = None
    try:
        dtype = decomposition_type(cls)
    except ValueError as err:
        errors.append(f"decomposition type: {err}")

    curv = curvature_conditions(m, fld, samples[: min(64, len(samples))],
                                classification=cls, tol=config.tol)
    boch = None
    if cls.flags["unit"].value:
        boch = bochner_check(m, fld, samples[: min(64, len(samples))], tol=config.tol)

    geo_ok = cls.flags["geodesic_unit"].value
    base = BaseDescriptor(kind="unknown")
    returns: list[tuple[float, list[float]]] = []
    returns_status = "indeterminate"
    mono = None
    unit = unit_field(fld)
    base_point = _pick_base_point(m, config)

    if m.leaf_function is not None and geo_ok:
        try:
            validate_leaf_function(m, fld, samples[: min(32, len(samples))], tol=config.tol)
            scan = (-config.return_scan_span, config.return_scan_span)
            base_flow = integrate_flow(m, unit, base_point, scan, tol=config.flow_tol)
            events = leaf_return_events(m, base_flow)
            returns = [(t, [float(v) for v in p]) for t, p in events]
            positive = [t for t, _ in returns if t > 0]
            if positive:
                returns_status = "returned"
                t0 = min(positive)
                leaf_pts = sample_leaf_points(
                    m, fld, base_point, config.monodromy_samples, seed=config.seed
                )
                mono = monodromy(m, unit, leaf_pts, t0, tol=config.monodromy_tol,
                                 flow_tol=config.flow_tol)
                if mono.verdict == "identity":
                    base = BaseDescriptor(
                        kind="circle", period=float(np.mean(mono.per_sample_times)),
                        evidence="leaf returns with identity monodromy at all samples",
                    )
                else:
                    base = BaseDescriptor(
                        kind="covering-only",
                        period=t0,
                        evidence="periodic integral curves but nontrivial monodromy",
                    )
            else:
                returns_status = "none"
                base = BaseDescriptor(
                    kind="line",
                    evidence="no leaf return detected over the scanned span",
                )
        except (LeafFunctionError, SpecValidationError) as err:
            errors.append(f"leaf returns: {err}")

    periods = None
    if m.loops:
        try:
            periods = period_group(m, fld, closure_samples=samples[: min(32, len(samples))])
        except (NonClosedOneFormError, SpecValidationError) as err:
            errors.append(f"periods: {err}")

    if base.kind == "unknown" and geo_ok:
        if periods is not None and periods.classification == "trivial":
            base = BaseDescriptor(
                kind="line",
                evidence="declared loop periods all vanish: the field is a gradient",
            )
        elif m.leaf_function is None and not m.loops:
            base = BaseDescriptor(
                kind="line",
                evidence="no loops declared (treated as trivial first homology)",
            )

    deco = None
    if geo_ok and dtype is not None and m.leaf_function is not None and base.kind != "unknown":
        try:
            t_grid = np.linspace(config.t_span[0], config.t_span[1], config.grid_t)
            leaf_pts = sample_leaf_points(m, fld, base_point, config.grid_leaf,
                                          seed=config.seed)
            flows = _leaf_flows(m, fld, leaf_pts, (min(0.0, config.t_span[0]),
                                                   max(0.0, config.t_span[1])),
                                config.flow_tol)
            warp = None
            if dtype in (DecompositionType.WARPED, DecompositionType.TWISTED):
                warp = construct_warping(m, fld, leaf_pts, t_grid, config.flow_tol,
                                         flows=flows)
            deco = reconstruct_and_verify(
                m, fld, leaf_pts, t_grid, dtype,
                flow_tol=config.flow_tol, flows=flows, warping=warp, base=base,
            )
        except (SpecValidationError, LeafFunctionError, ValueError) as err:
            errors.append(f"reconstruction: {err}")

    verdict, detail = _final_verdict(cls, dtype, base, returns_status, mono, periods, deco)
    return SplitReport(
        verdict=verdict,
        verdict_detail=detail,
        classification=cls,
        decomposition_type=dtype,
        base=base,
        curvature=curv,
        bochner=boch,
        decomposition=deco,
        returns=returns,
        returns_status=returns_status,
        monodromy=mono,
        periods=periods,
        errors=errors,
    )


def _final_verdict(cls, dtype, base, returns_status, mono, periods, deco):
    if not cls.flags["geodesic_unit"].value:
        return (
            "no-split-evidence",
            "the unit field is not geodesic, so its flow does not take leaves"
            " into leaves and no product model applies",
        )
    if dtype is None:
        return "indeterminate", "classification flags were inconsistent"
    if base.kind == "circle":
        return (
            f"S1xL {dtype.value}",
            f"consistent with a {dtype.value} product over a circle of period"
            f" {base.period:.9g} at sampled resolution",
        )
    if base.kind == "covering-only":
        return (
            "covering-only",
            "periodic integral curves but nontrivial monodromy: the manifold is"
            " covered by, but not isometric to, a circle product",
        )
    if base.kind == "line":
        extra = ""
        if deco is not None and deco.base.interval is not None:
            a, b = deco.base.interval
            extra = f"; achieved base interval ({a:.6g}, {b:.6g})"
        return (
            f"RxL {dtype.value}",
            f"consistent with a {dtype.value} product over a line/interval base"
            f" at sampled resolution ({base.evidence}){extra}",
        )
    # base unknown
    if periods is not None and periods.classification in ("discrete", "dense"):
        return (
            "no-split-evidence",
            f"leaf-return detection {returns_status}; period subgroup"
            f" {periods.classification}: a global product is not evidenced",
        )
    return (
        "indeterminate",
        f"leaf-return detection {returns_status} and loop periods unavailable",
    )
